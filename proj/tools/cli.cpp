#include "cli.hpp"

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "teleguard/common/errors.hpp"
#include "teleguard/common/hash.hpp"
#include "teleguard/common/log.hpp"
#include "teleguard/data/dataset_io.hpp"
#include "teleguard/data/sampler.hpp"
#include "teleguard/eval/bundle.hpp"
#include "teleguard/eval/report.hpp"
#include "teleguard/service/server.hpp"

namespace teleguard::cli {
namespace fs = std::filesystem;
namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("error writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

struct ManifestInput {
  std::string name;
  std::string path;
};

void write_manifest(const fs::path& dir, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& args,
                    const std::vector<ManifestInput>& inputs, const ResolvedConfig& cfg) {
  ConfigMap m = ConfigMap::parse(cfg.canonical_text());
  m.set("manifest.command", command);
  for (const auto& [k, v] : args) m.set("manifest.arg." + k, v);
  for (const auto& in : inputs) {
    m.set("manifest.input." + in.name, in.path);
    m.set("manifest.input." + in.name + ".sha256", sha256_file(in.path));
  }
  write_atomic(dir / "manifest.txt", m.to_text());
}

ResolvedConfig resolve_with(const CommonOptions& options, const std::string& seed_key,
                            const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  ConfigMap map = load_config(options);
  if (options.seed) map.set(seed_key, std::to_string(*options.seed));
  for (const auto& [k, v] : extra) map.set(k, v);
  return resolve_config(map);
}

void check_dataset_matches(const data::Dataset& ds, const ResolvedConfig& cfg) {
  if (ds.obs_dim != cfg.world.obs_dim() || ds.act_dim != cfg.world.act_dim()) {
    throw ValidationError("dataset dimensions (obs " + std::to_string(ds.obs_dim) + ", act " +
                          std::to_string(ds.act_dim) + ") do not match the world config (obs " +
                          std::to_string(cfg.world.obs_dim()) + ", act " +
                          std::to_string(cfg.world.act_dim()) + ")");
  }
  for (const auto& t : ds.trajectories) {
    if (t.meta.dt != cfg.world.dt) {
      throw ValidationError("dataset was recorded at dt=" + format_double(t.meta.dt) +
                            " but world.dt=" + format_double(cfg.world.dt));
    }
  }
}

void print_balance(const data::Dataset& ds) {
  std::map<std::string, std::pair<int, int>> per_kind;
  for (const auto& t : ds.trajectories) {
    auto& c = per_kind[t.meta.operator_kind];
    (t.outcome == data::Outcome::kSuccess ? c.first : c.second)++;
  }
  std::cout << "trajectories: " << ds.trajectories.size()
            << " (success " << ds.count(data::Outcome::kSuccess) << ", failure "
            << ds.count(data::Outcome::kFailure) << "), transitions: " << ds.num_transitions()
            << "\n";
  for (const auto& [kind, c] : per_kind) {
    std::cout << "  " << kind << ": success " << c.first << ", failure " << c.second << "\n";
  }
}

template <typename Entry, typename Fn>
std::string curve_jsonl(const std::vector<Entry>& log, Fn&& fields) {
  std::string out;
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    fields(j, e.terms);
    out += j.dump() + "\n";
  }
  return out;
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

std::string ResolvedConfig::canonical_text() const {
  ConfigMap m;
  std::vector<std::string> kinds;
  for (auto k : data.operators) kinds.push_back(sim::to_string(k));
  std::string joined;
  for (std::size_t i = 0; i < kinds.size(); ++i) joined += (i ? "," : "") + kinds[i];
  m.set("data.episodes", std::to_string(data.episodes));
  m.set("data.operators", joined);
  m.set("data.seed", std::to_string(data.seed));
  world.to_config(m);
  op.to_config(m);
  critic.to_config(m);
  actor.to_config(m);
  assist.to_config(m);
  eval.to_config(m);
  service.to_config(m);
  return m.to_text();
}

ConfigMap load_config(const CommonOptions& options) {
  ConfigMap map;
  if (!options.config.empty()) {
    if (!fs::exists(options.config)) throw ValidationError("config file not found: " + options.config);
    map = ConfigMap::load(options.config);
  }
  for (const auto& o : options.overrides) map.apply_override(o);
  return map;
}

ResolvedConfig resolve_config(const ConfigMap& input) {
  ResolvedConfig c;
  c.map = input;
  for (const auto& [key, value] : c.map.entries()) {
    if (key.rfind("manifest.", 0) == 0) (void)c.map.get_string(key, "");
  }
  const ConfigMap& m = c.map;
  c.data.episodes = static_cast<int>(m.get_int("data.episodes", c.data.episodes));
  if (c.data.episodes < 0) throw ValidationError("data.episodes must be >= 0");
  const auto kinds = split(m.get_string("data.operators", "expert,noisy,biased"), ',');
  c.data.operators.clear();
  for (const auto& k : kinds) c.data.operators.push_back(sim::parse_operator_kind(k));
  if (c.data.operators.empty()) throw ValidationError("data.operators must name at least one kind");
  c.data.seed = m.get_uint("data.seed", c.data.seed);
  c.world = sim::WorldConfig::from_config(m);
  c.op = sim::OperatorConfig::from_config(m);
  c.critic = learn::CriticConfig::from_config(m);
  c.actor = learn::ActorConfig::from_config(m);
  c.assist = assist::AssistConfig::from_config(m);
  c.eval = eval::ExperimentSpec::from_config(m);
  c.service = service::SessionConfig::from_config(m);
  m.ensure_all_consumed();
  return c;
}

int gen_data(const CommonOptions& options, std::optional<int> episodes) {
  std::vector<std::pair<std::string, std::string>> extra;
  if (episodes) extra.emplace_back("data.episodes", std::to_string(*episodes));
  const ResolvedConfig cfg = resolve_with(options, "data.seed", extra);
  const fs::path dir = prepare_out(options.out);
  const sim::World world(cfg.world);
  std::vector<sim::OperatorConfig> ops;
  for (auto kind : cfg.data.operators) {
    sim::OperatorConfig op = cfg.op;
    op.kind = kind;
    ops.push_back(op);
  }
  data::Dataset ds;
  ds.obs_dim = cfg.world.obs_dim();
  ds.act_dim = cfg.world.act_dim();
  ds.trajectories =
      data::generate_trajectories(world, ops, cfg.data.episodes, cfg.data.seed, cfg.critic.horizon);
  print_balance(ds);
  if (ds.trajectories.empty()) {
    spdlog::warn("gen-data: zero episodes requested; writing an empty dataset");
  } else if (ds.count(data::Outcome::kSuccess) == 0) {
    std::cerr << "error: no successful episodes were generated; check operator and world settings\n";
    return kRuntime;
  }
  const fs::path path = dir / "dataset.tgds";
  const fs::path tmp = path.string() + ".partial";
  data::save_dataset(ds, tmp);
  fs::rename(tmp, path);
  write_manifest(dir, "gen-data", {{"episodes", std::to_string(cfg.data.episodes)}}, {}, cfg);
  std::cout << "wrote " << path.string() << "\n";
  return kOk;
}

int train_critic(const CommonOptions& options, const std::string& dataset_path) {
  const ResolvedConfig cfg = resolve_with(options, "critic.seed");
  const data::Dataset ds = data::load_dataset(dataset_path);
  check_dataset_matches(ds, cfg);
  const fs::path dir = prepare_out(options.out);
  const auto table = data::TransitionTable::from_trajectories(ds.trajectories, cfg.critic.horizon);
  auto result = learn::train_critic(table, cfg.critic, cfg.world.command_max);
  result.model.dt = cfg.world.dt;
  write_atomic(dir / "critic.ckpt", result.model.serialize());
  write_atomic(dir / "critic_log.jsonl",
               curve_jsonl(result.log, [](auto& j, const learn::CriticLossTerms& t) {
                 j["td"] = t.td;
                 j["penalty"] = t.penalty;
                 j["bce"] = t.bce;
                 j["total"] = t.total;
               }));
  write_manifest(dir, "train-critic", {}, {{"dataset", dataset_path}}, cfg);
  const auto& c = result.model.calibration();
  std::cout << "critic: q_min=" << c.q_min << " q_max=" << c.q_max << " threshold=" << c.threshold
            << "\nwrote " << (dir / "critic.ckpt").string() << "\n";
  return kOk;
}

int train_actor(const CommonOptions& options, const std::string& dataset_path,
                const std::string& critic_path) {
  const ResolvedConfig cfg = resolve_with(options, "actor.seed");
  const data::Dataset ds = data::load_dataset(dataset_path);
  check_dataset_matches(ds, cfg);
  eval::ModelBundle bundle = eval::load_bundle(critic_path, "");
  const learn::CriticModel& critic = *bundle.critic;
  if (!critic.calibration().calibrated) throw ValidationError("critic checkpoint is not calibrated");
  if (critic.obs_dim() != ds.obs_dim || critic.act_dim() != ds.act_dim) {
    throw ValidationError("critic dimensions do not match the dataset");
  }
  if (critic.command_max() != cfg.world.command_max) {
    throw ValidationError("critic command_max does not match world.command_max");
  }
  const fs::path dir = prepare_out(options.out);
  const std::string critic_hash = sha256_hex(critic.serialize());
  const auto table = data::TransitionTable::from_trajectories(ds.trajectories, cfg.critic.horizon);
  auto result = learn::train_actor(table, critic, cfg.actor, cfg.world.command_max);
  if (sha256_hex(critic.serialize()) != critic_hash) {
    throw std::logic_error("critic changed during actor training");
  }
  result.model.dt = cfg.world.dt;
  write_atomic(dir / "actor.ckpt", result.model.serialize());
  write_atomic(dir / "actor_log.jsonl",
               curve_jsonl(result.log, [](auto& j, const learn::ActorLossTerms& t) {
                 j["value"] = t.value;
                 j["anchor"] = t.anchor;
                 j["total"] = t.total;
               }));
  write_manifest(dir, "train-actor", {}, {{"dataset", dataset_path}, {"critic", critic_path}}, cfg);
  std::cout << "wrote " << (dir / "actor.ckpt").string() << "\n";
  return kOk;
}

int evaluate(const CommonOptions& options, const std::string& critic_path,
             const std::string& actor_path, const std::vector<std::string>& mode_names,
             std::optional<int> episodes) {
  std::vector<std::pair<std::string, std::string>> extra;
  if (episodes) extra.emplace_back("eval.episodes", std::to_string(*episodes));
  const ResolvedConfig cfg = resolve_with(options, "eval.seed", extra);
  std::vector<assist::AssistMode> modes;
  for (const auto& name : mode_names) modes.push_back(assist::parse_assist_mode(name));
  if (modes.empty()) {
    modes.push_back(assist::AssistMode::kOff);
    if (!actor_path.empty()) modes.push_back(assist::AssistMode::kStatic);
    if (!actor_path.empty() && !critic_path.empty()) modes.push_back(assist::AssistMode::kValue);
  }
  // Every precondition is checked before any episode runs.
  for (auto mode : modes) {
    if (mode != assist::AssistMode::kOff && actor_path.empty()) {
      throw ValidationError("mode '" + assist::to_string(mode) + "' requires --actor");
    }
    if (mode == assist::AssistMode::kValue && critic_path.empty()) {
      throw ValidationError("mode 'value' requires --critic");
    }
  }
  const eval::ModelBundle bundle = eval::load_bundle(critic_path, actor_path);
  std::vector<eval::ExperimentSpec> specs;
  for (auto mode : modes) {
    eval::ExperimentSpec spec = cfg.eval;
    spec.mode = mode;
    eval::validate_models(spec, bundle.view());
    specs.push_back(spec);
  }
  const fs::path dir = prepare_out(options.out);
  std::vector<eval::ExperimentReport> reports;
  for (const auto& spec : specs) reports.push_back(eval::run_experiment(spec, bundle.view()));
  eval::render_reports(reports, dir);
  std::vector<ManifestInput> inputs;
  if (!critic_path.empty()) inputs.push_back({"critic", critic_path});
  if (!actor_path.empty()) inputs.push_back({"actor", actor_path});
  std::string mode_list;
  for (std::size_t i = 0; i < modes.size(); ++i) mode_list += (i ? "," : "") + assist::to_string(modes[i]);
  write_manifest(dir, "evaluate", {{"modes", mode_list}}, inputs, cfg);
  std::cout << eval::report_table(reports);
  const auto check = eval::check_ordering(reports);
  if (check.complete) {
    std::cout << "ordering value > static > off: " << (check.holds() ? "PASS" : "FAIL")
              << " (value>static " << check.value_over_static << ", static>off "
              << check.static_over_off << ", value/off intervals disjoint "
              << check.value_off_disjoint << ")\n";
  } else {
    std::cout << "ordering check skipped: needs off, static and value modes\n";
  }
  return kOk;
}

int inspect(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::string head(8, '\0');
  in.read(head.data(), 8);
  head.resize(static_cast<std::size_t>(in.gcount()));
  in.close();
  if (head.rfind("TGDS", 0) == 0) {
    const data::Dataset ds = data::load_dataset(path);
    std::cout << "dataset " << path << "\nobs_dim: " << ds.obs_dim << "\nact_dim: " << ds.act_dim
              << "\n";
    print_balance(ds);
  } else if (head == "TGCRITIC") {
    const auto m = learn::CriticModel::load(path);
    const auto& c = m.calibration();
    std::cout << "critic " << path << "\nobs_dim: " << m.obs_dim() << "\nact_dim: " << m.act_dim()
              << "\ncommand_max: " << m.command_max() << "\nhorizon: " << m.horizon
              << "\ngamma: " << m.gamma << "\ndt: " << m.dt << "\ncalibrated: " << c.calibrated
              << "\nq_min: " << c.q_min << "\nq_max: " << c.q_max << "\nthreshold: " << c.threshold
              << "\nparameters: " << m.parameters().size() << "\n";
  } else if (head == "TGPOLICY") {
    const auto m = learn::ActorModel::load(path);
    std::cout << "actor " << path << "\nobs_dim: " << m.obs_dim() << "\nact_dim: " << m.act_dim()
              << "\ncommand_max: " << m.command_max() << "\ndt: " << m.dt
              << "\nparameters: " << m.parameters().size() << "\n";
  } else {
    throw ValidationError("unrecognized file type: " + path);
  }
  std::cout << "sha256: " << sha256_file(path) << "\n";
  return kOk;
}

int merge(const std::string& out, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw ValidationError("merge needs at least one input dataset");
  data::Dataset merged;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    data::Dataset ds = data::load_dataset(inputs[i]);
    if (i == 0) {
      merged.obs_dim = ds.obs_dim;
      merged.act_dim = ds.act_dim;
    } else if (ds.obs_dim != merged.obs_dim || ds.act_dim != merged.act_dim) {
      throw ValidationError("cannot merge datasets with different dimensions: " + inputs[i]);
    }
    for (auto& t : ds.trajectories) merged.trajectories.push_back(std::move(t));
  }
  const fs::path path(out);
  if (path.has_parent_path()) prepare_out(path.parent_path().string());
  const fs::path tmp = path.string() + ".partial";
  data::save_dataset(merged, tmp);
  fs::rename(tmp, path);
  print_balance(merged);
  std::cout << "wrote " << path.string() << "\n";
  return kOk;
}

int serve(const CommonOptions& options, const std::string& critic_path,
          const std::string& actor_path, std::optional<int> port, const std::string& host,
          bool lockstep) {
  const ResolvedConfig cfg = resolve_with(options, "service.seed");
  const eval::ModelBundle bundle = eval::load_bundle(critic_path, actor_path);
  eval::ExperimentSpec check = cfg.eval;
  check.mode = cfg.service.mode;
  eval::validate_models(check, bundle.view());
  service::ServerOptions server_options;
  server_options.host = host;
  server_options.port = port.value_or(7400);
  server_options.lockstep = lockstep;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::Server server(service::ServoSession(cfg.service, bundle.view()), server_options,
                         cfg.canonical_text());
  server.start();
  std::cout << "listening on " << host << ":" << server.port() << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  const auto j = server.jitter();
  std::cout << "stopped after " << server.ticks() << " ticks; period jitter p99 " << j.p99 * 1e3
            << " ms\n";
  return kOk;
}

int run(int argc, const char* const* argv) {
  init_logging_from_env();
  CLI::App app{"teleguard: value-guided assistance pipeline"};
  app.require_subcommand(1);

  auto add_common = [](CLI::App* sub, CommonOptions& o) {
    sub->add_option("--config", o.config, "key=value config file");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "seed for this stage");
    sub->add_option("--set", o.overrides, "override KEY=VALUE (repeatable)");
  };

  CommonOptions gen_o, critic_o, actor_o, eval_o, serve_o;
  std::optional<int> gen_episodes, eval_episodes, port;
  std::string dataset, critic, actor, inspect_path, merge_out, host = "127.0.0.1";
  std::vector<std::string> modes, merge_inputs;
  bool lockstep = false;

  auto* gen = app.add_subcommand("gen-data", "generate an offline dataset with scripted operators");
  add_common(gen, gen_o);
  gen->add_option("--episodes", gen_episodes, "episodes per operator kind");

  auto* tc = app.add_subcommand("train-critic", "train the critic on a dataset");
  add_common(tc, critic_o);
  tc->add_option("--dataset", dataset, "dataset file")->required();

  auto* ta = app.add_subcommand("train-actor", "train the actor against a frozen critic");
  add_common(ta, actor_o);
  ta->add_option("--dataset", dataset, "dataset file")->required();
  ta->add_option("--critic", critic, "critic checkpoint")->required();

  auto* ev = app.add_subcommand("evaluate", "run closed-loop experiments");
  add_common(ev, eval_o);
  ev->add_option("--critic", critic, "critic checkpoint");
  ev->add_option("--actor", actor, "actor checkpoint");
  ev->add_option("--mode", modes, "off, static or value (repeatable; default: all available)");
  ev->add_option("--episodes", eval_episodes, "episodes per mode");

  auto* in = app.add_subcommand("inspect", "summarize a dataset or checkpoint");
  in->add_option("path", inspect_path, "file to inspect")->required();

  auto* mg = app.add_subcommand("merge", "concatenate datasets");
  mg->add_option("--out", merge_out, "output dataset file")->required();
  mg->add_option("inputs", merge_inputs, "input datasets")->required();

  auto* sv = app.add_subcommand("serve", "run the interactive teleoperation service");
  add_common(sv, serve_o);
  sv->add_option("--critic", critic, "critic checkpoint");
  sv->add_option("--actor", actor, "actor checkpoint");
  sv->add_option("--port", port, "TCP port (default 7400)");
  sv->add_option("--host", host, "listen address");
  sv->add_flag("--lockstep", lockstep, "advance one tick per driver command");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  try {
    if (gen->parsed()) return gen_data(gen_o, gen_episodes);
    if (tc->parsed()) return train_critic(critic_o, dataset);
    if (ta->parsed()) return train_actor(actor_o, dataset, critic);
    if (ev->parsed()) return evaluate(eval_o, critic, actor, modes, eval_episodes);
    if (in->parsed()) return inspect(inspect_path);
    if (mg->parsed()) return merge(merge_out, merge_inputs);
    if (sv->parsed()) return serve(serve_o, critic, actor, port, host, lockstep);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const CorruptFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const DivergenceError& e) {
    std::cerr << "error: training diverged: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kValidation;
}

}  // namespace teleguard::cli
