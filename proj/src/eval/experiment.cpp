#include "teleguard/eval/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "teleguard/common/errors.hpp"
#include "teleguard/common/random.hpp"
#include "teleguard/learn/critic.hpp"

namespace teleguard::eval {

double ExperimentSpec::resolved_epsilon() const {
  return epsilon < 0 ? 0.1 * world.command_max : epsilon;
}

void ExperimentSpec::validate() const {
  world.validate();
  op.validate();
  assist.validate();
  if (episodes < 1) throw ValidationError("eval: episodes must be >= 1");
  if (workers < 0) throw ValidationError("eval: workers must be >= 0");
  if (trace_episodes < 0) throw ValidationError("eval: trace_episodes must be >= 0");
  if (bootstrap_resamples < 1) throw ValidationError("eval: bootstrap_resamples must be >= 1");
  if (std::abs(assist.dt_servo - world.dt) > 1e-12) {
    throw ValidationError("eval: assist.dt_servo must equal world.dt");
  }
}

ExperimentSpec ExperimentSpec::from_config(const ConfigMap& map) {
  ExperimentSpec s;
  s.world = sim::WorldConfig::from_config(map);
  s.op = sim::OperatorConfig::from_config(map);
  s.assist = assist::AssistConfig::from_config(map);
  s.mode = assist::parse_assist_mode(map.get_string("eval.mode", assist::to_string(s.mode)));
  s.episodes = static_cast<int>(map.get_int("eval.episodes", s.episodes));
  s.seed = map.get_uint("eval.seed", s.seed);
  s.epsilon = map.get_double("eval.epsilon", s.epsilon);
  s.workers = static_cast<int>(map.get_int("eval.workers", s.workers));
  s.trace_episodes = static_cast<int>(map.get_int("eval.trace_episodes", s.trace_episodes));
  s.bootstrap_resamples =
      static_cast<int>(map.get_int("eval.bootstrap_resamples", s.bootstrap_resamples));
  s.validate();
  return s;
}

void ExperimentSpec::to_config(ConfigMap& map) const {
  world.to_config(map);
  op.to_config(map);
  assist.to_config(map);
  map.set("eval.mode", assist::to_string(mode));
  map.set("eval.episodes", std::to_string(episodes));
  map.set("eval.seed", std::to_string(seed));
  map.set("eval.epsilon", format_double(epsilon));
  map.set("eval.workers", std::to_string(workers));
  map.set("eval.trace_episodes", std::to_string(trace_episodes));
  map.set("eval.bootstrap_resamples", std::to_string(bootstrap_resamples));
}

void validate_models(const ExperimentSpec& spec, Models models) {
  const auto& w = spec.world;
  auto check_dt = [&](double model_dt, const char* what) {
    if (model_dt > 0 && std::abs(model_dt - w.dt) > 1e-12) {
      throw ValidationError(std::string(what) + " was trained at dt=" + format_double(model_dt) +
                            " but world.dt=" + format_double(w.dt));
    }
  };
  if (spec.mode != assist::AssistMode::kOff && !models.actor) {
    throw ValidationError("mode '" + assist::to_string(spec.mode) + "' requires an actor checkpoint");
  }
  if (spec.mode == assist::AssistMode::kValue && !models.critic) {
    throw ValidationError("mode 'value' requires a critic checkpoint");
  }
  if (models.critic) {
    const auto& c = *models.critic;
    if (c.obs_dim() != w.obs_dim() || c.act_dim() != w.act_dim()) {
      throw ValidationError("critic dimensions do not match the world config");
    }
    if (c.command_max() != w.command_max) {
      throw ValidationError("critic command_max does not match world.command_max");
    }
    if (!c.calibration().calibrated) throw ValidationError("critic checkpoint is not calibrated");
    check_dt(c.dt, "critic");
  }
  if (models.actor) {
    const auto& a = *models.actor;
    if (a.obs_dim() != w.obs_dim() || a.act_dim() != w.act_dim()) {
      throw ValidationError("actor dimensions do not match the world config");
    }
    if (a.command_max() != w.command_max) {
      throw ValidationError("actor command_max does not match world.command_max");
    }
    check_dt(a.dt, "actor");
  }
}

Interval bootstrap_mean(std::span<const double> values, int resamples, std::uint64_t seed) {
  Interval out;
  if (values.empty()) return out;
  const auto n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(n);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[pick(rng)];
    m = s / static_cast<double>(n);
  }
  out.lo = learn::percentile(means, 2.5);
  out.hi = learn::percentile(means, 97.5);
  return out;
}

Aggregates compute_aggregates(std::span<const EpisodeSummary> episodes, double epsilon,
                              int resamples, std::uint64_t seed) {
  Aggregates a;
  a.episodes = static_cast<int>(episodes.size());
  std::vector<double> success, times, deviation, gain;
  std::int64_t ticks = 0;
  double transparent_ticks = 0.0;
  for (const auto& e : episodes) {
    success.push_back(e.success ? 1.0 : 0.0);
    if (e.success) {
      ++a.successes;
      times.push_back(e.duration);
    } else {
      ++a.failures;
    }
    deviation.push_back(e.mean_deviation);
    gain.push_back(e.mean_g);
    ticks += e.steps;
    transparent_ticks += e.transparent_fraction * e.steps;
    a.max_abs_torque = std::max(a.max_abs_torque, e.max_abs_torque);
  }
  a.success_rate = bootstrap_mean(success, resamples, derive_seed(seed, 1));
  a.completion_time = bootstrap_mean(times, resamples, derive_seed(seed, 2));
  a.mean_deviation = bootstrap_mean(deviation, resamples, derive_seed(seed, 3));
  a.mean_g = bootstrap_mean(gain, resamples, derive_seed(seed, 4));
  a.transparent_fraction = ticks > 0 ? transparent_ticks / static_cast<double>(ticks) : 0.0;
  a.within_epsilon = a.mean_deviation.mean <= epsilon;
  return a;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, Models models) {
  spec.validate();
  validate_models(spec, models);
  const sim::World world(spec.world);

  ExperimentReport report;
  report.mode = assist::to_string(spec.mode);
  report.operator_kind = sim::to_string(spec.op.kind);
  report.seed = spec.seed;
  report.epsilon = spec.resolved_epsilon();
  report.dt = spec.world.dt;
  report.episodes.resize(spec.episodes);
  const int n_traces = std::min(spec.trace_episodes, spec.episodes);
  report.traces.resize(n_traces);

  int workers = spec.workers > 0 ? spec.workers
                                 : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, spec.episodes);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (int i = next++; i < spec.episodes; i = next++) {
      try {
        EpisodeTrace* trace = i < n_traces ? &report.traces[i] : nullptr;
        report.episodes[i] = run_episode(world, spec.op, spec.assist, spec.mode, models,
                                         spec.episode_seed(i), trace);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = spec.episodes;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);

  report.aggregates = compute_aggregates(report.episodes, report.epsilon,
                                         spec.bootstrap_resamples, derive_seed(spec.seed, 77));
  spdlog::info("eval mode={} operator={} success={}/{}", report.mode, report.operator_kind,
               report.aggregates.successes, report.aggregates.episodes);
  return report;
}

}  // namespace teleguard::eval
