#include "teleguard/learn/actor.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "teleguard/common/binary_io.hpp"
#include "teleguard/common/errors.hpp"
#include "teleguard/nn/adam.hpp"

namespace teleguard::learn {
namespace {

constexpr const char* kActorMagic = "TGPOLICY";
constexpr std::uint32_t kActorVersion = 1;

}  // namespace

void ActorConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError("actor config: " + what);
  };
  require(lambda_anchor >= 0, "lambda_anchor must be >= 0");
  require(learning_rate > 0, "learning_rate must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(training_steps >= 0, "training_steps must be >= 0");
  require(hidden_units >= 1, "hidden_units must be >= 1");
}

ActorConfig ActorConfig::from_config(const ConfigMap& map, const std::string& prefix) {
  ActorConfig c;
  c.lambda_anchor = map.get_double(prefix + "lambda_anchor", c.lambda_anchor);
  c.learning_rate = map.get_double(prefix + "learning_rate", c.learning_rate);
  c.batch_size = static_cast<int>(map.get_int(prefix + "batch_size", c.batch_size));
  c.training_steps = static_cast<int>(map.get_int(prefix + "training_steps", c.training_steps));
  c.hidden_units = static_cast<int>(map.get_int(prefix + "hidden_units", c.hidden_units));
  c.log_every = static_cast<int>(map.get_int(prefix + "log_every", c.log_every));
  c.seed = map.get_uint(prefix + "seed", c.seed);
  c.validate();
  return c;
}

void ActorConfig::to_config(ConfigMap& map, const std::string& prefix) const {
  map.set(prefix + "lambda_anchor", format_double(lambda_anchor));
  map.set(prefix + "learning_rate", format_double(learning_rate));
  map.set(prefix + "batch_size", std::to_string(batch_size));
  map.set(prefix + "training_steps", std::to_string(training_steps));
  map.set(prefix + "hidden_units", std::to_string(hidden_units));
  map.set(prefix + "log_every", std::to_string(log_every));
  map.set(prefix + "seed", std::to_string(seed));
}

ActorModel ActorModel::create(int obs_dim, int act_dim, double command_max, FeatureScaler scaler,
                              int hidden_units, Rng& rng) {
  if (obs_dim < 1 || act_dim < 1) throw ValidationError("actor: dimensions must be >= 1");
  if (scaler.dim() != obs_dim) throw ValidationError("actor: scaler dimension mismatch");
  if (!(command_max > 0)) throw ValidationError("actor: command_max must be > 0");
  using nn::Activation;
  ActorModel m;
  m.obs_dim_ = obs_dim;
  m.act_dim_ = act_dim;
  m.command_max_ = command_max;
  m.scaler_ = std::move(scaler);
  m.net_ = nn::Mlp::uniform_init({obs_dim, hidden_units, hidden_units, act_dim},
                                 {Activation::kTanh, Activation::kTanh, Activation::kTanh}, rng);
  return m;
}

Eigen::MatrixXd ActorModel::act(const Eigen::MatrixXd& obs, nn::ForwardCache* cache) const {
  if (obs.rows() != obs_dim_) throw ValidationError("actor: observation dimension mismatch");
  return command_max_ * net_.forward(scaler_.apply(obs), cache);
}

Eigen::VectorXd ActorModel::act_one(const Eigen::VectorXd& obs) const {
  return act(Eigen::MatrixXd(obs)).col(0);
}

Eigen::VectorXd ActorModel::parameter_gradient(const nn::ForwardCache& cache,
                                               const Eigen::MatrixXd& grad_action) const {
  return net_.backward(cache, command_max_ * grad_action).flat();
}

std::string ActorModel::serialize() const {
  ByteWriter w;
  w.raw(kActorMagic);
  w.u32(kActorVersion);
  w.u32(static_cast<std::uint32_t>(obs_dim_));
  w.u32(static_cast<std::uint32_t>(act_dim_));
  w.f64(command_max_);
  w.f64(dt);
  scaler_.write(w);
  net_.write(w);
  return w.take();
}

ActorModel ActorModel::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.raw(8) != kActorMagic) throw CorruptFileError("actor checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kActorVersion) {
    throw CorruptFileError("actor checkpoint: unsupported version " + std::to_string(version));
  }
  ActorModel m;
  m.obs_dim_ = static_cast<int>(r.u32());
  m.act_dim_ = static_cast<int>(r.u32());
  m.command_max_ = r.f64();
  m.dt = r.f64();
  m.scaler_ = FeatureScaler::read(r);
  m.net_ = nn::Mlp::read(r);
  if (!r.done()) throw CorruptFileError("actor checkpoint: trailing bytes");
  if (m.scaler_.dim() != m.obs_dim_ || m.net_.input_dim() != m.obs_dim_ ||
      m.net_.output_dim() != m.act_dim_ || !(m.command_max_ > 0)) {
    throw CorruptFileError("actor checkpoint: inconsistent layer manifest");
  }
  return m;
}

void ActorModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write actor checkpoint: " + path.string());
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("error writing actor checkpoint: " + path.string());
}

ActorModel ActorModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open actor checkpoint: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize(buffer.str());
}

ActorLossTerms actor_loss(const ActorModel& actor, const ActionValueFunction& critic,
                          const Eigen::MatrixXd& obs, const Eigen::MatrixXd& tele_actions,
                          double lambda_anchor, Eigen::VectorXd* gradient) {
  if (critic.obs_dim() != actor.obs_dim() || critic.act_dim() != actor.act_dim()) {
    throw ValidationError("actor/critic dimension mismatch");
  }
  if (tele_actions.rows() != actor.act_dim() || tele_actions.cols() != obs.cols() ||
      obs.cols() == 0) {
    throw ValidationError("actor loss: (obs, action) shape mismatch");
  }
  const double inv_b = 1.0 / static_cast<double>(obs.cols());
  nn::ForwardCache cache;
  const Eigen::MatrixXd pi = actor.act(obs, gradient ? &cache : nullptr);
  Eigen::MatrixXd dq_da;
  const Eigen::RowVectorXd q = critic.action_values(obs, pi, gradient ? &dq_da : nullptr);
  const Eigen::MatrixXd diff = pi - tele_actions;

  ActorLossTerms terms;
  terms.value = -q.sum() * inv_b;
  terms.anchor = diff.squaredNorm() * inv_b;
  terms.total = terms.value + lambda_anchor * terms.anchor;
  if (gradient) {
    const Eigen::MatrixXd grad_pi = (-dq_da + 2.0 * lambda_anchor * diff) * inv_b;
    *gradient = actor.parameter_gradient(cache, grad_pi);
  }
  return terms;
}

ActorTrainingResult train_actor(const data::TransitionTable& table,
                                const ActionValueFunction& critic, const ActorConfig& config,
                                double command_max) {
  config.validate();
  if (table.size() == 0) throw ValidationError("train_actor: empty transition table");
  if (critic.obs_dim() != table.obs_dim || critic.act_dim() != table.act_dim) {
    throw ValidationError("train_actor: critic dimensions do not match the dataset");
  }
  Rng rng(derive_seed(config.seed, 12));
  ActorTrainingResult result;
  ActorModel model = ActorModel::create(table.obs_dim, table.act_dim, command_max,
                                        FeatureScaler::fit(table.obs), config.hidden_units, rng);
  Eigen::VectorXd params = model.parameters();
  nn::AdamState adam = nn::AdamState::zeros(params.size(), config.learning_rate);
  Eigen::VectorXd grad;
  for (int step = 0; step < config.training_steps; ++step) {
    const auto rows = data::sample_rows(table, config.batch_size, rng);
    Eigen::MatrixXd obs(table.obs_dim, rows.size()), tele(table.act_dim, rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      obs.col(i) = table.obs.col(rows[i]);
      tele.col(i) = table.actions.col(rows[i]);
    }
    const ActorLossTerms terms = actor_loss(model, critic, obs, tele, config.lambda_anchor, &grad);
    if (!std::isfinite(terms.total)) {
      throw DivergenceError("actor loss became non-finite at step " + std::to_string(step));
    }
    adam_step(params, grad, adam);
    model.set_parameters(params);
    if (config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.training_steps)) {
      result.log.push_back({step, terms});
      spdlog::info("actor step {} value={:.4f} anchor={:.6f} total={:.4f}", step, terms.value,
                   terms.anchor, terms.total);
    }
  }
  result.model = std::move(model);
  return result;
}

Eigen::VectorXd assist_action(const ActorModel& actor, const Eigen::VectorXd& obs) {
  return actor.act_one(obs);
}

}  // namespace teleguard::learn
