#include "teleguard/learn/critic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "teleguard/common/binary_io.hpp"
#include "teleguard/common/errors.hpp"

namespace teleguard::learn {
namespace {

constexpr const char* kCriticMagic = "TGCRITIC";
constexpr std::uint32_t kCriticVersion = 1;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

void CriticConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError("critic config: " + what);
  };
  require(gamma > 0 && gamma < 1, "gamma must lie in (0, 1)");
  require(alpha >= 0, "alpha must be >= 0");
  require(lambda_fail >= 0, "lambda_fail must be >= 0");
  require(horizon >= 0, "horizon must be >= 0");
  require(target_period >= 1, "target_period must be >= 1");
  require(num_ood_samples >= 1, "num_ood_samples must be >= 1");
  require(learning_rate > 0, "learning_rate must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(training_steps >= 0, "training_steps must be >= 0");
  require(hidden_units >= 1, "hidden_units must be >= 1");
  require(low_percentile >= 0 && low_percentile < high_percentile && high_percentile <= 100,
          "percentiles must satisfy 0 <= low < high <= 100");
  require(threshold_percentile >= 0 && threshold_percentile <= 100,
          "threshold_percentile must lie in [0, 100]");
}

CriticConfig CriticConfig::from_config(const ConfigMap& map, const std::string& prefix) {
  CriticConfig c;
  c.gamma = map.get_double(prefix + "gamma", c.gamma);
  c.alpha = map.get_double(prefix + "alpha", c.alpha);
  c.lambda_fail = map.get_double(prefix + "lambda_fail", c.lambda_fail);
  c.horizon = static_cast<int>(map.get_int(prefix + "horizon", c.horizon));
  c.target_period = static_cast<int>(map.get_int(prefix + "target_period", c.target_period));
  c.num_ood_samples = static_cast<int>(map.get_int(prefix + "num_ood_samples", c.num_ood_samples));
  c.learning_rate = map.get_double(prefix + "learning_rate", c.learning_rate);
  c.batch_size = static_cast<int>(map.get_int(prefix + "batch_size", c.batch_size));
  c.training_steps = static_cast<int>(map.get_int(prefix + "training_steps", c.training_steps));
  c.hidden_units = static_cast<int>(map.get_int(prefix + "hidden_units", c.hidden_units));
  c.absorbing_terminal = map.get_bool(prefix + "absorbing_terminal", c.absorbing_terminal);
  c.low_percentile = map.get_double(prefix + "low_percentile", c.low_percentile);
  c.high_percentile = map.get_double(prefix + "high_percentile", c.high_percentile);
  c.threshold_percentile = map.get_double(prefix + "threshold_percentile", c.threshold_percentile);
  c.log_every = static_cast<int>(map.get_int(prefix + "log_every", c.log_every));
  c.seed = map.get_uint(prefix + "seed", c.seed);
  c.validate();
  return c;
}

void CriticConfig::to_config(ConfigMap& map, const std::string& prefix) const {
  map.set(prefix + "gamma", format_double(gamma));
  map.set(prefix + "alpha", format_double(alpha));
  map.set(prefix + "lambda_fail", format_double(lambda_fail));
  map.set(prefix + "horizon", std::to_string(horizon));
  map.set(prefix + "target_period", std::to_string(target_period));
  map.set(prefix + "num_ood_samples", std::to_string(num_ood_samples));
  map.set(prefix + "learning_rate", format_double(learning_rate));
  map.set(prefix + "batch_size", std::to_string(batch_size));
  map.set(prefix + "training_steps", std::to_string(training_steps));
  map.set(prefix + "hidden_units", std::to_string(hidden_units));
  map.set(prefix + "absorbing_terminal", absorbing_terminal ? "true" : "false");
  map.set(prefix + "low_percentile", format_double(low_percentile));
  map.set(prefix + "high_percentile", format_double(high_percentile));
  map.set(prefix + "threshold_percentile", format_double(threshold_percentile));
  map.set(prefix + "log_every", std::to_string(log_every));
  map.set(prefix + "seed", std::to_string(seed));
}

CriticModel CriticModel::create(int obs_dim, int act_dim, double command_max,
                                FeatureScaler scaler, int hidden_units, Rng& rng) {
  if (obs_dim < 1 || act_dim < 1) throw ValidationError("critic: dimensions must be >= 1");
  if (scaler.dim() != obs_dim) throw ValidationError("critic: scaler dimension mismatch");
  if (!(command_max > 0)) throw ValidationError("critic: command_max must be > 0");
  using nn::Activation;
  CriticModel m;
  m.obs_dim_ = obs_dim;
  m.act_dim_ = act_dim;
  m.command_max_ = command_max;
  m.scaler_ = std::move(scaler);
  m.trunk_ = nn::Mlp::uniform_init({obs_dim + act_dim, hidden_units, hidden_units},
                                   {Activation::kTanh, Activation::kTanh}, rng);
  m.q_head_ = nn::Mlp::uniform_init({hidden_units, 1}, {Activation::kIdentity}, rng);
  m.fail_head_ = nn::Mlp({hidden_units, 1}, {Activation::kIdentity});
  m.sync_target();
  return m;
}

Eigen::MatrixXd CriticModel::network_input(const Eigen::MatrixXd& obs,
                                           const Eigen::MatrixXd& actions) const {
  if (obs.rows() != obs_dim_ || actions.rows() != act_dim_ || obs.cols() != actions.cols()) {
    throw ValidationError("critic: (obs, action) shape mismatch");
  }
  Eigen::MatrixXd x(obs_dim_ + act_dim_, obs.cols());
  x.topRows(obs_dim_) = scaler_.apply(obs);
  x.bottomRows(act_dim_) = actions / command_max_;
  return x;
}

Eigen::RowVectorXd CriticModel::q_values(const Eigen::MatrixXd& obs,
                                         const Eigen::MatrixXd& actions) const {
  return q_head_.forward(trunk_.forward(network_input(obs, actions))).row(0);
}

Eigen::RowVectorXd CriticModel::target_q_values(const Eigen::MatrixXd& obs,
                                                const Eigen::MatrixXd& actions) const {
  return target_q_head_.forward(target_trunk_.forward(network_input(obs, actions))).row(0);
}

Eigen::RowVectorXd CriticModel::failure_logits(const Eigen::MatrixXd& obs,
                                               const Eigen::MatrixXd& actions) const {
  return fail_head_.forward(trunk_.forward(network_input(obs, actions))).row(0);
}

Eigen::RowVectorXd CriticModel::action_values(const Eigen::MatrixXd& obs,
                                              const Eigen::MatrixXd& actions,
                                              Eigen::MatrixXd* action_grad) const {
  if (!action_grad) return q_values(obs, actions);
  nn::ForwardCache trunk_cache, head_cache;
  const Eigen::MatrixXd h = trunk_.forward(network_input(obs, actions), &trunk_cache);
  const Eigen::RowVectorXd q = q_head_.forward(h, &head_cache).row(0);
  Eigen::MatrixXd dh, dx;
  q_head_.backward(head_cache, Eigen::MatrixXd::Ones(1, q.size()), &dh);
  trunk_.backward(trunk_cache, dh, &dx);
  *action_grad = dx.bottomRows(act_dim_) / command_max_;
  return q;
}

double CriticModel::normalize(double q) const {
  if (!calibration_.calibrated) throw std::logic_error("critic is not calibrated");
  const double span = calibration_.q_max - calibration_.q_min;
  return std::clamp((q - calibration_.q_min) / span, 0.0, 1.0);
}

Score CriticModel::score(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const {
  if (!calibration_.calibrated) throw std::logic_error("score(): critic is not calibrated");
  const Eigen::MatrixXd h =
      trunk_.forward(network_input(Eigen::MatrixXd(obs), Eigen::MatrixXd(action)));
  Score s;
  s.q = q_head_.forward(h)(0, 0);
  s.q_normalized = normalize(s.q);
  s.p_fail = sigmoid(fail_head_.forward(h)(0, 0));
  s.feasible = s.q >= calibration_.threshold;
  return s;
}

void CriticModel::sync_target() {
  target_trunk_ = trunk_;
  target_q_head_ = q_head_;
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw ValidationError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

void CriticModel::calibrate(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions,
                            std::span<const std::uint8_t> from_success, double low_pct,
                            double high_pct, double threshold_pct) {
  if (obs.cols() == 0) throw ValidationError("calibrate: no samples");
  std::vector<double> all, success;
  all.reserve(obs.cols());
  constexpr Eigen::Index kChunk = 4096;
  for (Eigen::Index start = 0; start < obs.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, obs.cols() - start);
    const Eigen::RowVectorXd q = q_values(obs.middleCols(start, n), actions.middleCols(start, n));
    for (Eigen::Index i = 0; i < n; ++i) {
      all.push_back(q[i]);
      if (from_success.empty() || from_success[start + i]) success.push_back(q[i]);
    }
  }
  Calibration c;
  c.q_min = percentile(all, low_pct);
  c.q_max = percentile(all, high_pct);
  if (!(c.q_max > c.q_min)) c.q_max = c.q_min + 1e-6;  // constant critic
  c.threshold = success.empty() ? c.q_min : percentile(success, threshold_pct);
  c.threshold = std::clamp(c.threshold, c.q_min, c.q_max);
  c.calibrated = true;
  calibration_ = c;
}

void CriticModel::set_calibration(const Calibration& c) {
  if (c.calibrated && !(c.q_min < c.q_max && c.threshold >= c.q_min && c.threshold <= c.q_max)) {
    throw ValidationError("calibration requires q_min < q_max and threshold in [q_min, q_max]");
  }
  calibration_ = c;
}

Eigen::VectorXd CriticModel::parameters() const {
  const Eigen::VectorXd a = trunk_.parameters(), b = q_head_.parameters(),
                        c = fail_head_.parameters();
  Eigen::VectorXd out(a.size() + b.size() + c.size());
  out << a, b, c;
  return out;
}

void CriticModel::set_parameters(const Eigen::VectorXd& flat) {
  const auto na = trunk_.num_parameters(), nb = q_head_.num_parameters(),
             nc = fail_head_.num_parameters();
  if (flat.size() != na + nb + nc) throw ValidationError("critic: parameter size mismatch");
  trunk_.set_parameters(flat.segment(0, na));
  q_head_.set_parameters(flat.segment(na, nb));
  fail_head_.set_parameters(flat.segment(na + nb, nc));
}

std::string CriticModel::serialize() const {
  ByteWriter w;
  w.raw(kCriticMagic);
  w.u32(kCriticVersion);
  w.u32(static_cast<std::uint32_t>(obs_dim_));
  w.u32(static_cast<std::uint32_t>(act_dim_));
  w.f64(command_max_);
  scaler_.write(w);
  trunk_.write(w);
  q_head_.write(w);
  fail_head_.write(w);
  target_trunk_.write(w);
  target_q_head_.write(w);
  // calibration block
  w.u8(calibration_.calibrated ? 1 : 0);
  w.f64(calibration_.q_min);
  w.f64(calibration_.q_max);
  w.f64(calibration_.threshold);
  w.u32(static_cast<std::uint32_t>(horizon));
  w.f64(gamma);
  w.f64(dt);
  return w.take();
}

CriticModel CriticModel::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.raw(8) != kCriticMagic) throw CorruptFileError("critic checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCriticVersion) {
    throw CorruptFileError("critic checkpoint: unsupported version " + std::to_string(version));
  }
  CriticModel m;
  m.obs_dim_ = static_cast<int>(r.u32());
  m.act_dim_ = static_cast<int>(r.u32());
  m.command_max_ = r.f64();
  m.scaler_ = FeatureScaler::read(r);
  m.trunk_ = nn::Mlp::read(r);
  m.q_head_ = nn::Mlp::read(r);
  m.fail_head_ = nn::Mlp::read(r);
  m.target_trunk_ = nn::Mlp::read(r);
  m.target_q_head_ = nn::Mlp::read(r);
  Calibration c;
  c.calibrated = r.u8() != 0;
  c.q_min = r.f64();
  c.q_max = r.f64();
  c.threshold = r.f64();
  m.horizon = static_cast<int>(r.u32());
  m.gamma = r.f64();
  m.dt = r.f64();
  if (!r.done()) throw CorruptFileError("critic checkpoint: trailing bytes");
  if (m.scaler_.dim() != m.obs_dim_ || m.trunk_.input_dim() != m.obs_dim_ + m.act_dim_ ||
      m.q_head_.input_dim() != m.trunk_.output_dim() ||
      m.fail_head_.input_dim() != m.trunk_.output_dim() || m.q_head_.output_dim() != 1 ||
      m.fail_head_.output_dim() != 1) {
    throw CorruptFileError("critic checkpoint: inconsistent layer manifest");
  }
  try {
    m.set_calibration(c);
  } catch (const ValidationError& e) {
    throw CorruptFileError(std::string("critic checkpoint: ") + e.what());
  }
  return m;
}

void CriticModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write critic checkpoint: " + path.string());
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("error writing critic checkpoint: " + path.string());
}

CriticModel CriticModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open critic checkpoint: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize(buffer.str());
}

bool CriticModel::operator==(const CriticModel& other) const { return serialize() == other.serialize(); }

double log_mean_exp(std::span<const double> values) {
  if (values.empty()) throw ValidationError("log_mean_exp of an empty set");
  const double peak = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return peak + std::log(sum / static_cast<double>(values.size()));
}

double binary_cross_entropy_with_logits(const Eigen::VectorXd& logits,
                                        const Eigen::VectorXd& labels) {
  if (logits.size() != labels.size() || logits.size() == 0) {
    throw ValidationError("BCE: logits and labels must be non-empty and equal length");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
    total += softplus(logits[i]) - labels[i] * logits[i];
  }
  return total / static_cast<double>(logits.size());
}

Eigen::VectorXd td_target(const data::TransitionBatch& batch, const CriticModel& model,
                          double gamma, bool absorbing_terminal) {
  const Eigen::RowVectorXd next_q = model.target_q_values(batch.next_obs, batch.next_actions);
  Eigen::VectorXd y(batch.size());
  for (int i = 0; i < batch.size(); ++i) {
    if (batch.terminal[i] > 0.5) {
      y[i] = absorbing_terminal ? batch.rewards[i] / (1.0 - gamma) : batch.rewards[i];
    } else {
      y[i] = batch.rewards[i] + gamma * next_q[i];
    }
  }
  return y;
}

Eigen::MatrixXd sample_ood_actions(int act_dim, int batch_size, int num_samples,
                                   double command_max, Rng& rng) {
  std::uniform_real_distribution<double> u(-command_max, command_max);
  Eigen::MatrixXd a(act_dim, static_cast<Eigen::Index>(batch_size) * num_samples);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index k = 0; k < act_dim; ++k) a(k, j) = u(rng);
  }
  return a;
}

struct CriticLossEvaluator {
  static CriticLossTerms evaluate(const CriticModel& model, const data::TransitionBatch& batch,
                                  const Eigen::VectorXd* targets, const Eigen::MatrixXd* ood,
                                  double td_weight, double alpha, double lambda_fail,
                                  Eigen::VectorXd* gradient) {
    const Eigen::Index B = batch.size();
    if (B == 0) throw ValidationError("critic loss on an empty batch");
    const bool use_ood = ood && alpha > 0.0;
    Eigen::Index M = 0;
    if (use_ood) {
      if (ood->rows() != model.act_dim_ || ood->cols() % B != 0 || ood->cols() == 0) {
        throw ValidationError("OOD action block must be act_dim x (B*M)");
      }
      M = ood->cols() / B;
    }

    Eigen::MatrixXd obs(model.obs_dim_, B * (1 + M));
    Eigen::MatrixXd act(model.act_dim_, B * (1 + M));
    obs.leftCols(B) = batch.obs;
    act.leftCols(B) = batch.actions;
    for (Eigen::Index m = 0; m < M; ++m) {
      obs.middleCols(B * (1 + m), B) = batch.obs;
      act.middleCols(B * (1 + m), B) = ood->middleCols(B * m, B);
    }

    nn::ForwardCache trunk_cache, q_cache, f_cache;
    const Eigen::MatrixXd h = model.trunk_.forward(model.network_input(obs, act), &trunk_cache);
    const Eigen::RowVectorXd q = model.q_head_.forward(h, &q_cache).row(0);
    const bool use_fail = lambda_fail > 0.0;
    Eigen::RowVectorXd z;
    if (use_fail) z = model.fail_head_.forward(h.leftCols(B), &f_cache).row(0);

    CriticLossTerms terms;
    Eigen::RowVectorXd dq = Eigen::RowVectorXd::Zero(q.size());
    const double inv_b = 1.0 / static_cast<double>(B);

    if (targets && td_weight > 0.0) {
      for (Eigen::Index i = 0; i < B; ++i) {
        const double err = q[i] - (*targets)[i];
        terms.td += 0.5 * err * err * inv_b;
        dq[i] += td_weight * err * inv_b;
      }
    }

    if (use_ood) {
      std::vector<double> vals(1 + M);
      for (Eigen::Index i = 0; i < B; ++i) {
        for (Eigen::Index j = 0; j <= M; ++j) vals[j] = q[B * j + i];
        const double lme = log_mean_exp(vals);
        terms.penalty += (lme - q[i]) * inv_b;
        const double scale = alpha * inv_b / static_cast<double>(1 + M);
        for (Eigen::Index j = 0; j <= M; ++j) {
          // d lme / d q_j = exp(q_j - lme) / (1 + M)
          dq[B * j + i] += scale * std::exp(vals[j] - lme);
        }
        dq[i] -= alpha * inv_b;
      }
    }

    Eigen::RowVectorXd dz;
    if (use_fail) {
      terms.bce = binary_cross_entropy_with_logits(z.transpose(), batch.fail_labels);
      dz.resize(B);
      for (Eigen::Index i = 0; i < B; ++i) {
        dz[i] = lambda_fail * (sigmoid(z[i]) - batch.fail_labels[i]) * inv_b;
      }
    }
    terms.total = td_weight * terms.td + alpha * terms.penalty + lambda_fail * terms.bce;

    if (gradient) {
      Eigen::MatrixXd dh;
      const nn::Gradients g_q = model.q_head_.backward(q_cache, dq, &dh);
      nn::Gradients g_f;
      if (use_fail) {
        Eigen::MatrixXd dh_f;
        g_f = model.fail_head_.backward(f_cache, dz, &dh_f);
        dh.leftCols(B) += dh_f;
      }
      const nn::Gradients g_t = model.trunk_.backward(trunk_cache, dh);
      const Eigen::VectorXd ft = g_t.flat(), fq = g_q.flat();
      const Eigen::Index nf = model.fail_head_.num_parameters();
      gradient->resize(ft.size() + fq.size() + nf);
      *gradient << ft, fq, (use_fail ? g_f.flat() : Eigen::VectorXd::Zero(nf));
    }
    return terms;
  }
};

CriticLossTerms critic_loss(const CriticModel& model, const data::TransitionBatch& batch,
                            const Eigen::VectorXd& targets, const Eigen::MatrixXd& ood_actions,
                            const CriticLossWeights& weights, Eigen::VectorXd* gradient) {
  if (targets.size() != batch.size()) throw ValidationError("critic loss: target size mismatch");
  return CriticLossEvaluator::evaluate(model, batch, &targets, &ood_actions, 1.0, weights.alpha,
                                       weights.lambda_fail, gradient);
}

double cql_penalty(const CriticModel& model, const data::TransitionBatch& batch,
                   const Eigen::MatrixXd& ood_actions, Eigen::VectorXd* gradient) {
  return CriticLossEvaluator::evaluate(model, batch, nullptr, &ood_actions, 0.0, 1.0, 0.0,
                                       gradient)
      .penalty;
}

double failure_head_loss(const CriticModel& model, const data::TransitionBatch& batch,
                         Eigen::VectorXd* gradient) {
  return CriticLossEvaluator::evaluate(model, batch, nullptr, nullptr, 0.0, 0.0, 1.0, gradient)
      .bce;
}

}  // namespace teleguard::learn
