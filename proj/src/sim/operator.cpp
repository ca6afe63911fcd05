#include "teleguard/sim/operator.hpp"

#include <algorithm>
#include <cmath>

#include "teleguard/common/errors.hpp"

namespace teleguard::sim {

std::string to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kExpert: return "expert";
    case OperatorKind::kNoisy: return "noisy";
    case OperatorKind::kBiased: return "biased";
  }
  return "expert";
}

OperatorKind parse_operator_kind(const std::string& text) {
  if (text == "expert") return OperatorKind::kExpert;
  if (text == "noisy") return OperatorKind::kNoisy;
  if (text == "biased") return OperatorKind::kBiased;
  throw ValidationError("unknown operator kind '" + text + "' (expert|noisy|biased)");
}

void OperatorConfig::validate() const {
  if (!(noise_std >= 0)) throw ValidationError("operator.noise_std must be >= 0");
  if (!(noise_correlation >= 0 && noise_correlation < 1)) {
    throw ValidationError("operator.noise_correlation must lie in [0, 1)");
  }
  if (!(pd_gain > 0)) throw ValidationError("operator.pd_gain must be > 0");
  if (!(descend_speed > 0)) throw ValidationError("operator.descend_speed must be > 0");
  if (!(bias_gain >= 0)) throw ValidationError("operator.bias_gain must be >= 0");
  if (kind == OperatorKind::kBiased && std::abs(bias_direction.norm() - 1.0) > 1e-9) {
    throw ValidationError("operator.bias_direction must be unit-norm");
  }
}

OperatorConfig OperatorConfig::from_config(const ConfigMap& map, const std::string& prefix) {
  OperatorConfig c;
  c.kind = parse_operator_kind(map.get_string(prefix + "kind", to_string(c.kind)));
  c.noise_std = map.get_double(prefix + "noise_std", c.noise_std);
  c.noise_correlation = map.get_double(prefix + "noise_correlation", c.noise_correlation);
  const auto dir = map.get_doubles(prefix + "bias_direction", {c.bias_direction.x(), c.bias_direction.y()});
  if (dir.size() != 2) throw ValidationError("operator.bias_direction needs 2 components");
  c.bias_direction = Vec2(dir[0], dir[1]);
  c.bias_gain = map.get_double(prefix + "bias_gain", c.bias_gain);
  c.pd_gain = map.get_double(prefix + "pd_gain", c.pd_gain);
  c.descend_speed = map.get_double(prefix + "descend_speed", c.descend_speed);
  c.seed = map.get_uint(prefix + "seed", c.seed);
  c.validate();
  return c;
}

void OperatorConfig::to_config(ConfigMap& map, const std::string& prefix) const {
  map.set(prefix + "kind", to_string(kind));
  map.set(prefix + "noise_std", format_double(noise_std));
  map.set(prefix + "noise_correlation", format_double(noise_correlation));
  map.set(prefix + "bias_direction", format_doubles({bias_direction.x(), bias_direction.y()}));
  map.set(prefix + "bias_gain", format_double(bias_gain));
  map.set(prefix + "pd_gain", format_double(pd_gain));
  map.set(prefix + "descend_speed", format_double(descend_speed));
  map.set(prefix + "seed", std::to_string(seed));
}

std::vector<Vec2> apply_offset(std::span<const Vec2> intent, std::span<const Vec2> offset,
                               double command_max) {
  std::vector<Vec2> out(intent.begin(), intent.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i < offset.size()) out[i] += offset[i];
    out[i] = out[i].cwiseMax(-command_max).cwiseMin(command_max);
  }
  return out;
}

Operator::Operator(OperatorConfig config, double command_max, std::uint64_t episode_seed)
    : config_(std::move(config)),
      command_max_(command_max),
      rng_(derive_seed(episode_seed ^ config_.seed, streams::kOperator)) {
  config_.validate();
  if (config_.kind == OperatorKind::kBiased) {
    std::uniform_real_distribution<double> unit(0.0, 2.0);
    bias_magnitude_ = config_.bias_gain * command_max_ * unit(rng_);
  }
}

std::vector<Vec2> Operator::intent(const Observation& obs) {
  std::vector<Vec2> out(obs.num_arms());
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (config_.kind == OperatorKind::kNoisy && config_.noise_std > 0) {
    // The first draw starts from the stationary distribution.
    const bool fresh = noise_.size() != out.size();
    const double rho = fresh ? 0.0 : config_.noise_correlation;
    const double scale = std::sqrt(1.0 - rho * rho) * config_.noise_std;
    if (fresh) noise_.assign(out.size(), Vec2::Zero());
    for (auto& n : noise_) {
      n.x() = rho * n.x() + scale * gauss(rng_);
      n.y() = rho * n.y() + scale * gauss(rng_);
    }
  }
  for (int i = 0; i < obs.num_arms(); ++i) {
    Vec2 u(-config_.pd_gain * obs.position(i).x(), config_.descend_speed);
    if (config_.kind == OperatorKind::kNoisy && config_.noise_std > 0) {
      u += noise_[i];
    } else if (config_.kind == OperatorKind::kBiased) {
      u += bias_magnitude_ * config_.bias_direction;
    }
    out[i] = u.cwiseMax(-command_max_).cwiseMin(command_max_);
  }
  return out;
}

std::vector<Vec2> Operator::command(const Observation& obs, std::span<const Vec2> guidance_offset) {
  const auto base = intent(obs);
  return apply_offset(base, guidance_offset, command_max_);
}

}  // namespace teleguard::sim
