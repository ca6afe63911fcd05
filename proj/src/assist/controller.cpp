#include "teleguard/assist/controller.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "teleguard/common/errors.hpp"

namespace teleguard::assist {
namespace {

Vec2 get_vec2(const ConfigMap& map, const std::string& key, const Vec2& fallback) {
  const auto v = map.get_doubles(key, {fallback.x(), fallback.y()});
  if (v.size() == 1) return Vec2(v[0], v[0]);
  if (v.size() != 2) throw ValidationError(key + ": expected 1 or 2 comma-separated values");
  return Vec2(v[0], v[1]);
}

Vec2 saturate(const Vec2& v, double bound) { return v.cwiseMax(-bound).cwiseMin(bound); }

}  // namespace

std::string to_string(AssistMode mode) {
  switch (mode) {
    case AssistMode::kOff: return "off";
    case AssistMode::kStatic: return "static";
    case AssistMode::kValue: return "value";
  }
  return "off";
}

AssistMode parse_assist_mode(const std::string& text) {
  if (text == "off") return AssistMode::kOff;
  if (text == "static" || text == "static-gain") return AssistMode::kStatic;
  if (text == "value" || text == "value-guided") return AssistMode::kValue;
  throw ValidationError("unknown assistance mode '" + text + "' (expected off, static, value)");
}

void AssistConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError("assist config: " + what);
  };
  require(kappa > 0, "kappa must be > 0");
  require(tau_g > 0 && tau_g < 1, "tau_g must lie in (0, 1)");
  require((k_min.array() >= 0).all() && (k_min.array() <= k_max.array()).all(),
          "need 0 <= k_min <= k_max elementwise");
  require((d0.array() >= 0).all(), "d0 must be >= 0");
  require(delta_q_max > 0, "delta_q_max must be > 0");
  require(tau_max > 0, "tau_max must be > 0");
  require((coupling.array() != 0).all(), "coupling S must be invertible");
  require(dt_servo > 0 && dt_policy >= dt_servo, "need 0 < dt_servo <= dt_policy");
  const double ratio = dt_policy / dt_servo;
  require(std::abs(ratio - std::round(ratio)) < 1e-9, "dt_policy must be a multiple of dt_servo");
  require(cutoff_hz > 0, "cutoff_hz must be > 0");
  require(yield_ratio >= 0 && yield_ratio <= 1, "yield_ratio must lie in [0, 1]");
  require(admittance_damping > 0, "admittance_damping must be > 0");
  require(static_gain >= 0 && static_gain <= 1, "static_gain must lie in [0, 1]");
  require(stale_policy_periods >= 1, "stale_policy_periods must be >= 1");
}

int AssistConfig::ticks_per_policy() const {
  return static_cast<int>(std::lround(dt_policy / dt_servo));
}

double AssistConfig::filter_coefficient() const {
  if (std::isinf(cutoff_hz)) return 0.0;
  return std::exp(-2.0 * std::numbers::pi * cutoff_hz * dt_servo);
}

AssistConfig AssistConfig::from_config(const ConfigMap& map, const std::string& prefix) {
  AssistConfig c;
  c.kappa = map.get_double(prefix + "kappa", c.kappa);
  c.tau_g = map.get_double(prefix + "tau_g", c.tau_g);
  c.k_min = get_vec2(map, prefix + "k_min", c.k_min);
  c.k_max = get_vec2(map, prefix + "k_max", c.k_max);
  c.d0 = get_vec2(map, prefix + "d0", c.d0);
  c.delta_q_max = map.get_double(prefix + "delta_q_max", c.delta_q_max);
  c.tau_max = map.get_double(prefix + "tau_max", c.tau_max);
  c.coupling = get_vec2(map, prefix + "coupling", c.coupling);
  c.dt_policy = map.get_double(prefix + "dt_policy", c.dt_policy);
  c.dt_servo = map.get_double(prefix + "dt_servo", c.dt_servo);
  c.cutoff_hz = map.get_double(prefix + "cutoff_hz", c.cutoff_hz);
  c.yield_ratio = map.get_double(prefix + "yield_ratio", c.yield_ratio);
  c.admittance_damping = map.get_double(prefix + "admittance_damping", c.admittance_damping);
  c.static_gain = map.get_double(prefix + "static_gain", c.static_gain);
  c.stale_policy_periods =
      static_cast<int>(map.get_int(prefix + "stale_policy_periods", c.stale_policy_periods));
  c.validate();
  return c;
}

void AssistConfig::to_config(ConfigMap& map, const std::string& prefix) const {
  auto vec = [](const Vec2& v) { return format_doubles({v.x(), v.y()}); };
  map.set(prefix + "kappa", format_double(kappa));
  map.set(prefix + "tau_g", format_double(tau_g));
  map.set(prefix + "k_min", vec(k_min));
  map.set(prefix + "k_max", vec(k_max));
  map.set(prefix + "d0", vec(d0));
  map.set(prefix + "delta_q_max", format_double(delta_q_max));
  map.set(prefix + "tau_max", format_double(tau_max));
  map.set(prefix + "coupling", vec(coupling));
  map.set(prefix + "dt_policy", format_double(dt_policy));
  map.set(prefix + "dt_servo", format_double(dt_servo));
  map.set(prefix + "cutoff_hz", format_double(cutoff_hz));
  map.set(prefix + "yield_ratio", format_double(yield_ratio));
  map.set(prefix + "admittance_damping", format_double(admittance_damping));
  map.set(prefix + "static_gain", format_double(static_gain));
  map.set(prefix + "stale_policy_periods", std::to_string(stale_policy_periods));
}

double intensity(double q_normalized, const AssistConfig& config) {
  const double z = config.kappa * (config.tau_g - q_normalized);
  return std::clamp(1.0 / (1.0 + std::exp(-z)), 0.0, 1.0);
}

double lowpass(double g_raw, double previous, const AssistConfig& config) {
  const double beta = config.filter_coefficient();
  return std::clamp(beta * previous + (1.0 - beta) * g_raw, 0.0, 1.0);
}

Vec2 stiffness(double g, const AssistConfig& config) {
  return config.k_min + g * (config.k_max - config.k_min);
}

std::vector<Vec2> reference_update(std::span<const Vec2> assist_action,
                                   const AssistConfig& config) {
  std::vector<Vec2> out;
  out.reserve(assist_action.size());
  for (const Vec2& a : assist_action) {
    const Vec2 follower_increment = a * config.dt_policy;
    const Vec2 leader_increment =
        saturate(follower_increment.cwiseQuotient(config.coupling), config.delta_q_max);
    out.push_back(leader_increment / config.dt_policy);
  }
  return out;
}

std::vector<Vec2> impedance_torque(std::span<const Vec2> q_dot_des, std::span<const Vec2> q_dot,
                                   double g, const AssistConfig& config) {
  if (q_dot_des.size() != q_dot.size()) throw ValidationError("impedance_torque: arm count mismatch");
  const Vec2 k_v = stiffness(g, config);
  std::vector<Vec2> out;
  out.reserve(q_dot.size());
  for (std::size_t i = 0; i < q_dot.size(); ++i) {
    const Vec2 tau = k_v.cwiseProduct(q_dot_des[i] - q_dot[i]) - config.d0.cwiseProduct(q_dot[i]);
    out.push_back(saturate(tau, config.tau_max));
  }
  return out;
}

std::vector<Vec2> admittance_offset(std::span<const Vec2> torque, const AssistConfig& config) {
  const double gain = config.yield_ratio * config.dt_servo / config.admittance_damping;
  std::vector<Vec2> out;
  out.reserve(torque.size());
  for (const Vec2& t : torque) out.push_back(gain * t);
  return out;
}

bool GuidanceFrame::operator==(const GuidanceFrame& o) const {
  return tick == o.tick && policy_refresh == o.policy_refresh && stale == o.stale &&
         q_dot_des == o.q_dot_des && q == o.q && q_normalized == o.q_normalized &&
         feasible == o.feasible && g_raw == o.g_raw && g == o.g && k_v == o.k_v &&
         torque == o.torque && offset == o.offset && intent == o.intent &&
         leader_velocity == o.leader_velocity && executed == o.executed;
}

GuidanceController::GuidanceController(AssistConfig config, AssistMode mode, int num_arms,
                                       double command_max)
    : config_(std::move(config)), mode_(mode), num_arms_(num_arms), command_max_(command_max) {
  config_.validate();
  if (num_arms < 1) throw ValidationError("controller: num_arms must be >= 1");
  if (!(command_max > 0)) throw ValidationError("controller: command_max must be > 0");
  ticks_per_policy_ = config_.ticks_per_policy();
  reset();
}

void GuidanceController::reset() {
  pending_.reset();
  q_dot_des_.assign(num_arms_, Vec2::Zero());
  q_ = 0.0;
  q_normalized_ = 0.0;
  feasible_ = true;
  g_ = 0.0;
  tick_ = 0;
  ticks_since_refresh_ = 0;
  ever_refreshed_ = false;
}

void GuidanceController::set_yield_ratio(double yield_ratio) {
  if (!(yield_ratio >= 0 && yield_ratio <= 1)) {
    throw ValidationError("yield_ratio must lie in [0, 1]");
  }
  config_.yield_ratio = yield_ratio;
}

void GuidanceController::submit(PolicyUpdate update) {
  if (static_cast<int>(update.assist_action.size()) != num_arms_) {
    throw ValidationError("controller: policy update arm count mismatch");
  }
  pending_ = std::move(update);
}

GuidanceFrame GuidanceController::tick(std::span<const Vec2> intent) {
  if (static_cast<int>(intent.size()) != num_arms_) {
    throw ValidationError("controller: intent arm count mismatch");
  }
  GuidanceFrame f;
  f.tick = tick_;
  if (pending_) {
    q_dot_des_ = reference_update(pending_->assist_action, config_);
    q_ = pending_->q;
    q_normalized_ = pending_->q_normalized;
    feasible_ = pending_->feasible;
    pending_.reset();
    ticks_since_refresh_ = 0;
    ever_refreshed_ = true;
    f.policy_refresh = true;
  }
  f.stale = !ever_refreshed_ ||
            ticks_since_refresh_ > static_cast<std::int64_t>(config_.stale_policy_periods) *
                                       ticks_per_policy_;
  if (mode_ == AssistMode::kOff) {
    f.g_raw = 0.0;
    g_ = 0.0;
  } else if (f.stale) {
    f.g_raw = 0.0;
    g_ = lowpass(0.0, g_, config_);
  } else if (mode_ == AssistMode::kStatic) {
    f.g_raw = config_.static_gain;
    g_ = config_.static_gain;
  } else {
    f.g_raw = intensity(q_normalized_, config_);
    g_ = lowpass(f.g_raw, g_, config_);
  }
  f.g = g_;
  f.q = q_;
  f.q_normalized = q_normalized_;
  f.feasible = feasible_;
  f.q_dot_des = q_dot_des_;
  f.k_v = stiffness(g_, config_);
  f.intent.assign(intent.begin(), intent.end());
  if (mode_ == AssistMode::kOff) {
    f.torque.assign(num_arms_, Vec2::Zero());
  } else {
    f.torque = impedance_torque(q_dot_des_, intent, g_, config_);
  }
  f.offset = admittance_offset(f.torque, config_);
  f.leader_velocity = sim::apply_offset(intent, f.offset, command_max_);
  f.executed.reserve(num_arms_);
  for (const Vec2& v : f.leader_velocity) {
    f.executed.push_back(
        config_.coupling.cwiseProduct(v).cwiseMax(-command_max_).cwiseMin(command_max_));
  }
  ++tick_;
  ++ticks_since_refresh_;
  return f;
}

}  // namespace teleguard::assist
