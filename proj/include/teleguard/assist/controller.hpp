#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "teleguard/common/config_map.hpp"
#include "teleguard/sim/operator.hpp"
#include "teleguard/sim/world.hpp"

namespace teleguard::assist {

using sim::Vec2;

enum class AssistMode { kOff, kStatic, kValue };

std::string to_string(AssistMode mode);
// Accepts off, static, value (and the long forms static-gain, value-guided).
AssistMode parse_assist_mode(const std::string& text);

// Diagonal gains are given per axis and shared by all arms.
struct AssistConfig {
  double kappa = 10.0;
  double tau_g = 0.5;
  Vec2 k_min = Vec2(0.0, 0.0);
  Vec2 k_max = Vec2(8.0, 8.0);
  Vec2 d0 = Vec2(0.05, 0.05);
  double delta_q_max = 0.01;
  double tau_max = 1.0;
  Vec2 coupling = Vec2(1.0, 1.0);  // S
  double dt_policy = 0.1;
  double dt_servo = 0.02;
  double cutoff_hz = 2.0;  // +inf disables the filter
  double yield_ratio = 1.0;
  double admittance_damping = 0.2;
  double static_gain = 0.5;
  int stale_policy_periods = 3;

  void validate() const;
  int ticks_per_policy() const;
  // exp(-2 pi f_c dt_servo)
  double filter_coefficient() const;
  static AssistConfig from_config(const ConfigMap& map, const std::string& prefix = "assist.");
  void to_config(ConfigMap& map, const std::string& prefix = "assist.") const;
};

// g = clip(sigmoid(kappa (tau_g - q_normalized)), 0, 1).
double intensity(double q_normalized, const AssistConfig& config);

// beta * previous + (1 - beta) * g_raw.
double lowpass(double g_raw, double previous, const AssistConfig& config);

// Elementwise K_min + g (K_max - K_min).
Vec2 stiffness(double g, const AssistConfig& config);

// q_dot_des = sat(S^-1 a dt_policy, delta_q_max) / dt_policy per arm.
std::vector<Vec2> reference_update(std::span<const Vec2> assist_action, const AssistConfig& config);

// sat(K_v(g) (q_dot_des - q_dot) - D0 q_dot, tau_max) per arm.
std::vector<Vec2> impedance_torque(std::span<const Vec2> q_dot_des, std::span<const Vec2> q_dot,
                                   double g, const AssistConfig& config);

// yield * tau * dt_servo / admittance_damping per arm.
std::vector<Vec2> admittance_offset(std::span<const Vec2> torque, const AssistConfig& config);

struct PolicyUpdate {
  std::vector<Vec2> assist_action;
  double q = 0.0;
  double q_normalized = 0.0;
  bool feasible = true;
};

struct GuidanceFrame {
  std::int64_t tick = 0;
  bool policy_refresh = false;
  bool stale = false;
  std::vector<Vec2> q_dot_des;
  double q = 0.0;
  double q_normalized = 0.0;
  bool feasible = true;
  double g_raw = 0.0;
  double g = 0.0;  // filtered; also logged as lambda
  Vec2 k_v = Vec2::Zero();
  std::vector<Vec2> torque;
  std::vector<Vec2> offset;
  std::vector<Vec2> intent;
  std::vector<Vec2> leader_velocity;
  std::vector<Vec2> executed;

  bool operator==(const GuidanceFrame& other) const;
};

// Single-owner servo loop state. Policy results are queued by submit() and
// absorbed at the start of the next tick.
class GuidanceController {
 public:
  GuidanceController(AssistConfig config, AssistMode mode, int num_arms, double command_max);

  void reset();
  bool policy_due() const { return tick_ % ticks_per_policy_ == 0; }
  void submit(PolicyUpdate update);
  // intent: the operator's leader-frame velocity before guidance.
  GuidanceFrame tick(std::span<const Vec2> intent);

  const AssistConfig& config() const { return config_; }
  AssistMode mode() const { return mode_; }
  // Takes effect on the next tick; must lie in [0, 1].
  void set_yield_ratio(double yield_ratio);
  double filtered_gain() const { return g_; }
  std::int64_t tick_index() const { return tick_; }

 private:
  AssistConfig config_;
  AssistMode mode_;
  int num_arms_;
  double command_max_;
  int ticks_per_policy_;
  std::optional<PolicyUpdate> pending_;
  std::vector<Vec2> q_dot_des_;
  double q_ = 0.0;
  double q_normalized_ = 0.0;
  bool feasible_ = true;
  double g_ = 0.0;
  std::int64_t tick_ = 0;
  std::int64_t ticks_since_refresh_ = 0;
  bool ever_refreshed_ = false;
};

}  // namespace teleguard::assist
