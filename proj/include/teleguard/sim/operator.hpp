#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "teleguard/common/config_map.hpp"
#include "teleguard/common/random.hpp"
#include "teleguard/sim/world.hpp"

namespace teleguard::sim {

enum class OperatorKind { kExpert, kNoisy, kBiased };

std::string to_string(OperatorKind kind);
OperatorKind parse_operator_kind(const std::string& text);

// Bias gain of the biased benchmark operator; found by sweeping the unassisted
// failure rate over 200 seeded episodes (0.3: 30%, 0.4: 46%, 0.45: ~53%, 0.5: 60%).
inline constexpr double kBenchmarkBiasGain = 0.45;

// Synthetic operator. All kinds share the expert's P-steering toward the
// centerline and a constant descent; noisy adds stationary Gaussian velocity
// noise n_t = rho n_{t-1} + sqrt(1 - rho^2) noise_std e_t (rho = noise_correlation
// per call, 0 gives white noise), biased adds a per-episode constant push along bias_direction whose magnitude is
// bias_gain * command_max * U(0, 2).
struct OperatorConfig {
  OperatorKind kind = OperatorKind::kExpert;
  double noise_std = 0.03;
  double noise_correlation = 0.95;  // in [0, 1); 0.95 at 50 Hz is a ~0.4 s correlation time
  Vec2 bias_direction = Vec2(1.0, 0.0);
  double bias_gain = kBenchmarkBiasGain;
  double pd_gain = 2.0;
  double descend_speed = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
  static OperatorConfig from_config(const ConfigMap& map, const std::string& prefix = "operator.");
  void to_config(ConfigMap& map, const std::string& prefix = "operator.") const;
};

// Componentwise clamp of intent + offset to [-command_max, command_max].
std::vector<Vec2> apply_offset(std::span<const Vec2> intent, std::span<const Vec2> offset,
                               double command_max);

class Operator {
 public:
  Operator(OperatorConfig config, double command_max, std::uint64_t episode_seed);

  // Draws from the operator's noise stream (noisy kind only).
  std::vector<Vec2> intent(const Observation& obs);

  // intent(obs) + guidance offset, clamped.
  std::vector<Vec2> command(const Observation& obs, std::span<const Vec2> guidance_offset);

  const OperatorConfig& config() const { return config_; }
  double bias_magnitude() const { return bias_magnitude_; }

 private:
  OperatorConfig config_;
  double command_max_;
  double bias_magnitude_ = 0.0;
  Rng rng_;
  std::vector<Vec2> noise_;  // per arm; empty until the first draw
};

}  // namespace teleguard::sim
