#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "teleguard/common/config_map.hpp"
#include "teleguard/common/random.hpp"

namespace teleguard::sim {

using Vec2 = Eigen::Vector2d;

enum class WallSide { kLeft = -1, kRight = 1 };

// A stretch of channel or funnel wall that jams when pushed into too fast.
struct JamZone {
  WallSide side = WallSide::kRight;
  double depth_begin = 0.0;  // [m]
  double depth_end = 0.0;    // [m]
  double speed_threshold = 0.0;  // inward normal speed [m/s]
};

// Planar peg-in-channel geometry, per arm, in the arm's local frame: x is
// lateral (0 on the centerline), y is depth below the funnel mouth. The funnel
// tapers linearly from funnel_half_width at y = 0 to channel_half_width at
// y = funnel_depth; below that the channel is straight down to goal_depth.
struct WorldConfig {
  int num_arms = 1;
  double channel_half_width = 0.02;
  double funnel_half_width = 0.08;
  double funnel_depth = 0.08;
  double goal_depth = 0.25;
  std::vector<JamZone> jam_zones = {
      {WallSide::kRight, 0.12, 0.22, 0.01},
      {WallSide::kLeft, 0.12, 0.22, 0.01},
  };
  double lateral_drift_gain = 0.2;
  double sensor_noise_std = 0.001;
  double start_jitter = 0.01;  // half-range of the uniform lateral start offset
  double command_max = 0.1;
  double dt = 0.02;
  double episode_limit = 30.0;
  std::uint64_t seed = 0;

  // Throws ValidationError.
  void validate() const;

  int obs_dim() const { return 8 * num_arms + 1; }
  int act_dim() const { return 2 * num_arms; }
  int max_steps() const;

  // Lateral wall position |x| at depth y.
  double half_width_at(double depth) const;

  static WorldConfig from_config(const ConfigMap& map, const std::string& prefix = "world.");
  void to_config(ConfigMap& map, const std::string& prefix = "world.") const;
};

struct ArmState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  bool contact = false;
};

// Immutable snapshot; copy freely.
struct SimState {
  std::vector<ArmState> arms;
  bool latched_failure = false;
  bool latched_success = false;
  std::int64_t step_index = 0;
  double t = 0.0;

  bool terminal() const { return latched_failure || latched_success; }
  bool operator==(const SimState& other) const;
};

enum class FailureCause { kNone, kJam, kTimeout };

struct Transition {
  FailureCause cause = FailureCause::kNone;
  int jammed_arm = -1;
  bool newly_latched = false;
  std::vector<Vec2> applied_velocity;  // command + drift, before projection
};

struct StepResult {
  SimState state;
  Transition transition;
};

// Per arm: noisy position, velocity, goal offset, wall distances (right, left);
// then normalized time remaining. Stored flat.
struct Observation {
  Eigen::VectorXd values;

  int num_arms() const { return static_cast<int>((values.size() - 1) / 8); }
  Vec2 position(int arm) const { return values.segment<2>(8 * arm); }
  Vec2 velocity(int arm) const { return values.segment<2>(8 * arm + 2); }
  Vec2 goal_offset(int arm) const { return values.segment<2>(8 * arm + 4); }
  Vec2 wall_distance(int arm) const { return values.segment<2>(8 * arm + 6); }
  double time_remaining() const { return values[values.size() - 1]; }
};

class World {
 public:
  explicit World(WorldConfig config);

  const WorldConfig& config() const { return config_; }

  // Lateral start offsets come from derive_seed(seed, kReset).
  SimState reset(std::uint64_t seed) const;

  // Throws std::logic_error on a latched state and ValidationError for
  // out-of-range commands.
  StepResult step(const SimState& state, std::span<const Vec2> commands) const;

  Observation observe(const SimState& state, Rng& noise) const;

  // Distances to right and left walls at the arm's true position.
  Vec2 wall_distances(const Vec2& position) const;

 private:
  WorldConfig config_;
};

}  // namespace teleguard::sim
