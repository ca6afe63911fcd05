#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "teleguard/sim/operator.hpp"
#include "teleguard/sim/world.hpp"

namespace teleguard::data {

enum class Outcome : std::uint8_t { kSuccess = 0, kFailure = 1 };

struct TrajectoryMeta {
  std::uint64_t episode_seed = 0;
  std::string operator_kind;
  std::uint64_t operator_seed = 0;
  int horizon = 10;
  double dt = 0.02;
  double episode_limit = 30.0;
  sim::FailureCause failure_cause = sim::FailureCause::kNone;

  bool operator==(const TrajectoryMeta&) const = default;
};

// One episode: T+1 observations, T operator commands, outcome, and the per-step
// labels derived from the outcome.
struct Trajectory {
  std::vector<Eigen::VectorXd> observations;
  std::vector<Eigen::VectorXd> commands;
  Outcome outcome = Outcome::kSuccess;
  std::vector<double> rewards;
  std::vector<std::uint8_t> fail_labels;
  TrajectoryMeta meta;

  int length() const { return static_cast<int>(commands.size()); }
  bool operator==(const Trajectory& other) const;
};

// r_t = +1 for every step of a success, -1 for every step of a failure.
std::vector<double> broadcast_rewards(Outcome outcome, int length);

// y_t = 1 iff the failure latch lands within the next `horizon` steps, i.e. on
// the state t+k for some 1 <= k <= horizon. The latch is the state after the last
// step, so this marks the final min(horizon, T) steps of a failed episode.
std::vector<std::uint8_t> short_horizon_labels(Outcome outcome, int length, int horizon);

// Throws CorruptFileError describing the first broken invariant.
void validate_trajectory(const Trajectory& trajectory);

// Accumulates one episode; finish() refuses an episode that never latched.
class TrajectoryRecorder {
 public:
  explicit TrajectoryRecorder(const Eigen::VectorXd& first_observation);

  void add(const Eigen::VectorXd& command, const Eigen::VectorXd& next_observation);
  Trajectory finish(const sim::SimState& final_state, TrajectoryMeta meta) &&;

 private:
  Trajectory trajectory_;
};

// Unassisted rollout of one synthetic operator; the only way the offline data is
// collected.
Trajectory record_episode(const sim::World& world, const sim::OperatorConfig& op,
                          std::uint64_t episode_seed, int horizon);

// Seed of episode i for operator slot k in a generated dataset.
std::uint64_t dataset_episode_seed(std::uint64_t base_seed, std::size_t operator_slot,
                                   std::size_t episode);

// episodes_per_operator unassisted episodes for each operator config, operator by
// operator.
std::vector<Trajectory> generate_trajectories(const sim::World& world,
                                              std::span<const sim::OperatorConfig> operators,
                                              int episodes_per_operator, std::uint64_t base_seed,
                                              int horizon);

}  // namespace teleguard::data
