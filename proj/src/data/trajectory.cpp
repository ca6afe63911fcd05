#include "teleguard/data/trajectory.hpp"

#include <stdexcept>

#include "teleguard/common/errors.hpp"

namespace teleguard::data {

bool Trajectory::operator==(const Trajectory& other) const {
  if (observations.size() != other.observations.size() ||
      commands.size() != other.commands.size()) {
    return false;
  }
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (observations[i].size() != other.observations[i].size() ||
        observations[i] != other.observations[i]) {
      return false;
    }
  }
  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (commands[i].size() != other.commands[i].size() || commands[i] != other.commands[i]) {
      return false;
    }
  }
  return outcome == other.outcome && rewards == other.rewards &&
         fail_labels == other.fail_labels && meta == other.meta;
}

std::vector<double> broadcast_rewards(Outcome outcome, int length) {
  return std::vector<double>(length, outcome == Outcome::kSuccess ? 1.0 : -1.0);
}

std::vector<std::uint8_t> short_horizon_labels(Outcome outcome, int length, int horizon) {
  if (horizon < 0) throw ValidationError("horizon must be >= 0");
  std::vector<std::uint8_t> labels(length, 0);
  if (outcome != Outcome::kFailure) return labels;
  for (int t = 0; t < length; ++t) {
    // latch state index is `length`; step t sees states t+1 .. t+horizon
    labels[t] = (length - t <= horizon) ? 1 : 0;
  }
  return labels;
}

void validate_trajectory(const Trajectory& tr) {
  const int T = tr.length();
  auto fail = [](const std::string& what) { throw CorruptFileError("trajectory: " + what); };
  if (T < 1) fail("empty trajectory");
  if (static_cast<int>(tr.observations.size()) != T + 1) fail("observation count != T+1");
  if (static_cast<int>(tr.rewards.size()) != T) fail("reward count != T");
  if (static_cast<int>(tr.fail_labels.size()) != T) fail("label count != T");
  if (tr.rewards != broadcast_rewards(tr.outcome, T)) fail("rewards violate the broadcast rule");
  if (tr.fail_labels != short_horizon_labels(tr.outcome, T, tr.meta.horizon)) {
    fail("short-horizon failure labels inconsistent with outcome");
  }
  if (T * tr.meta.dt > tr.meta.episode_limit + 1e-9) fail("length exceeds episode limit");
  const auto obs_dim = tr.observations.front().size();
  for (const auto& o : tr.observations) {
    if (o.size() != obs_dim) fail("inconsistent observation dimension");
  }
  const auto act_dim = tr.commands.front().size();
  for (const auto& a : tr.commands) {
    if (a.size() != act_dim) fail("inconsistent command dimension");
  }
}

TrajectoryRecorder::TrajectoryRecorder(const Eigen::VectorXd& first_observation) {
  trajectory_.observations.push_back(first_observation);
}

void TrajectoryRecorder::add(const Eigen::VectorXd& command,
                             const Eigen::VectorXd& next_observation) {
  trajectory_.commands.push_back(command);
  trajectory_.observations.push_back(next_observation);
}

Trajectory TrajectoryRecorder::finish(const sim::SimState& final_state, TrajectoryMeta meta) && {
  if (!final_state.terminal()) {
    throw std::logic_error("cannot record an unterminated episode (no latch or timeout)");
  }
  if (trajectory_.commands.empty()) throw std::logic_error("cannot record an empty episode");
  trajectory_.outcome = final_state.latched_success ? Outcome::kSuccess : Outcome::kFailure;
  trajectory_.meta = std::move(meta);
  trajectory_.rewards = broadcast_rewards(trajectory_.outcome, trajectory_.length());
  trajectory_.fail_labels =
      short_horizon_labels(trajectory_.outcome, trajectory_.length(), trajectory_.meta.horizon);
  return std::move(trajectory_);
}

namespace {

Eigen::VectorXd flatten(const std::vector<sim::Vec2>& commands) {
  Eigen::VectorXd out(2 * commands.size());
  for (std::size_t i = 0; i < commands.size(); ++i) out.segment<2>(2 * i) = commands[i];
  return out;
}

}  // namespace

Trajectory record_episode(const sim::World& world, const sim::OperatorConfig& op_config,
                          std::uint64_t episode_seed, int horizon) {
  sim::SimState state = world.reset(episode_seed);
  Rng noise(derive_seed(episode_seed, streams::kObservation));
  sim::Operator op(op_config, world.config().command_max, episode_seed);

  sim::Observation obs = world.observe(state, noise);
  TrajectoryRecorder recorder(obs.values);
  sim::FailureCause cause = sim::FailureCause::kNone;
  while (!state.terminal()) {
    const auto command = op.intent(obs);
    auto result = world.step(state, command);
    state = std::move(result.state);
    cause = result.transition.cause;
    obs = world.observe(state, noise);
    recorder.add(flatten(command), obs.values);
  }
  TrajectoryMeta meta;
  meta.episode_seed = episode_seed;
  meta.operator_kind = sim::to_string(op_config.kind);
  meta.operator_seed = op_config.seed;
  meta.horizon = horizon;
  meta.dt = world.config().dt;
  meta.episode_limit = world.config().episode_limit;
  meta.failure_cause = cause;
  return std::move(recorder).finish(state, std::move(meta));
}

std::uint64_t dataset_episode_seed(std::uint64_t base_seed, std::size_t operator_slot,
                                   std::size_t episode) {
  return derive_seed(derive_seed(base_seed, 1000 + operator_slot), episode);
}

std::vector<Trajectory> generate_trajectories(const sim::World& world,
                                              std::span<const sim::OperatorConfig> operators,
                                              int episodes_per_operator, std::uint64_t base_seed,
                                              int horizon) {
  if (episodes_per_operator < 0) throw ValidationError("episode count must be >= 0");
  std::vector<Trajectory> out;
  out.reserve(operators.size() * static_cast<std::size_t>(episodes_per_operator));
  for (std::size_t k = 0; k < operators.size(); ++k) {
    for (int i = 0; i < episodes_per_operator; ++i) {
      out.push_back(record_episode(world, operators[k],
                                   dataset_episode_seed(base_seed, k, static_cast<std::size_t>(i)),
                                   horizon));
    }
  }
  return out;
}

}  // namespace teleguard::data
