#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "teleguard/assist/controller.hpp"
#include "teleguard/learn/actor.hpp"
#include "teleguard/learn/critic.hpp"
#include "teleguard/sim/operator.hpp"
#include "teleguard/sim/world.hpp"

namespace teleguard::eval {

using sim::Vec2;

// Non-owning view of the learned components; either may be null when the mode
// does not need it.
struct Models {
  const learn::CriticModel* critic = nullptr;
  const learn::ActorModel* actor = nullptr;
};

Eigen::VectorXd flatten(std::span<const Vec2> arms);
std::vector<Vec2> unflatten(const Eigen::VectorXd& flat);

struct TickRecord {
  sim::Observation observation;  // seen by operator and policy this tick
  assist::GuidanceFrame frame;
  sim::SimState state;  // after the step
  sim::Transition transition;
};

// One closed-loop episode advanced one servo tick at a time. The same object
// drives offline evaluation and the interactive service, so both paths share
// every arithmetic operation.
class EpisodeRunner {
 public:
  EpisodeRunner(const sim::World& world, const assist::AssistConfig& assist,
                assist::AssistMode mode, Models models, std::uint64_t episode_seed);

  const sim::Observation& observation() const { return observation_; }
  const sim::SimState& state() const { return state_; }
  bool done() const { return state_.terminal(); }
  std::uint64_t episode_seed() const { return episode_seed_; }
  const assist::GuidanceController& controller() const { return controller_; }
  assist::GuidanceController& mutable_controller() { return controller_; }

  // intent: leader-frame operator velocity for this tick.
  TickRecord step(std::span<const Vec2> intent);

 private:
  const sim::World* world_;
  Models models_;
  assist::GuidanceController controller_;
  std::uint64_t episode_seed_;
  sim::SimState state_;
  Rng noise_;
  sim::Observation observation_;
};

struct EpisodeSummary {
  std::uint64_t seed = 0;
  bool success = false;
  sim::FailureCause cause = sim::FailureCause::kNone;
  int steps = 0;
  double duration = 0.0;          // steps * dt
  double mean_deviation = 0.0;    // mean ||executed - S intent||
  double max_deviation = 0.0;
  double mean_g = 0.0;
  double transparent_fraction = 0.0;  // share of ticks with g <= transparent_gain
  double max_abs_torque = 0.0;
  double min_g = 0.0;
  double max_g = 0.0;
};

struct EpisodeTrace {
  std::vector<double> q_normalized;
  std::vector<double> g;
  std::vector<double> deviation;
};

inline constexpr double kTransparentGain = 0.05;

// Synthetic-operator episode. Fills trace/ticks when given.
EpisodeSummary run_episode(const sim::World& world, const sim::OperatorConfig& op,
                           const assist::AssistConfig& assist, assist::AssistMode mode,
                           Models models, std::uint64_t episode_seed, EpisodeTrace* trace = nullptr,
                           std::vector<TickRecord>* ticks = nullptr);

}  // namespace teleguard::eval
