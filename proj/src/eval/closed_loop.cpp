#include "teleguard/eval/closed_loop.hpp"

#include <algorithm>
#include <cmath>

#include "teleguard/common/errors.hpp"

namespace teleguard::eval {

Eigen::VectorXd flatten(std::span<const Vec2> arms) {
  Eigen::VectorXd out(2 * static_cast<Eigen::Index>(arms.size()));
  for (std::size_t i = 0; i < arms.size(); ++i) out.segment<2>(2 * i) = arms[i];
  return out;
}

std::vector<Vec2> unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() % 2 != 0) throw ValidationError("unflatten: odd action dimension");
  std::vector<Vec2> out(flat.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = flat.segment<2>(2 * i);
  return out;
}

EpisodeRunner::EpisodeRunner(const sim::World& world, const assist::AssistConfig& assist,
                             assist::AssistMode mode, Models models, std::uint64_t episode_seed)
    : world_(&world),
      models_(models),
      controller_(assist, mode, world.config().num_arms, world.config().command_max),
      episode_seed_(episode_seed),
      state_(world.reset(episode_seed)),
      noise_(derive_seed(episode_seed, streams::kObservation)) {
  if (mode != assist::AssistMode::kOff && !models.actor) {
    throw ValidationError("assisted mode requires an actor");
  }
  if (mode == assist::AssistMode::kValue && !models.critic) {
    throw ValidationError("value-guided mode requires a critic");
  }
  observation_ = world_->observe(state_, noise_);
}

TickRecord EpisodeRunner::step(std::span<const Vec2> intent) {
  if (done()) throw std::logic_error("EpisodeRunner::step after the episode latched");
  TickRecord rec;
  rec.observation = observation_;
  if (controller_.mode() != assist::AssistMode::kOff && controller_.policy_due()) {
    const Vec2 s = controller_.config().coupling;
    std::vector<Vec2> tele(intent.begin(), intent.end());
    for (auto& v : tele) v = s.cwiseProduct(v);
    assist::PolicyUpdate update;
    update.assist_action = unflatten(learn::assist_action(*models_.actor, observation_.values));
    if (models_.critic) {
      const learn::Score score = models_.critic->score(observation_.values, flatten(tele));
      update.q = score.q;
      update.q_normalized = score.q_normalized;
      update.feasible = score.feasible;
    }
    controller_.submit(std::move(update));
  }
  rec.frame = controller_.tick(intent);
  sim::StepResult result = world_->step(state_, rec.frame.executed);
  state_ = std::move(result.state);
  rec.state = state_;
  rec.transition = std::move(result.transition);
  observation_ = world_->observe(state_, noise_);
  return rec;
}

EpisodeSummary run_episode(const sim::World& world, const sim::OperatorConfig& op_config,
                           const assist::AssistConfig& assist, assist::AssistMode mode,
                           Models models, std::uint64_t episode_seed, EpisodeTrace* trace,
                           std::vector<TickRecord>* ticks) {
  EpisodeRunner runner(world, assist, mode, models, episode_seed);
  sim::Operator op(op_config, world.config().command_max, episode_seed);
  EpisodeSummary summary;
  summary.seed = episode_seed;
  summary.min_g = 1.0;
  double deviation_sum = 0.0, g_sum = 0.0;
  int transparent = 0;
  sim::FailureCause cause = sim::FailureCause::kNone;
  while (!runner.done()) {
    const auto intent = op.intent(runner.observation());
    TickRecord rec = runner.step(intent);
    const auto& f = rec.frame;
    double dev2 = 0.0;
    for (std::size_t i = 0; i < f.executed.size(); ++i) {
      dev2 += (f.executed[i] - assist.coupling.cwiseProduct(f.intent[i])).squaredNorm();
      summary.max_abs_torque = std::max(summary.max_abs_torque, f.torque[i].cwiseAbs().maxCoeff());
    }
    const double dev = std::sqrt(dev2);
    deviation_sum += dev;
    summary.max_deviation = std::max(summary.max_deviation, dev);
    g_sum += f.g;
    summary.min_g = std::min(summary.min_g, f.g);
    summary.max_g = std::max(summary.max_g, f.g);
    if (f.g <= kTransparentGain) ++transparent;
    cause = rec.transition.cause;
    if (trace) {
      trace->q_normalized.push_back(f.q_normalized);
      trace->g.push_back(f.g);
      trace->deviation.push_back(dev);
    }
    if (ticks) ticks->push_back(std::move(rec));
  }
  const sim::SimState& final_state = runner.state();
  summary.success = final_state.latched_success;
  summary.cause = cause;
  summary.steps = static_cast<int>(final_state.step_index);
  summary.duration = final_state.step_index * world.config().dt;
  if (summary.steps > 0) {
    summary.mean_deviation = deviation_sum / summary.steps;
    summary.mean_g = g_sum / summary.steps;
    summary.transparent_fraction = static_cast<double>(transparent) / summary.steps;
  } else {
    summary.min_g = 0.0;
  }
  return summary;
}

}  // namespace teleguard::eval
