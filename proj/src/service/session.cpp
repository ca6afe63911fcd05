#include "teleguard/service/session.hpp"

#include <algorithm>
#include <cmath>

#include "teleguard/common/errors.hpp"

namespace teleguard::service {

void SessionConfig::validate() const {
  world.validate();
  assist.validate();
  if (std::abs(assist.dt_servo - world.dt) > 1e-12) {
    throw ValidationError("service: assist.dt_servo must equal world.dt");
  }
  if (deadman_ramp_ticks < 1) throw ValidationError("service: deadman_ramp_ticks must be >= 1");
}

SessionConfig SessionConfig::from_config(const ConfigMap& map) {
  SessionConfig c;
  c.world = sim::WorldConfig::from_config(map);
  c.assist = assist::AssistConfig::from_config(map);
  c.mode = assist::parse_assist_mode(map.get_string("service.mode", assist::to_string(c.mode)));
  c.base_seed = map.get_uint("service.seed", c.base_seed);
  c.deadman_timeout = map.get_double("service.deadman_timeout", c.deadman_timeout);
  c.deadman_ramp_ticks =
      static_cast<int>(map.get_int("service.deadman_ramp_ticks", c.deadman_ramp_ticks));
  c.auto_reset = map.get_bool("service.auto_reset", c.auto_reset);
  c.validate();
  return c;
}

void SessionConfig::to_config(ConfigMap& map) const {
  world.to_config(map);
  assist.to_config(map);
  map.set("service.mode", assist::to_string(mode));
  map.set("service.seed", std::to_string(base_seed));
  map.set("service.deadman_timeout", format_double(deadman_timeout));
  map.set("service.deadman_ramp_ticks", std::to_string(deadman_ramp_ticks));
  map.set("service.auto_reset", auto_reset ? "true" : "false");
}

StateFrame make_state_frame(const eval::TickRecord& rec, const sim::Observation& after,
                            std::uint64_t episode_seed, const FrameContext& ctx) {
  StateFrame f;
  f.episode = ctx.episode;
  f.episode_seed = episode_seed;
  f.tick = ctx.tick;
  f.step_index = rec.state.step_index;
  f.t = rec.state.t;
  f.status = rec.state.latched_failure   ? "failure"
             : rec.state.latched_success ? "success"
                                         : "running";
  f.mode = ctx.mode;
  for (const auto& arm : rec.state.arms) {
    f.position.push_back(arm.position);
    f.velocity.push_back(arm.velocity);
    f.contact.push_back(arm.contact);
  }
  f.observation.assign(after.values.data(), after.values.data() + after.values.size());
  const auto& g = rec.frame;
  f.q = g.q;
  f.q_normalized = g.q_normalized;
  f.g_raw = g.g_raw;
  f.g = g.g;
  f.feasible = g.feasible;
  f.stale = g.stale;
  f.tau = g.torque;
  f.q_dot_des = g.q_dot_des;
  f.intent = g.intent;
  f.offset = g.offset;
  f.executed = g.executed;
  f.assist_level = ctx.assist_level;
  f.ack_seq = ctx.ack_seq;
  f.echo_client_time = ctx.echo_client_time;
  return f;
}

ServoSession::ServoSession(SessionConfig config, eval::Models models)
    : config_(std::move(config)), models_(models), world_(std::make_unique<sim::World>(config_.world)), mode_(config_.mode) {
  config_.validate();
  held_.assign(config_.world.num_arms, Vec2::Zero());
  start_episode(config_.base_seed);
}

void ServoSession::start_episode(std::optional<std::uint64_t> seed) {
  current_seed_ = seed ? *seed : config_.base_seed + episode_;
  runner_ = std::make_unique<eval::EpisodeRunner>(*world_, config_.assist, mode_, models_,
                                                  current_seed_);
  runner_->mutable_controller().set_yield_ratio(config_.assist.yield_ratio * assist_level_);
  reset_pending_ = false;
}

bool ServoSession::submit_command(const CommandInput& command, std::uint64_t seq, double now) {
  if (static_cast<int>(command.velocity.size()) != config_.world.num_arms) {
    throw ValidationError("command has " + std::to_string(command.velocity.size()) +
                          " arms, expected " + std::to_string(config_.world.num_arms));
  }
  if (seq <= last_seq_) return false;
  last_seq_ = seq;
  const double cmax = config_.world.command_max;
  for (std::size_t i = 0; i < held_.size(); ++i) {
    held_[i] = command.velocity[i].cwiseMax(-cmax).cwiseMin(cmax);
  }
  last_command_time_ = now;
  last_client_time_ = command.client_time;
  ramp_ticks_ = 0;
  return true;
}

void ServoSession::set_driver_present(bool present, double now) {
  if (present && !driver_present_) {
    held_.assign(config_.world.num_arms, Vec2::Zero());
    last_seq_ = 0;
    last_command_time_ = now;
    ramp_ticks_ = 0;
  }
  driver_present_ = present;
}

void ServoSession::control(const EpisodeControl& c) {
  switch (c.action) {
    case EpisodeControl::Action::kReset:
      ++episode_;
      start_episode(c.seed);
      break;
    case EpisodeControl::Action::kSetMode: {
      const auto mode = assist::parse_assist_mode(c.mode);
      if (mode != assist::AssistMode::kOff && !models_.actor) {
        throw ValidationError("mode '" + c.mode + "' needs an actor checkpoint");
      }
      if (mode == assist::AssistMode::kValue && !models_.critic) {
        throw ValidationError("mode 'value' needs a critic checkpoint");
      }
      mode_ = mode;
      ++episode_;
      start_episode(c.seed);
      break;
    }
    case EpisodeControl::Action::kSetAssistLevel:
      if (!(c.assist_level >= 0 && c.assist_level <= 1)) {
        throw ValidationError("assist level must lie in [0, 1]");
      }
      assist_level_ = c.assist_level;
      runner_->mutable_controller().set_yield_ratio(config_.assist.yield_ratio * assist_level_);
      break;
  }
}

std::vector<Vec2> ServoSession::current_intent(double now) {
  if (config_.deadman_timeout <= 0 || now - last_command_time_ <= config_.deadman_timeout) {
    return held_;
  }
  // Linear ramp to zero over deadman_ramp_ticks ticks.
  ramp_ticks_ = std::min(ramp_ticks_ + 1, config_.deadman_ramp_ticks);
  const double scale = 1.0 - static_cast<double>(ramp_ticks_) / config_.deadman_ramp_ticks;
  std::vector<Vec2> out = held_;
  for (auto& v : out) v *= scale;
  if (ramp_ticks_ == config_.deadman_ramp_ticks) held_.assign(held_.size(), Vec2::Zero());
  return out;
}

StateFrame ServoSession::idle_frame() const {
  StateFrame f;
  f.episode = episode_;
  f.episode_seed = current_seed_;
  f.tick = tick_;
  const auto& s = runner_->state();
  f.step_index = s.step_index;
  f.t = s.t;
  f.status = "idle";
  f.mode = assist::to_string(mode_);
  for (const auto& arm : s.arms) {
    f.position.push_back(arm.position);
    f.velocity.push_back(arm.velocity);
    f.contact.push_back(arm.contact);
  }
  const auto& obs = runner_->observation().values;
  f.observation.assign(obs.data(), obs.data() + obs.size());
  const auto zeros = std::vector<Vec2>(config_.world.num_arms, Vec2::Zero());
  f.g = runner_->controller().filtered_gain();
  f.tau = f.q_dot_des = f.intent = f.offset = f.executed = zeros;
  f.assist_level = assist_level_;
  f.ack_seq = last_seq_;
  f.echo_client_time = last_client_time_;
  return f;
}

StateFrame ServoSession::tick(double now) {
  if (reset_pending_ && config_.auto_reset) {
    ++episode_;
    start_episode(std::nullopt);
  }
  if (!driver_present_ || runner_->done()) {
    StateFrame f = idle_frame();
    ++tick_;
    return f;
  }
  const auto intent = current_intent(now);
  eval::TickRecord rec = runner_->step(intent);
  FrameContext ctx{episode_, tick_, assist::to_string(mode_), assist_level_, last_seq_,
                   last_client_time_};
  StateFrame f = make_state_frame(rec, runner_->observation(), current_seed_, ctx);
  if (runner_->done()) reset_pending_ = true;
  ++tick_;
  return f;
}

}  // namespace teleguard::service
