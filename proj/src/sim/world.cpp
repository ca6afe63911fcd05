#include "teleguard/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "teleguard/common/errors.hpp"

namespace teleguard::sim {
namespace {

std::vector<JamZone> parse_jam_zones(const std::string& text) {
  std::vector<JamZone> zones;
  if (text == "none" || text.empty()) return zones;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    std::stringstream fields(item);
    std::string side, begin, end, threshold;
    if (!std::getline(fields, side, ':') || !std::getline(fields, begin, ':') ||
        !std::getline(fields, end, ':') || !std::getline(fields, threshold, ':')) {
      throw ValidationError("jam zone must be side:begin:end:threshold, got '" + item + "'");
    }
    JamZone zone;
    if (side == "left") {
      zone.side = WallSide::kLeft;
    } else if (side == "right") {
      zone.side = WallSide::kRight;
    } else {
      throw ValidationError("jam zone side must be left or right, got '" + side + "'");
    }
    ConfigMap tmp;
    tmp.set("b", begin);
    tmp.set("e", end);
    tmp.set("t", threshold);
    zone.depth_begin = tmp.get_double("b", 0);
    zone.depth_end = tmp.get_double("e", 0);
    zone.speed_threshold = tmp.get_double("t", 0);
    zones.push_back(zone);
  }
  return zones;
}

std::string format_jam_zones(const std::vector<JamZone>& zones) {
  if (zones.empty()) return "none";
  std::string out;
  for (const auto& z : zones) {
    if (!out.empty()) out += ";";
    out += (z.side == WallSide::kLeft ? "left:" : "right:") + format_double(z.depth_begin) +
           ":" + format_double(z.depth_end) + ":" + format_double(z.speed_threshold);
  }
  return out;
}

}  // namespace

void WorldConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError("world config: " + what);
  };
  require(num_arms == 1 || num_arms == 2, "num_arms must be 1 or 2");
  require(channel_half_width > 0, "channel_half_width must be > 0");
  require(channel_half_width < funnel_half_width, "channel_half_width must be < funnel_half_width");
  require(funnel_depth > 0, "funnel_depth must be > 0");
  require(goal_depth > funnel_depth, "goal_depth must exceed funnel_depth");
  require(lateral_drift_gain >= 0, "lateral_drift_gain must be >= 0");
  require(sensor_noise_std >= 0, "sensor_noise_std must be >= 0");
  require(start_jitter >= 0 && start_jitter < funnel_half_width, "start_jitter out of range");
  require(command_max > 0, "command_max must be > 0");
  require(dt > 0, "dt must be > 0");
  require(episode_limit > 0, "episode_limit must be > 0");
  for (const auto& z : jam_zones) {
    require(z.speed_threshold > 0, "jam zone threshold must be > 0");
    require(z.depth_begin <= z.depth_end, "jam zone begin must be <= end");
  }
}

int WorldConfig::max_steps() const {
  return static_cast<int>(std::ceil(episode_limit / dt - 1e-9));
}

double WorldConfig::half_width_at(double depth) const {
  if (depth >= funnel_depth) return channel_half_width;
  const double frac = std::max(depth, 0.0) / funnel_depth;
  return funnel_half_width - (funnel_half_width - channel_half_width) * frac;
}

WorldConfig WorldConfig::from_config(const ConfigMap& map, const std::string& prefix) {
  WorldConfig c;
  c.num_arms = static_cast<int>(map.get_int(prefix + "num_arms", c.num_arms));
  c.channel_half_width = map.get_double(prefix + "channel_half_width", c.channel_half_width);
  c.funnel_half_width = map.get_double(prefix + "funnel_half_width", c.funnel_half_width);
  c.funnel_depth = map.get_double(prefix + "funnel_depth", c.funnel_depth);
  c.goal_depth = map.get_double(prefix + "goal_depth", c.goal_depth);
  if (const auto zones = map.raw(prefix + "jam_zones")) c.jam_zones = parse_jam_zones(*zones);
  c.lateral_drift_gain = map.get_double(prefix + "lateral_drift_gain", c.lateral_drift_gain);
  c.sensor_noise_std = map.get_double(prefix + "sensor_noise_std", c.sensor_noise_std);
  c.start_jitter = map.get_double(prefix + "start_jitter", c.start_jitter);
  c.command_max = map.get_double(prefix + "command_max", c.command_max);
  c.dt = map.get_double(prefix + "dt", c.dt);
  c.episode_limit = map.get_double(prefix + "episode_limit", c.episode_limit);
  c.seed = map.get_uint(prefix + "seed", c.seed);
  c.validate();
  return c;
}

void WorldConfig::to_config(ConfigMap& map, const std::string& prefix) const {
  map.set(prefix + "num_arms", std::to_string(num_arms));
  map.set(prefix + "channel_half_width", format_double(channel_half_width));
  map.set(prefix + "funnel_half_width", format_double(funnel_half_width));
  map.set(prefix + "funnel_depth", format_double(funnel_depth));
  map.set(prefix + "goal_depth", format_double(goal_depth));
  map.set(prefix + "jam_zones", format_jam_zones(jam_zones));
  map.set(prefix + "lateral_drift_gain", format_double(lateral_drift_gain));
  map.set(prefix + "sensor_noise_std", format_double(sensor_noise_std));
  map.set(prefix + "start_jitter", format_double(start_jitter));
  map.set(prefix + "command_max", format_double(command_max));
  map.set(prefix + "dt", format_double(dt));
  map.set(prefix + "episode_limit", format_double(episode_limit));
  map.set(prefix + "seed", std::to_string(seed));
}

bool SimState::operator==(const SimState& other) const {
  if (arms.size() != other.arms.size()) return false;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    if (arms[i].position != other.arms[i].position ||
        arms[i].velocity != other.arms[i].velocity || arms[i].contact != other.arms[i].contact) {
      return false;
    }
  }
  return latched_failure == other.latched_failure && latched_success == other.latched_success &&
         step_index == other.step_index && t == other.t;
}

World::World(WorldConfig config) : config_(std::move(config)) { config_.validate(); }

SimState World::reset(std::uint64_t seed) const {
  Rng rng(derive_seed(seed, streams::kReset));
  std::uniform_real_distribution<double> jitter(-config_.start_jitter, config_.start_jitter);
  SimState state;
  state.arms.resize(config_.num_arms);
  for (auto& arm : state.arms) {
    arm.position = Vec2(config_.start_jitter > 0 ? jitter(rng) : 0.0, 0.0);
    arm.velocity = Vec2::Zero();
  }
  return state;
}

StepResult World::step(const SimState& state, std::span<const Vec2> commands) const {
  if (state.latched_failure) throw std::logic_error("step() on a failure-latched state; reset first");
  if (state.latched_success) throw std::logic_error("step() on a success-latched state; reset first");
  if (static_cast<int>(commands.size()) != config_.num_arms) {
    throw ValidationError("step(): expected " + std::to_string(config_.num_arms) + " commands");
  }

  const double cw = config_.channel_half_width;
  const double funnel_slope =
      (config_.funnel_half_width - config_.channel_half_width) / config_.funnel_depth;

  StepResult result;
  result.state = state;
  result.transition.applied_velocity.resize(commands.size());
  bool all_at_goal = true;

  for (int i = 0; i < config_.num_arms; ++i) {
    const Vec2& u = commands[i];
    if (!u.allFinite() || u.cwiseAbs().maxCoeff() > config_.command_max * (1.0 + 1e-12)) {
      throw ValidationError("step(): command exceeds command_max or is not finite");
    }
    const ArmState& before = state.arms[i];
    ArmState& arm = result.state.arms[i];
    const Vec2& p = before.position;

    Vec2 applied = u;
    if (p.y() < config_.funnel_depth && p.x() != 0.0) {
      applied.x() += std::copysign(config_.lateral_drift_gain * u.norm(), p.x());
    }
    const Vec2 free = p + config_.dt * applied;

    const double y = std::clamp(free.y(), 0.0, config_.goal_depth);
    const double hw = config_.half_width_at(y);
    const double x = std::clamp(free.x(), -hw, hw);
    arm.contact = std::abs(free.x()) > hw;
    arm.position = Vec2(x, y);
    arm.velocity = (arm.position - p) / config_.dt;
    result.transition.applied_velocity[i] = applied;

    if (arm.contact && result.transition.cause == FailureCause::kNone) {
      const double side = free.x() > 0 ? 1.0 : -1.0;
      const double slope = y < config_.funnel_depth ? funnel_slope : 0.0;
      const Vec2 normal = Vec2(side, slope).normalized();
      const double inward_speed = applied.dot(normal);
      for (const auto& zone : config_.jam_zones) {
        if (static_cast<double>(zone.side) != side) continue;
        if (y < zone.depth_begin || y > zone.depth_end) continue;
        if (inward_speed > zone.speed_threshold) {
          result.transition.cause = FailureCause::kJam;
          result.transition.jammed_arm = i;
          break;
        }
      }
    }
    all_at_goal = all_at_goal && y >= config_.goal_depth && std::abs(x) <= cw;
  }

  result.state.step_index = state.step_index + 1;
  result.state.t = static_cast<double>(result.state.step_index) * config_.dt;

  if (result.transition.cause == FailureCause::kJam) {
    result.state.latched_failure = true;
  } else if (all_at_goal) {
    result.state.latched_success = true;
  } else if (result.state.step_index >= config_.max_steps()) {
    result.state.latched_failure = true;
    result.transition.cause = FailureCause::kTimeout;
  }
  result.transition.newly_latched = result.state.terminal();
  return result;
}

Vec2 World::wall_distances(const Vec2& position) const {
  const double hw = config_.half_width_at(position.y());
  return Vec2(std::max(0.0, hw - position.x()), std::max(0.0, hw + position.x()));
}

Observation World::observe(const SimState& state, Rng& noise) const {
  Observation obs;
  obs.values.resize(config_.obs_dim());
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < config_.num_arms; ++i) {
    const ArmState& arm = state.arms[i];
    Vec2 noisy = arm.position;
    if (config_.sensor_noise_std > 0) {
      noisy.x() += config_.sensor_noise_std * gauss(noise);
      noisy.y() += config_.sensor_noise_std * gauss(noise);
    }
    obs.values.segment<2>(8 * i) = noisy;
    obs.values.segment<2>(8 * i + 2) = arm.velocity;
    obs.values.segment<2>(8 * i + 4) = Vec2(0.0, config_.goal_depth) - noisy;
    obs.values.segment<2>(8 * i + 6) = wall_distances(arm.position);
  }
  obs.values[obs.values.size() - 1] = std::clamp(1.0 - state.t / config_.episode_limit, 0.0, 1.0);
  return obs;
}

}  // namespace teleguard::sim
