#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "teleguard/assist/controller.hpp"
#include "teleguard/common/config_map.hpp"
#include "teleguard/eval/closed_loop.hpp"
#include "teleguard/service/wire.hpp"
#include "teleguard/sim/world.hpp"

namespace teleguard::service {

struct SessionConfig {
  sim::WorldConfig world;
  assist::AssistConfig assist;
  assist::AssistMode mode = assist::AssistMode::kValue;
  std::uint64_t base_seed = 0;   // episode k uses base_seed + k
  double deadman_timeout = 0.5;  // [s]; <= 0 disables the watchdog
  int deadman_ramp_ticks = 5;
  bool auto_reset = true;

  void validate() const;
  // "service." keys plus the world and assist sections.
  static SessionConfig from_config(const ConfigMap& map);
  void to_config(ConfigMap& map) const;
};

struct FrameContext {
  std::uint64_t episode = 0;
  std::int64_t tick = 0;
  std::string mode;
  double assist_level = 1.0;
  std::uint64_t ack_seq = 0;
  double echo_client_time = 0.0;
};

// Frame for one executed tick; `after` is the observation produced by the step.
StateFrame make_state_frame(const eval::TickRecord& record, const sim::Observation& after,
                            std::uint64_t episode_seed, const FrameContext& context);

// Servo-loop state machine with no I/O: the server feeds it commands and clock
// readings, and broadcasts what tick() returns.
class ServoSession {
 public:
  ServoSession(SessionConfig config, eval::Models models);

  // Latest-wins: returns false (dropped) unless seq exceeds every accepted seq.
  // Throws ValidationError on an arm-count mismatch.
  bool submit_command(const CommandInput& command, std::uint64_t seq, double now);
  // A new driver starts from a zero intent and a fresh seq window.
  void set_driver_present(bool present, double now);
  bool driver_present() const { return driver_present_; }
  // Throws ValidationError on an unknown mode or a level outside [0, 1].
  void control(const EpisodeControl& control);

  // One servo tick. Without a driver the episode clock is paused and an idle
  // frame is returned.
  StateFrame tick(double now);

  const SessionConfig& config() const { return config_; }
  std::uint64_t episode() const { return episode_; }
  std::uint64_t episode_seed() const { return config_.base_seed + episode_; }
  assist::AssistMode mode() const { return mode_; }

 private:
  void start_episode(std::optional<std::uint64_t> seed);
  std::vector<Vec2> current_intent(double now);
  StateFrame idle_frame() const;

  SessionConfig config_;
  eval::Models models_;
  std::unique_ptr<sim::World> world_;  // heap-held: runner_ keeps a pointer across moves
  assist::AssistMode mode_;
  double assist_level_ = 1.0;
  std::unique_ptr<eval::EpisodeRunner> runner_;
  std::uint64_t episode_ = 0;
  std::uint64_t current_seed_ = 0;
  std::int64_t tick_ = 0;
  bool driver_present_ = false;
  bool reset_pending_ = false;
  std::vector<Vec2> held_;
  double last_command_time_ = 0.0;
  double last_client_time_ = 0.0;
  std::uint64_t last_seq_ = 0;
  int ramp_ticks_ = 0;
};

}  // namespace teleguard::service
