#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "teleguard/sim/world.hpp"

// Wire protocol version 1.
//
// Framing: ASCII decimal byte count, '\n', then that many bytes of UTF-8 JSON.
// Every JSON object carries "v" (protocol version string), "seq" (sender's
// per-connection counter, starting at 1) and "type". Vectors of per-arm 2D
// values are arrays of [x, y] pairs. Non-finite numbers are not representable
// and make a message malformed.
namespace teleguard::service {

using sim::Vec2;

inline constexpr const char* kProtocolVersion = "1";
inline constexpr std::size_t kMaxMessageBytes = 1 << 20;

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// type "hello": first message from a client.
struct ClientHello {
  std::string version = kProtocolVersion;
  bool spectator = false;  // request a spectator seat even if driving is free
  std::string name;
  bool operator==(const ClientHello&) const = default;
};

// type "command": leader-frame velocity per arm; latest-wins by seq.
struct CommandInput {
  std::vector<Vec2> velocity;
  double client_time = 0.0;  // client clock [s], echoed back in frames
  double rtt = -1.0;         // client-measured round trip [s]; negative if unknown
  bool operator==(const CommandInput&) const = default;
};

// type "state": one per servo tick.
struct StateFrame {
  std::uint64_t episode = 0;
  std::uint64_t episode_seed = 0;
  std::int64_t tick = 0;        // servo ticks since server start
  std::int64_t step_index = 0;  // steps into the current episode
  double t = 0.0;
  std::string status;  // idle, running, success, failure
  std::string mode;
  std::vector<Vec2> position;
  std::vector<Vec2> velocity;
  std::vector<bool> contact;
  std::vector<double> observation;
  double q = 0.0;
  double q_normalized = 0.0;
  double g_raw = 0.0;
  double g = 0.0;
  bool feasible = true;
  bool stale = true;
  std::vector<Vec2> tau;
  std::vector<Vec2> q_dot_des;
  std::vector<Vec2> intent;
  std::vector<Vec2> offset;
  std::vector<Vec2> executed;
  double assist_level = 1.0;
  std::uint64_t ack_seq = 0;  // highest accepted command seq from the driver
  double echo_client_time = 0.0;
  bool operator==(const StateFrame&) const = default;
};

// type "control": driver-only episode management.
struct EpisodeControl {
  enum class Action { kReset, kSetMode, kSetAssistLevel };
  Action action = Action::kReset;
  std::string mode;            // kSetMode: off, static, value
  double assist_level = 1.0;   // kSetAssistLevel: in [0, 1]
  std::optional<std::uint64_t> seed;  // kReset: explicit episode seed
  bool operator==(const EpisodeControl&) const = default;
};

struct JitterStats {
  std::uint64_t samples = 0;
  double p50 = 0.0;  // |actual period - dt_servo| [s]
  double p99 = 0.0;
  double max = 0.0;
  bool operator==(const JitterStats&) const = default;
};

// type "info": sent after a successful hello and then once per second.
struct ServerInfo {
  std::string role;  // driver or spectator
  std::string config;  // resolved key=value text
  double dt_servo = 0.02;
  double dt_policy = 0.1;
  int num_arms = 1;
  double command_max = 0.1;
  std::string mode;
  bool lockstep = false;
  JitterStats jitter;
  double rtt = -1.0;  // latest client-reported round trip [s]
  std::uint64_t malformed = 0;  // messages dropped on this connection
  bool operator==(const ServerInfo&) const = default;
};

// type "refused": sent before the server closes a connection.
struct Refused {
  std::string reason;
  bool operator==(const Refused&) const = default;
};

using Message = std::variant<ClientHello, CommandInput, StateFrame, EpisodeControl, ServerInfo, Refused>;

struct Envelope {
  std::string version;
  std::uint64_t seq = 0;
  Message body;
};

std::string message_type(const Message& m);

// JSON text for one message.
std::string encode(const Message& message, std::uint64_t seq);
// Throws WireError on malformed JSON, unknown type, missing or non-finite fields.
// A version other than kProtocolVersion is returned as-is for the caller to judge.
Envelope decode(std::string_view json);

// Length prefix + payload.
std::string frame(std::string_view payload);

// Incremental splitter over a byte stream.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  // Next complete payload, if any. Throws WireError on a corrupt length header,
  // after which the stream cannot be resynchronized.
  std::optional<std::string> next();

 private:
  std::string buffer_;
};

}  // namespace teleguard::service
