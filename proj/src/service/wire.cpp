#include "teleguard/service/wire.hpp"

#include <cmath>
#include <charconv>

#include <json.hpp>

namespace teleguard::service {
namespace {

using Json = nlohmann::ordered_json;

Json vec2s(const std::vector<Vec2>& v) {
  Json a = Json::array();
  for (const auto& p : v) a.push_back(Json::array({p.x(), p.y()}));
  return a;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw WireError(what);
}

double number(const Json& j, const char* key) {
  require(j.contains(key), std::string("missing field '") + key + "'");
  const Json& v = j.at(key);
  require(v.is_number(), std::string("field '") + key + "' is not a number");
  const double d = v.get<double>();
  require(std::isfinite(d), std::string("field '") + key + "' is not finite");
  return d;
}

double number_or(const Json& j, const char* key, double fallback) {
  return j.contains(key) ? number(j, key) : fallback;
}

std::uint64_t unsigned_field(const Json& j, const char* key) {
  require(j.contains(key), std::string("missing field '") + key + "'");
  const Json& v = j.at(key);
  require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0),
          std::string("field '") + key + "' is not a non-negative integer");
  return v.get<std::uint64_t>();
}

std::int64_t integer_field(const Json& j, const char* key) {
  require(j.contains(key) && j.at(key).is_number_integer(),
          std::string("field '") + key + "' is not an integer");
  return j.at(key).get<std::int64_t>();
}

std::string string_field(const Json& j, const char* key) {
  require(j.contains(key) && j.at(key).is_string(),
          std::string("field '") + key + "' is not a string");
  return j.at(key).get<std::string>();
}

bool bool_field(const Json& j, const char* key) {
  require(j.contains(key) && j.at(key).is_boolean(),
          std::string("field '") + key + "' is not a boolean");
  return j.at(key).get<bool>();
}

std::vector<Vec2> vec2_field(const Json& j, const char* key) {
  require(j.contains(key) && j.at(key).is_array(),
          std::string("field '") + key + "' is not an array");
  std::vector<Vec2> out;
  for (const Json& p : j.at(key)) {
    require(p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number(),
            std::string("field '") + key + "' must hold [x, y] pairs");
    const Vec2 v(p[0].get<double>(), p[1].get<double>());
    require(v.allFinite(), std::string("field '") + key + "' is not finite");
    out.push_back(v);
  }
  return out;
}

std::vector<double> doubles_field(const Json& j, const char* key) {
  require(j.contains(key) && j.at(key).is_array(),
          std::string("field '") + key + "' is not an array");
  std::vector<double> out;
  for (const Json& v : j.at(key)) {
    require(v.is_number() && std::isfinite(v.get<double>()),
            std::string("field '") + key + "' must hold finite numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::string action_name(EpisodeControl::Action a) {
  switch (a) {
    case EpisodeControl::Action::kReset: return "reset";
    case EpisodeControl::Action::kSetMode: return "set-mode";
    case EpisodeControl::Action::kSetAssistLevel: return "set-assist-level";
  }
  return "reset";
}

struct Encoder {
  Json& j;
  void operator()(const ClientHello& m) const {
    j["client_version"] = m.version;
    j["spectator"] = m.spectator;
    j["name"] = m.name;
  }
  void operator()(const CommandInput& m) const {
    j["velocity"] = vec2s(m.velocity);
    j["client_time"] = m.client_time;
    j["rtt"] = m.rtt;
  }
  void operator()(const StateFrame& m) const {
    j["episode"] = m.episode;
    j["episode_seed"] = m.episode_seed;
    j["tick"] = m.tick;
    j["step_index"] = m.step_index;
    j["t"] = m.t;
    j["status"] = m.status;
    j["mode"] = m.mode;
    j["position"] = vec2s(m.position);
    j["velocity"] = vec2s(m.velocity);
    j["contact"] = m.contact;
    j["observation"] = m.observation;
    j["q"] = m.q;
    j["q_normalized"] = m.q_normalized;
    j["g_raw"] = m.g_raw;
    j["g"] = m.g;
    j["feasible"] = m.feasible;
    j["stale"] = m.stale;
    j["tau"] = vec2s(m.tau);
    j["q_dot_des"] = vec2s(m.q_dot_des);
    j["intent"] = vec2s(m.intent);
    j["offset"] = vec2s(m.offset);
    j["executed"] = vec2s(m.executed);
    j["assist_level"] = m.assist_level;
    j["ack_seq"] = m.ack_seq;
    j["echo_client_time"] = m.echo_client_time;
  }
  void operator()(const EpisodeControl& m) const {
    j["action"] = action_name(m.action);
    if (m.action == EpisodeControl::Action::kSetMode) j["mode"] = m.mode;
    if (m.action == EpisodeControl::Action::kSetAssistLevel) j["assist_level"] = m.assist_level;
    if (m.seed) j["seed"] = *m.seed;
  }
  void operator()(const ServerInfo& m) const {
    j["role"] = m.role;
    j["config"] = m.config;
    j["dt_servo"] = m.dt_servo;
    j["dt_policy"] = m.dt_policy;
    j["num_arms"] = m.num_arms;
    j["command_max"] = m.command_max;
    j["mode"] = m.mode;
    j["lockstep"] = m.lockstep;
    j["jitter"] = {{"samples", m.jitter.samples},
                   {"p50", m.jitter.p50},
                   {"p99", m.jitter.p99},
                   {"max", m.jitter.max}};
    j["rtt"] = m.rtt;
    j["malformed"] = m.malformed;
  }
  void operator()(const Refused& m) const { j["reason"] = m.reason; }
};

Message decode_body(const std::string& type, const Json& j) {
  if (type == "hello") {
    ClientHello m;
    m.version = string_field(j, "client_version");
    m.spectator = j.contains("spectator") ? bool_field(j, "spectator") : false;
    m.name = j.contains("name") ? string_field(j, "name") : "";
    return m;
  }
  if (type == "command") {
    CommandInput m;
    m.velocity = vec2_field(j, "velocity");
    m.client_time = number_or(j, "client_time", 0.0);
    m.rtt = number_or(j, "rtt", -1.0);
    return m;
  }
  if (type == "state") {
    StateFrame m;
    m.episode = unsigned_field(j, "episode");
    m.episode_seed = unsigned_field(j, "episode_seed");
    m.tick = integer_field(j, "tick");
    m.step_index = integer_field(j, "step_index");
    m.t = number(j, "t");
    m.status = string_field(j, "status");
    m.mode = string_field(j, "mode");
    m.position = vec2_field(j, "position");
    m.velocity = vec2_field(j, "velocity");
    require(j.contains("contact") && j.at("contact").is_array(), "field 'contact' is not an array");
    for (const Json& c : j.at("contact")) {
      require(c.is_boolean(), "field 'contact' must hold booleans");
      m.contact.push_back(c.get<bool>());
    }
    m.observation = doubles_field(j, "observation");
    m.q = number(j, "q");
    m.q_normalized = number(j, "q_normalized");
    m.g_raw = number(j, "g_raw");
    m.g = number(j, "g");
    m.feasible = bool_field(j, "feasible");
    m.stale = bool_field(j, "stale");
    m.tau = vec2_field(j, "tau");
    m.q_dot_des = vec2_field(j, "q_dot_des");
    m.intent = vec2_field(j, "intent");
    m.offset = vec2_field(j, "offset");
    m.executed = vec2_field(j, "executed");
    m.assist_level = number(j, "assist_level");
    m.ack_seq = unsigned_field(j, "ack_seq");
    m.echo_client_time = number(j, "echo_client_time");
    return m;
  }
  if (type == "control") {
    EpisodeControl m;
    const std::string action = string_field(j, "action");
    if (action == "reset") {
      m.action = EpisodeControl::Action::kReset;
    } else if (action == "set-mode") {
      m.action = EpisodeControl::Action::kSetMode;
      m.mode = string_field(j, "mode");
    } else if (action == "set-assist-level") {
      m.action = EpisodeControl::Action::kSetAssistLevel;
      m.assist_level = number(j, "assist_level");
    } else {
      throw WireError("unknown control action '" + action + "'");
    }
    if (j.contains("seed")) m.seed = unsigned_field(j, "seed");
    return m;
  }
  if (type == "info") {
    ServerInfo m;
    m.role = string_field(j, "role");
    m.config = string_field(j, "config");
    m.dt_servo = number(j, "dt_servo");
    m.dt_policy = number(j, "dt_policy");
    m.num_arms = static_cast<int>(integer_field(j, "num_arms"));
    m.command_max = number(j, "command_max");
    m.mode = string_field(j, "mode");
    m.lockstep = bool_field(j, "lockstep");
    require(j.contains("jitter") && j.at("jitter").is_object(), "field 'jitter' is not an object");
    const Json& jt = j.at("jitter");
    m.jitter.samples = unsigned_field(jt, "samples");
    m.jitter.p50 = number(jt, "p50");
    m.jitter.p99 = number(jt, "p99");
    m.jitter.max = number(jt, "max");
    m.rtt = number(j, "rtt");
    m.malformed = unsigned_field(j, "malformed");
    return m;
  }
  if (type == "refused") {
    Refused m;
    m.reason = string_field(j, "reason");
    return m;
  }
  throw WireError("unknown message type '" + type + "'");
}

}  // namespace

std::string message_type(const Message& m) {
  static constexpr const char* names[] = {"hello", "command", "state", "control", "info", "refused"};
  return names[m.index()];
}

std::string encode(const Message& message, std::uint64_t seq) {
  Json j;
  j["v"] = kProtocolVersion;
  j["seq"] = seq;
  j["type"] = message_type(message);
  std::visit(Encoder{j}, message);
  return j.dump();
}

Envelope decode(std::string_view text) {
  Json j = Json::parse(text.begin(), text.end(), nullptr, false);
  require(!j.is_discarded(), "message is not valid JSON");
  require(j.is_object(), "message is not a JSON object");
  Envelope env;
  env.version = string_field(j, "v");
  env.seq = unsigned_field(j, "seq");
  if (env.version != kProtocolVersion) {
    // Only the hello needs to be understood across versions.
    ClientHello hello;
    hello.version = env.version;
    env.body = hello;
    return env;
  }
  env.body = decode_body(string_field(j, "type"), j);
  return env;
}

std::string frame(std::string_view payload) {
  std::string out = std::to_string(payload.size());
  out.push_back('\n');
  out.append(payload);
  return out;
}

void FrameDecoder::feed(std::string_view bytes) { buffer_.append(bytes); }

std::optional<std::string> FrameDecoder::next() {
  const auto newline = buffer_.find('\n');
  if (newline == std::string::npos) {
    if (buffer_.size() > 20) throw WireError("length header too long");
    return std::nullopt;
  }
  std::size_t length = 0;
  const char* begin = buffer_.data();
  const auto [ptr, ec] = std::from_chars(begin, begin + newline, length);
  if (ec != std::errc() || ptr != begin + newline || newline == 0) {
    throw WireError("corrupt length header");
  }
  if (length > kMaxMessageBytes) throw WireError("message exceeds the size limit");
  if (buffer_.size() < newline + 1 + length) return std::nullopt;
  std::string payload = buffer_.substr(newline + 1, length);
  buffer_.erase(0, newline + 1 + length);
  return payload;
}

}  // namespace teleguard::service
