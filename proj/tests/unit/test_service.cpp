#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <thread>

#include "replay.hpp"
#include "teleguard/common/errors.hpp"
#include "teleguard/service/wire.hpp"

namespace teleguard::service {
namespace {

StateFrame sample_frame() {
  StateFrame f;
  f.episode = 3;
  f.episode_seed = 1'000'000'000'007ULL;
  f.tick = 42;
  f.step_index = 17;
  f.t = 0.34;
  f.status = "running";
  f.mode = "value";
  f.position = {Vec2(0.0123456789012345, -1.0 / 3.0)};
  f.velocity = {Vec2(1e-300, -2.5)};
  f.contact = {true};
  f.observation = {0.1, 0.2, -0.3, 1e-17};
  f.q = -12.5;
  f.q_normalized = 0.25;
  f.g_raw = 0.7;
  f.g = 0.6;
  f.feasible = false;
  f.stale = false;
  f.tau = {Vec2(0.5, -1.0)};
  f.q_dot_des = {Vec2(0.01, 0.02)};
  f.intent = {Vec2(0.03, 0.04)};
  f.offset = {Vec2(-0.05, 0.06)};
  f.executed = {Vec2(0.07, -0.08)};
  f.assist_level = 0.5;
  f.ack_seq = 99;
  f.echo_client_time = 123.456;
  return f;
}

std::vector<Message> all_messages() {
  ServerInfo info;
  info.role = "spectator";
  info.config = "a=1\nb=2\n";
  info.mode = "static";
  info.lockstep = true;
  info.jitter = {10, 1e-4, 2e-3, 5e-3};
  info.rtt = 0.012;
  info.malformed = 4;
  EpisodeControl reset;
  reset.seed = 77;
  EpisodeControl mode;
  mode.action = EpisodeControl::Action::kSetMode;
  mode.mode = "off";
  EpisodeControl level;
  level.action = EpisodeControl::Action::kSetAssistLevel;
  level.assist_level = 0.3;
  return {ClientHello{kProtocolVersion, true, "bench"},
          CommandInput{{Vec2(0.1, -0.05), Vec2(0, 0)}, 12.5, 0.004},
          sample_frame(),
          reset,
          mode,
          level,
          info,
          Refused{"busy"}};
}

bool same(const Message& a, const Message& b) {
  return a.index() == b.index() &&
         std::visit([&](const auto& x) { return x == std::get<std::decay_t<decltype(x)>>(b); }, a);
}

TEST(Wire, EveryMessageRoundTrips) {
  std::uint64_t seq = 1;
  for (const auto& m : all_messages()) {
    const Envelope env = decode(encode(m, seq));
    EXPECT_EQ(env.version, kProtocolVersion);
    EXPECT_EQ(env.seq, seq);
    EXPECT_TRUE(same(env.body, m)) << message_type(m);
    ++seq;
  }
}

TEST(Wire, MalformedMessagesThrow) {
  EXPECT_THROW(decode("not json"), WireError);
  EXPECT_THROW(decode("[1,2]"), WireError);
  EXPECT_THROW(decode(R"({"v":"1","seq":1})"), WireError);
  EXPECT_THROW(decode(R"({"v":"1","seq":1,"type":"teleport"})"), WireError);
  EXPECT_THROW(decode(R"({"v":"1","seq":-1,"type":"hello"})"), WireError);
  EXPECT_THROW(decode(R"({"v":"1","seq":1,"type":"command","velocity":[[0.1]]})"), WireError);
  EXPECT_THROW(decode(R"({"v":"1","seq":1,"type":"command","velocity":"x"})"), WireError);
  StateFrame f = sample_frame();
  f.q = std::nan("");
  EXPECT_THROW(decode(encode(f, 1)), WireError);
}

TEST(Wire, ForeignVersionSurfacesAsHello) {
  const Envelope env = decode(R"({"v":"9","seq":1,"type":"whatever"})");
  EXPECT_EQ(env.version, "9");
  ASSERT_TRUE(std::holds_alternative<ClientHello>(env.body));
  EXPECT_EQ(std::get<ClientHello>(env.body).version, "9");
}

TEST(Framing, SplitsArbitraryChunks) {
  const std::vector<std::string> payloads{"{}", std::string(5000, 'x'), "", "abc"};
  std::string stream;
  for (const auto& p : payloads) stream += frame(p);
  for (std::size_t chunk : {1u, 3u, 7u, 4096u}) {
    FrameDecoder d;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < stream.size(); i += chunk) {
      d.feed(std::string_view(stream).substr(i, chunk));
      while (auto p = d.next()) out.push_back(*p);
    }
    EXPECT_EQ(out, payloads) << chunk;
    EXPECT_FALSE(d.next().has_value());
  }
}

TEST(Framing, CorruptHeaderThrows) {
  FrameDecoder d;
  d.feed("12a\n{}");
  EXPECT_THROW(d.next(), WireError);
  FrameDecoder big;
  big.feed(std::to_string(kMaxMessageBytes + 1) + "\n");
  EXPECT_THROW(big.next(), WireError);
  FrameDecoder endless;
  endless.feed(std::string(64, '1'));
  EXPECT_THROW(endless.next(), WireError);
}

// Calibrated constant critic and a random actor for a one-arm world.
struct StubModels {
  learn::CriticModel critic;
  learn::ActorModel actor;
  StubModels() {
    const sim::WorldConfig w;
    Rng rng(11);
    critic = learn::CriticModel::create(w.obs_dim(), w.act_dim(), w.command_max,
                                        learn::FeatureScaler::identity(w.obs_dim()), 8, rng);
    critic.mutable_q_head().mutable_layer(0).bias[0] += 0.3;
    critic.set_calibration({true, -1.0, 1.0, 0.0});
    critic.dt = w.dt;
    actor = learn::ActorModel::create(w.obs_dim(), w.act_dim(), w.command_max,
                                      learn::FeatureScaler::identity(w.obs_dim()), 16, rng);
    actor.dt = w.dt;
  }
  eval::Models view() const { return {&critic, &actor}; }
};

SessionConfig off_config() {
  SessionConfig c;
  c.mode = assist::AssistMode::kOff;
  return c;
}

SessionConfig value_config() {
  SessionConfig c;
  c.mode = assist::AssistMode::kValue;
  c.base_seed = 500;
  return c;
}

TEST(Session, IdleWithoutDriverNeverLatches) {
  StubModels m;
  ServoSession s(value_config(), m.view());
  for (int i = 0; i < 2000; ++i) {
    const auto f = s.tick(i * 0.02);
    EXPECT_EQ(f.status, "idle");
    EXPECT_EQ(f.step_index, 0);
    EXPECT_EQ(f.tick, i);
  }
  EXPECT_EQ(s.episode(), 0u);
}

TEST(Session, LatestWinsBySequence) {
  ServoSession s(off_config(), {});
  s.set_driver_present(true, 0.0);
  CommandInput c{{Vec2(0.05, 0)}, 0, -1};
  EXPECT_TRUE(s.submit_command(c, 5, 0.0));
  EXPECT_FALSE(s.submit_command(c, 3, 0.0));
  EXPECT_FALSE(s.submit_command(c, 5, 0.0));
  EXPECT_TRUE(s.submit_command(c, 6, 0.0));
  EXPECT_EQ(s.tick(0.0).ack_seq, 6u);
  CommandInput two{{Vec2(0, 0), Vec2(0, 0)}, 0, -1};
  EXPECT_THROW(s.submit_command(two, 9, 0.0), ValidationError);
  // A reconnecting driver starts a fresh window.
  s.set_driver_present(false, 0.0);
  s.set_driver_present(true, 0.0);
  EXPECT_TRUE(s.submit_command(c, 1, 0.0));
}

TEST(Session, CommandsAreClampedToTheBox) {
  ServoSession s(off_config(), {});
  s.set_driver_present(true, 0.0);
  s.submit_command(CommandInput{{Vec2(5.0, -5.0)}, 0, -1}, 1, 0.0);
  const auto f = s.tick(0.0);
  EXPECT_DOUBLE_EQ(f.intent[0].x(), 0.1);
  EXPECT_DOUBLE_EQ(f.intent[0].y(), -0.1);
}

TEST(Session, DeadmanRampsIntentToZero) {
  SessionConfig cfg = off_config();
  cfg.world.episode_limit = 1000;
  ServoSession s(cfg, {});
  s.set_driver_present(true, 0.0);
  s.submit_command(CommandInput{{Vec2(0, 0.05)}, 0, -1}, 1, 0.0);
  const double dt = 0.02;
  int k = 0;
  for (; k * dt <= 0.5; ++k) EXPECT_DOUBLE_EQ(s.tick(k * dt).intent[0].y(), 0.05);
  std::vector<double> ramp;
  for (int j = 0; j < 8; ++j, ++k) ramp.push_back(s.tick(k * dt).intent[0].y());
  for (std::size_t j = 1; j < ramp.size(); ++j) EXPECT_LE(ramp[j], ramp[j - 1]);
  EXPECT_EQ(ramp[4], 0.0);  // zero within five ticks
  EXPECT_EQ(ramp.back(), 0.0);
  s.submit_command(CommandInput{{Vec2(0, 0.02)}, 0, -1}, 2, k * dt);
  EXPECT_DOUBLE_EQ(s.tick(k * dt).intent[0].y(), 0.02);
}

TEST(Session, ControlValidation) {
  StubModels m;
  ServoSession s(off_config(), {nullptr, &m.actor});
  EpisodeControl bad;
  bad.action = EpisodeControl::Action::kSetMode;
  bad.mode = "turbo";
  EXPECT_ANY_THROW(s.control(bad));
  bad.mode = "value";
  EXPECT_THROW(s.control(bad), ValidationError);
  bad.mode = "static";
  s.control(bad);
  EXPECT_EQ(s.mode(), assist::AssistMode::kStatic);
  EXPECT_EQ(s.episode(), 1u);
  EpisodeControl level;
  level.action = EpisodeControl::Action::kSetAssistLevel;
  level.assist_level = 1.5;
  EXPECT_THROW(s.control(level), ValidationError);
  EpisodeControl reset;
  reset.seed = 4242;
  s.control(reset);
  EXPECT_EQ(s.episode(), 2u);
  s.set_driver_present(true, 0.0);
  EXPECT_EQ(s.tick(0.0).episode_seed, 4242u);
}

TEST(Session, ZeroAssistLevelMatchesOffModeExecution) {
  StubModels m;
  SessionConfig cfg = value_config();
  ServoSession s(cfg, m.view());
  EpisodeControl level;
  level.action = EpisodeControl::Action::kSetAssistLevel;
  level.assist_level = 0.0;
  s.control(level);
  s.set_driver_present(true, 0.0);
  for (int i = 0; i < 50; ++i) {
    s.submit_command(CommandInput{{Vec2(0.01, 0.05)}, 0, -1}, i + 1, i * 0.02);
    const auto f = s.tick(i * 0.02);
    EXPECT_NEAR((f.executed[0] - f.intent[0]).norm(), 0.0, 1e-15);
  }
}

TEST(Server, HandshakeRolesAndVersionRefusal) {
  ServerOptions opt;
  opt.info_period = 0.05;
  Server server(ServoSession(off_config(), {}), opt, "k=v\n");
  server.start();
  auto driver = Client::connect("127.0.0.1", server.port());
  const auto info = driver.hello();
  EXPECT_EQ(info.role, "driver");
  EXPECT_EQ(info.config, "k=v\n");
  EXPECT_EQ(info.num_arms, 1);
  EXPECT_DOUBLE_EQ(info.dt_servo, 0.02);
  auto second = Client::connect("127.0.0.1", server.port());
  EXPECT_EQ(second.hello().role, "spectator");
  auto watcher = Client::connect("127.0.0.1", server.port());
  EXPECT_EQ(watcher.hello(true).role, "spectator");
  auto old = Client::connect("127.0.0.1", server.port());
  try {
    old.hello(false, "0");
    FAIL() << "expected refusal";
  } catch (const RefusedError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  // Spectators see the driver's episode advance.
  driver.send(CommandInput{{Vec2(0, 0.05)}, 0, -1});
  bool running = false;
  for (int i = 0; i < 200 && !running; ++i) {
    auto f = watcher.next_frame(2.0);
    ASSERT_TRUE(f.has_value());
    running = f->status == "running";
  }
  EXPECT_TRUE(running);
  server.stop();
}

TEST(Server, MalformedMessageIsDroppedAndCounted) {
  ServerOptions opt;
  opt.info_period = 0.05;
  Server server(ServoSession(off_config(), {}), opt, "");
  server.start();
  auto c = Client::connect("127.0.0.1", server.port());
  c.hello();
  c.send_raw(frame("{garbage"));
  c.send_raw(frame(R"({"v":"1","seq":2,"type":"command","velocity":[[1e999,0]]})"));
  c.send(ClientHello{});  // a second hello
  std::uint64_t malformed = 0;
  for (int i = 0; i < 500 && malformed < 3; ++i) {
    auto env = c.receive(2.0);
    ASSERT_TRUE(env.has_value());
    if (auto* info = std::get_if<ServerInfo>(&env->body)) malformed = info->malformed;
  }
  EXPECT_EQ(malformed, 3u);
  EXPECT_EQ(server.malformed_total(), 3u);
  EXPECT_FALSE(c.closed());
  EXPECT_EQ(server.connected_clients(), 1u);
  server.stop();
}

TEST(Server, LockstepReplayMatchesInProcessFrames) {
  StubModels m;
  const SessionConfig cfg = value_config();
  sim::OperatorConfig op;
  op.kind = sim::OperatorKind::kBiased;
  const auto log = testing::record_log(cfg, m.view(), op, 300);
  std::vector<std::uint64_t> seqs;
  const auto frames = testing::replay_through_server(cfg, m.view(), log, &seqs);
  ASSERT_EQ(frames.size(), log.frames.size());
  bool saw_second_episode = false;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    StateFrame expected = log.frames[i];
    expected.ack_seq = seqs[i];
    ASSERT_EQ(frames[i], expected) << "tick " << i;
    EXPECT_GE(frames[i].g, 0.0);
    EXPECT_LE(frames[i].g, 1.0);
    for (const auto& tau : frames[i].tau) EXPECT_LE(tau.cwiseAbs().maxCoeff(), 1.0);
    saw_second_episode |= frames[i].episode > 0;
  }
  EXPECT_TRUE(saw_second_episode);
}

TEST(SessionConfig, RoundTripAndValidation) {
  SessionConfig c = value_config();
  c.deadman_timeout = 0.25;
  ConfigMap map;
  c.to_config(map);
  const auto back = SessionConfig::from_config(map);
  EXPECT_EQ(back.base_seed, 500u);
  EXPECT_EQ(back.deadman_timeout, 0.25);
  EXPECT_EQ(back.mode, assist::AssistMode::kValue);
  SessionConfig bad;
  bad.assist.dt_servo = 0.01;
  EXPECT_THROW(bad.validate(), ValidationError);
}

}  // namespace
}  // namespace teleguard::service
