#include "teleguard/service/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "teleguard/common/errors.hpp"

namespace teleguard::service {
namespace {

using Clock = std::chrono::steady_clock;
constexpr std::size_t kJitterWindow = 10000;

double seconds_since(Clock::time_point origin) {
  return std::chrono::duration<double>(Clock::now() - origin).count();
}

bool send_all(int fd, std::string_view bytes) {
  while (!bytes.empty()) {
    const ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

}  // namespace

struct Server::Connection {
  std::uint64_t id = 0;
  int fd = -1;
  bool greeted = false;
  bool spectator = true;
  std::uint64_t out_seq = 0;
  std::atomic<std::uint64_t> malformed{0};
  std::atomic<bool> closed{false};
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::string> outbound;
  bool close_after_flush = false;
  std::uint64_t dropped = 0;
  std::thread reader, writer;
};

Server::Server(ServoSession session, ServerOptions options, std::string config_text)
    : session_(std::move(session)), options_(std::move(options)), config_text_(std::move(config_text)) {}

Server::~Server() { stop(); }

void Server::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(options_.port));
  if (::inet_pton(AF_INET, options_.host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw ValidationError("invalid listen address '" + options_.host + "'");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listen_fd_, 8) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("cannot listen on " + options_.host + ":" +
                             std::to_string(options_.port) + ": " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
  servo_ = std::thread([this] { servo_loop(); });
  spdlog::info("serving on {}:{} ({})", options_.host, port_,
               options_.lockstep ? "lockstep" : "realtime");
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  inbox_cv_.notify_all();
  if (acceptor_.joinable()) acceptor_.join();
  if (servo_.joinable()) servo_.join();
  std::vector<std::uint64_t> ids;
  {
    std::lock_guard lock(connections_mutex_);
    for (const auto& [id, c] : connections_) ids.push_back(id);
  }
  for (auto id : ids) drop(id);
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
}

std::size_t Server::connected_clients() const {
  std::lock_guard lock(connections_mutex_);
  return connections_.size();
}

void Server::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    auto c = std::make_shared<Connection>();
    c->fd = fd;
    {
      std::lock_guard lock(connections_mutex_);
      c->id = next_id_++;
      connections_[c->id] = c;
    }
    c->reader = std::thread([this, c] { reader_loop(c); });
    c->writer = std::thread([this, c] { writer_loop(c); });
  }
}

void Server::reader_loop(std::shared_ptr<Connection> c) {
  FrameDecoder decoder;
  char buf[4096];
  bool ok = true;
  while (ok && running_ && !c->closed) {
    pollfd p{c->fd, POLLIN, 0};
    const int r = ::poll(&p, 1, 50);
    if (r == 0) continue;
    if (r < 0 && errno == EINTR) continue;
    const ssize_t n = r < 0 ? -1 : ::recv(c->fd, buf, sizeof(buf), 0);
    if (n <= 0) break;
    decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    try {
      while (auto payload = decoder.next()) {
        try {
          Inbound in;
          in.connection = c->id;
          in.envelope = decode(*payload);
          std::lock_guard lock(inbox_mutex_);
          inbox_.push_back(std::move(in));
          inbox_cv_.notify_all();
        } catch (const WireError& e) {
          ++c->malformed;
          ++malformed_total_;
          spdlog::debug("client {}: dropped malformed message: {}", c->id, e.what());
        }
      }
    } catch (const WireError& e) {
      spdlog::info("client {}: closing on framing error: {}", c->id, e.what());
      ok = false;
    }
  }
  std::lock_guard lock(inbox_mutex_);
  Inbound in;
  in.connection = c->id;
  in.disconnected = true;
  inbox_.push_back(std::move(in));
  inbox_cv_.notify_all();
}

void Server::writer_loop(std::shared_ptr<Connection> c) {
  while (true) {
    std::string next;
    {
      std::unique_lock lock(c->mutex);
      c->cv.wait_for(lock, std::chrono::milliseconds(50),
                     [&] { return !c->outbound.empty() || c->closed || c->close_after_flush; });
      if (c->outbound.empty()) {
        if (c->closed || c->close_after_flush || !running_) break;
        continue;
      }
      next = std::move(c->outbound.front());
      c->outbound.pop_front();
    }
    if (!send_all(c->fd, next)) break;
  }
  if (c->close_after_flush) ::shutdown(c->fd, SHUT_RDWR);
}

void Server::send(Connection& c, const Message& m) {
  std::string bytes = frame(encode(m, ++c.out_seq));
  std::lock_guard lock(c.mutex);
  if (c.outbound.size() >= options_.outbound_capacity) {
    ++c.dropped;
    return;
  }
  c.outbound.push_back(std::move(bytes));
  c.cv.notify_one();
}

void Server::send_info(Connection& c) {
  ServerInfo info;
  info.role = c.spectator ? "spectator" : "driver";
  info.config = config_text_;
  info.dt_servo = session_.config().assist.dt_servo;
  info.dt_policy = session_.config().assist.dt_policy;
  info.num_arms = session_.config().world.num_arms;
  info.command_max = session_.config().world.command_max;
  info.mode = assist::to_string(session_.mode());
  info.lockstep = options_.lockstep;
  info.jitter = jitter();
  info.rtt = last_rtt_;
  info.malformed = c.malformed;
  send(c, info);
}

void Server::drop(std::uint64_t id) {
  std::shared_ptr<Connection> c;
  {
    std::lock_guard lock(connections_mutex_);
    auto it = connections_.find(id);
    if (it == connections_.end()) return;
    c = it->second;
    connections_.erase(it);
  }
  {
    std::lock_guard lock(c->mutex);
    c->closed = true;
    c->cv.notify_all();
  }
  ::shutdown(c->fd, SHUT_RDWR);
  if (c->reader.joinable() && c->reader.get_id() != std::this_thread::get_id()) c->reader.join();
  if (c->writer.joinable()) c->writer.join();
  ::close(c->fd);
  if (id == driver_) {
    driver_ = 0;
    session_.set_driver_present(false, 0.0);
  }
}

bool Server::handle(const Inbound& in, double now) {
  if (in.disconnected) {
    drop(in.connection);
    return false;
  }
  std::shared_ptr<Connection> c;
  {
    std::lock_guard lock(connections_mutex_);
    auto it = connections_.find(in.connection);
    if (it == connections_.end()) return false;
    c = it->second;
  }
  const Message& body = in.envelope.body;
  if (!c->greeted) {
    const auto* hello = std::get_if<ClientHello>(&body);
    if (!hello) {
      ++c->malformed;
      ++malformed_total_;
      return false;
    }
    if (in.envelope.version != kProtocolVersion || hello->version != kProtocolVersion) {
      send(*c, Refused{"protocol version mismatch: server speaks " + std::string(kProtocolVersion) +
                       ", client sent " + hello->version});
      std::lock_guard lock(c->mutex);
      c->close_after_flush = true;
      c->cv.notify_all();
      return false;
    }
    c->greeted = true;
    c->spectator = hello->spectator || driver_ != 0;
    if (!c->spectator) {
      driver_ = c->id;
      session_.set_driver_present(true, now);
    }
    send_info(*c);
    return false;
  }
  if (c->spectator) return false;  // spectators only receive
  if (const auto* cmd = std::get_if<CommandInput>(&body)) {
    try {
      if (cmd->rtt >= 0) last_rtt_ = cmd->rtt;
      return session_.submit_command(*cmd, in.envelope.seq, now);
    } catch (const ValidationError& e) {
      ++c->malformed;
      ++malformed_total_;
      spdlog::debug("client {}: rejected command: {}", c->id, e.what());
      return false;
    }
  }
  if (const auto* ctl = std::get_if<EpisodeControl>(&body)) {
    try {
      session_.control(*ctl);
    } catch (const ValidationError& e) {
      ++c->malformed;
      ++malformed_total_;
      spdlog::debug("client {}: rejected control: {}", c->id, e.what());
    }
    return false;
  }
  ++c->malformed;  // server-to-client types or a second hello
  ++malformed_total_;
  return false;
}

void Server::broadcast(const StateFrame& frame) {
  std::vector<std::shared_ptr<Connection>> targets;
  {
    std::lock_guard lock(connections_mutex_);
    for (const auto& [id, c] : connections_)
      if (c->greeted) targets.push_back(c);
  }
  for (auto& c : targets) send(*c, frame);
}

void Server::record_period(double period) {
  const double dev = std::abs(period - session_.config().assist.dt_servo);
  std::lock_guard lock(jitter_mutex_);
  if (jitter_samples_.size() < kJitterWindow) {
    jitter_samples_.push_back(dev);
  } else {
    jitter_samples_[jitter_next_] = dev;
    jitter_next_ = (jitter_next_ + 1) % kJitterWindow;
  }
}

JitterStats Server::jitter() const {
  std::vector<double> s;
  {
    std::lock_guard lock(jitter_mutex_);
    s = jitter_samples_;
  }
  JitterStats j;
  j.samples = s.size();
  if (s.empty()) return j;
  std::sort(s.begin(), s.end());
  auto at = [&](double q) {
    return s[std::min(s.size() - 1, static_cast<std::size_t>(std::ceil(q * s.size())) - 1)];
  };
  j.p50 = at(0.50);
  j.p99 = at(0.99);
  j.max = s.back();
  return j;
}

void Server::servo_loop() {
  const double dt = session_.config().assist.dt_servo;
  const auto origin = Clock::now();
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(dt));
  auto next = origin + period;
  auto last_tick = origin;
  double last_info = 0.0;
  bool first = true;
  while (running_) {
    std::deque<Inbound> batch;
    if (options_.lockstep) {
      std::unique_lock lock(inbox_mutex_);
      inbox_cv_.wait_for(lock, std::chrono::milliseconds(50), [&] { return !inbox_.empty() || !running_; });
      batch.swap(inbox_);
    } else {
      std::this_thread::sleep_until(next);
      const auto woke = Clock::now();
      if (!first) record_period(std::chrono::duration<double>(woke - last_tick).count());
      first = false;
      last_tick = woke;
      next += period;
      if (woke - next > 5 * period) next = woke + period;  // fell far behind: resynchronize
      std::lock_guard lock(inbox_mutex_);
      batch.swap(inbox_);
    }
    const double now = options_.lockstep ? static_cast<double>(ticks_) * dt : seconds_since(origin);
    for (const auto& in : batch) {
      const bool accepted = handle(in, now);
      if (options_.lockstep && accepted) {
        // one tick per accepted command, in arrival order
        broadcast(session_.tick(static_cast<double>(ticks_) * dt));
        ++ticks_;
      }
    }
    if (!options_.lockstep) {
      broadcast(session_.tick(now));
      ++ticks_;
    }
    const double wall = seconds_since(origin);
    if (wall - last_info >= options_.info_period) {
      last_info = wall;
      std::vector<std::shared_ptr<Connection>> targets;
      {
        std::lock_guard lock(connections_mutex_);
        for (const auto& [id, c] : connections_)
          if (c->greeted) targets.push_back(c);
      }
      for (auto& c : targets) send_info(*c);
    }
  }
}

}  // namespace teleguard::service
