#include "teleguard/service/client.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace teleguard::service {

Client Client::connect(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw std::runtime_error("cannot resolve " + host);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0 || ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    const std::string why = std::strerror(errno);
    if (fd >= 0) ::close(fd);
    ::freeaddrinfo(res);
    throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port) + ": " + why);
  }
  ::freeaddrinfo(res);
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Client(fd);
}

Client::Client(Client&& o) noexcept
    : fd_(o.fd_), eof_(o.eof_), seq_(o.seq_), decoder_(std::move(o.decoder_)) {
  o.fd_ = -1;
}

Client& Client::operator=(Client&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    eof_ = o.eof_;
    seq_ = o.seq_;
    decoder_ = std::move(o.decoder_);
    o.fd_ = -1;
  }
  return *this;
}

Client::~Client() { close(); }

void Client::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Client::send_raw(std::string_view bytes) {
  if (fd_ < 0) throw std::runtime_error("client is closed");
  while (!bytes.empty()) {
    const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw std::runtime_error("send failed");
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

void Client::send(const Message& message) { send_raw(frame(encode(message, ++seq_))); }

std::optional<Envelope> Client::receive(double timeout) {
  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                           std::chrono::duration<double>(timeout));
  while (true) {
    if (auto payload = decoder_.next()) return decode(*payload);
    if (closed()) return std::nullopt;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() < 0) return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(left.count()));
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return std::nullopt;
    char buf[8192];
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n <= 0) {
      eof_ = true;
      continue;
    }
    decoder_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
  }
}

std::optional<StateFrame> Client::next_frame(double timeout) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  while (true) {
    const double left = timeout - std::chrono::duration<double>(Clock::now() - start).count();
    if (left < 0) return std::nullopt;
    auto env = receive(left);
    if (!env) return std::nullopt;
    if (auto* f = std::get_if<StateFrame>(&env->body)) return *f;
  }
}

ServerInfo Client::hello(bool spectator, const std::string& version, double timeout) {
  ClientHello h;
  h.version = version;
  h.spectator = spectator;
  if (version == kProtocolVersion) {
    send(h);
  } else {
    // A foreign-version client stamps its own version on the envelope too.
    std::string json = encode(h, ++seq_);
    const std::string needle = std::string("\"v\":\"") + kProtocolVersion + "\"";
    json.replace(json.find(needle), needle.size(), "\"v\":\"" + version + "\"");
    send_raw(frame(json));
  }
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  while (true) {
    const double left = timeout - std::chrono::duration<double>(Clock::now() - start).count();
    auto env = left > 0 ? receive(left) : std::nullopt;
    if (!env) throw std::runtime_error("no ServerInfo received");
    if (auto* r = std::get_if<Refused>(&env->body)) throw RefusedError(r->reason);
    if (auto* info = std::get_if<ServerInfo>(&env->body)) return *info;
  }
}

}  // namespace teleguard::service
