#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "teleguard/service/wire.hpp"

namespace teleguard::service {

class RefusedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Blocking client for scripted sessions and tests.
class Client {
 public:
  // Throws std::runtime_error if the connection cannot be made.
  static Client connect(const std::string& host, int port);
  Client(Client&& other) noexcept;
  Client& operator=(Client&& other) noexcept;
  ~Client();

  // Sends hello and waits for the ServerInfo; throws RefusedError with the
  // server's reason.
  ServerInfo hello(bool spectator = false, const std::string& version = kProtocolVersion,
                   double timeout = 5.0);

  void send(const Message& message);
  void send_raw(std::string_view bytes);
  std::uint64_t last_sent_seq() const { return seq_; }

  // Next message, or nullopt on timeout or a closed connection.
  std::optional<Envelope> receive(double timeout);
  // Skips other message types.
  std::optional<StateFrame> next_frame(double timeout);

  bool closed() const { return fd_ < 0 || eof_; }
  void close();

 private:
  explicit Client(int fd) : fd_(fd) {}
  int fd_ = -1;
  bool eof_ = false;
  std::uint64_t seq_ = 0;
  FrameDecoder decoder_;
};

}  // namespace teleguard::service
