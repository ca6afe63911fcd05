#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "teleguard/service/session.hpp"
#include "teleguard/service/wire.hpp"

namespace teleguard::service {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  // One tick per accepted driver command instead of the wall clock; used for
  // scripted replays.
  bool lockstep = false;
  std::size_t outbound_capacity = 256;  // per client; excess frames are dropped
  double info_period = 1.0;             // [s] between ServerInfo refreshes
};

// TCP front end. Socket readers and writers run on their own threads and talk
// to the servo thread only through queues; the servo thread is the sole owner
// of the session.
class Server {
 public:
  Server(ServoSession session, ServerOptions options, std::string config_text);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts all threads. Throws std::runtime_error if binding fails.
  void start();
  void stop();
  int port() const { return port_; }

  JitterStats jitter() const;
  std::uint64_t malformed_total() const { return malformed_total_; }
  std::int64_t ticks() const { return ticks_; }
  std::size_t connected_clients() const;

 private:
  struct Connection;
  struct Inbound {
    std::uint64_t connection = 0;
    bool disconnected = false;
    Envelope envelope;
  };

  void accept_loop();
  void reader_loop(std::shared_ptr<Connection> c);
  void writer_loop(std::shared_ptr<Connection> c);
  void servo_loop();
  // Returns true if a driver command was accepted.
  bool handle(const Inbound& in, double now);
  void send(Connection& c, const Message& m);
  void broadcast(const StateFrame& frame);
  void send_info(Connection& c);
  void drop(std::uint64_t id);
  void record_period(double period);

  ServoSession session_;
  ServerOptions options_;
  std::string config_text_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_, servo_;

  mutable std::mutex connections_mutex_;
  std::map<std::uint64_t, std::shared_ptr<Connection>> connections_;
  std::uint64_t next_id_ = 1;
  std::uint64_t driver_ = 0;

  std::mutex inbox_mutex_;
  std::condition_variable inbox_cv_;
  std::deque<Inbound> inbox_;

  mutable std::mutex jitter_mutex_;
  std::vector<double> jitter_samples_;
  std::size_t jitter_next_ = 0;
  double last_rtt_ = -1.0;

  std::atomic<std::uint64_t> malformed_total_{0};
  std::atomic<std::int64_t> ticks_{0};
};

}  // namespace teleguard::service
