#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "multiarm/protocol.hpp"
#include "multiarm/scenario.hpp"

namespace multiarm {

inline constexpr unsigned short kDefaultPort = 8765;

struct ServeOptions {
  std::string host = "127.0.0.1";
  unsigned short port = kDefaultPort;  // 0 picks a free port
  double snapshot_rate = 60.0;         // Hz
  std::optional<std::filesystem::path> record;
  std::optional<double> duration;  // simulated seconds, then stop
  std::size_t client_queue = 64;   // outbound frames kept per client
  double record_snapshot_period = 1.0;  // s
};

/// `--port` beats the MULTIARM_PORT environment variable, which beats the
/// default. Throws ConfigError on a malformed value.
unsigned short resolve_port(std::optional<int> cli_port, const char* env_value);

struct LoopStats {
  std::uint64_t ticks = 0;
  double mean_abs_jitter = 0.0;  // s, |period - dt| averaged over ticks
  double max_abs_jitter = 0.0;
  double mean_busy = 0.0;  // s of work per tick
  std::uint64_t snapshots_sent = 0;
  std::uint64_t frames_dropped = 0;
  std::uint64_t messages_in = 0;
  std::uint64_t messages_rejected = 0;
};

/// {"arms":[{"id","base","dh":[{a,d,alpha,theta_offset}],"flange","q0"}]}
nlohmann::json hello_body(const Scenario& scenario);

/// WebSocket service. Connections run on an IO thread; every state change
/// goes through the command queue drained by the control thread, which owns
/// the simulation and steps it at 1/dt in wall-clock time. Snapshots are
/// serialized once and fanned out to per-client drop-oldest queues, so a
/// slow client cannot delay the loop.
class TeleopServer {
 public:
  TeleopServer(Scenario scenario, ServeOptions options);
  ~TeleopServer();
  TeleopServer(const TeleopServer&) = delete;
  TeleopServer& operator=(const TeleopServer&) = delete;

  /// Binds the listener and starts both threads. Throws on bind failure.
  void start();
  /// Port actually bound (useful with port 0).
  unsigned short port() const;
  /// Blocks until `duration` elapses or stop() is called.
  void wait();
  /// Like wait() with a timeout; true once the loop has finished.
  bool wait_for(double seconds);
  void stop();

  LoopStats stats() const;
  std::optional<StateSnapshot> last_snapshot() const;
  /// Set when the loop ended on a simulation fault.
  std::optional<std::string> fault() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace multiarm
