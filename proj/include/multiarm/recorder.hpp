#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multiarm/protocol.hpp"
#include "multiarm/scenario.hpp"

namespace multiarm {

inline constexpr int kLogFormatVersion = 1;

/// Writes a session log as JSON lines:
///   {"type":"header","format":1,"scenario":{...}}
///   {"type":"input","tick":k,"msg":{...}}      applied before tick k
///   {"type":"snapshot","tick":k,"state":{...}} state after k ticks
///   {"type":"end","ticks":N,"telemetry_hash":"..."}
class Recorder {
 public:
  Recorder(std::ostream& out, const Scenario& scenario);

  void input(std::uint64_t tick, const WireMessage& message);
  void snapshot(std::uint64_t tick, const StateSnapshot& state);
  void finish(std::uint64_t ticks, const std::string& telemetry_hash);

 private:
  void line(const nlohmann::json& j);
  std::ostream& out_;
};

struct LoggedInput {
  std::uint64_t tick = 0;
  WireMessage message;
};

struct LoggedSnapshot {
  std::uint64_t tick = 0;
  nlohmann::json state;
};

struct ReplayLog {
  nlohmann::json scenario;  // null for an empty log
  std::vector<LoggedInput> inputs;
  std::vector<LoggedSnapshot> snapshots;
  std::optional<std::uint64_t> ticks;  // from the end record
  std::optional<std::string> telemetry_hash;
  bool truncated = false;  // no end record or a torn last line
};

/// Parses a log. An empty input is a valid zero-tick log. A torn final line
/// or a missing end record marks the log truncated; anything else malformed
/// throws ConfigError.
ReplayLog read_log(std::istream& in);

struct ReplayResult {
  std::uint64_t ticks = 0;
  std::string telemetry_hash;
  std::vector<std::string> mismatches;
  bool truncated = false;
  StateSnapshot final_snapshot;

  bool clean() const { return mismatches.empty() && !truncated; }
};

/// Re-runs a log. The scenario document's own script is ignored because
/// every applied input is in the log. Recorded snapshots are compared
/// bit-for-bit. Throws SimulationFault or ValidationError on runtime faults.
ReplayResult replay(const ReplayLog& log, std::ostream* telemetry = nullptr);

}  // namespace multiarm
