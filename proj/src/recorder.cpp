#include "multiarm/recorder.hpp"

#include <istream>
#include <ostream>

#include "multiarm/errors.hpp"
#include "multiarm/simulation.hpp"

namespace multiarm {

using nlohmann::json;

Recorder::Recorder(std::ostream& out, const Scenario& scenario) : out_(out) {
  line({{"type", "header"}, {"format", kLogFormatVersion}, {"scenario", scenario.source}});
}

void Recorder::line(const json& j) {
  out_ << j.dump() << '\n';
  out_.flush();
}

void Recorder::input(std::uint64_t tick, const WireMessage& message) {
  line({{"type", "input"}, {"tick", tick}, {"msg", to_json(message)}});
}

void Recorder::snapshot(std::uint64_t tick, const StateSnapshot& state) {
  line({{"type", "snapshot"}, {"tick", tick}, {"state", snapshot_to_json(state)}});
}

void Recorder::finish(std::uint64_t ticks, const std::string& telemetry_hash) {
  line({{"type", "end"}, {"ticks", ticks}, {"telemetry_hash", telemetry_hash}});
}

ReplayLog read_log(std::istream& in) {
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) {
    if (!l.empty()) lines.push_back(std::move(l));
  }
  ReplayLog log;
  if (lines.empty()) {
    log.ticks = 0;  // nothing recorded: a clean zero-tick replay
    return log;
  }
  bool have_header = false;
  std::uint64_t last_tick = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = "log line " + std::to_string(i + 1);
    json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) {
      if (i + 1 == lines.size() && have_header) {
        log.truncated = true;
        break;
      }
      throw ConfigError(where + ": not valid JSON");
    }
    if (log.ticks) throw ConfigError(where + ": record after end");
    try {
      const std::string type = j.at("type").get<std::string>();
      if (!have_header) {
        if (type != "header") throw ConfigError(where + ": expected header");
        if (j.at("format").get<int>() != kLogFormatVersion) {
          throw ConfigError(where + ": unsupported log format");
        }
        log.scenario = j.at("scenario");
        have_header = true;
        continue;
      }
      if (type == "input" || type == "snapshot") {
        const auto tick = j.at("tick").get<std::uint64_t>();
        if (tick < last_tick) throw ConfigError(where + ": ticks go backwards");
        last_tick = tick;
        if (type == "input") {
          log.inputs.push_back({tick, parse_message(j.at("msg")).message});
        } else {
          log.snapshots.push_back({tick, j.at("state")});
        }
      } else if (type == "end") {
        log.ticks = j.at("ticks").get<std::uint64_t>();
        log.telemetry_hash = j.at("telemetry_hash").get<std::string>();
        if (*log.ticks < last_tick) throw ConfigError(where + ": end before last record");
      } else {
        throw ConfigError(where + ": unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    } catch (const ProtocolError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  if (!have_header) throw ConfigError("log: missing header");
  if (!log.ticks) log.truncated = true;
  return log;
}

ReplayResult replay(const ReplayLog& log, std::ostream* telemetry) {
  if (log.scenario.is_null()) {
    ReplayResult empty;
    empty.telemetry_hash = TelemetryHash{}.hex();
    return empty;
  }
  Scenario scenario = parse_scenario(log.scenario);
  scenario.script.clear();

  std::uint64_t ticks = 0;
  if (log.ticks) {
    ticks = *log.ticks;
  } else {
    if (!log.inputs.empty()) ticks = log.inputs.back().tick;
    if (!log.snapshots.empty()) ticks = std::max(ticks, log.snapshots.back().tick);
  }

  Simulation sim(scenario);
  TelemetryHash hash;
  ReplayResult result;
  result.truncated = log.truncated;
  std::size_t next_input = 0;
  std::size_t next_snap = 0;
  auto check_snapshots = [&] {
    while (next_snap < log.snapshots.size() && log.snapshots[next_snap].tick == sim.tick_count()) {
      if (snapshot_to_json(sim.snapshot()) != log.snapshots[next_snap].state) {
        result.mismatches.push_back("snapshot at tick " + std::to_string(sim.tick_count()) +
                                    " differs");
      }
      ++next_snap;
    }
  };
  check_snapshots();
  for (std::uint64_t k = 0; k < ticks; ++k) {
    while (next_input < log.inputs.size() && log.inputs[next_input].tick == k) {
      sim.apply(log.inputs[next_input].message);
      ++next_input;
    }
    emit_telemetry(sim.tick(), scenario.telemetry_decimation, hash, telemetry);
    check_snapshots();
  }
  // Inputs logged on the final tick boundary arrived after the last step.
  while (next_input < log.inputs.size()) sim.apply(log.inputs[next_input++].message);

  result.ticks = ticks;
  result.telemetry_hash = hash.hex();
  if (log.telemetry_hash && *log.telemetry_hash != result.telemetry_hash) {
    result.mismatches.push_back("telemetry hash " + result.telemetry_hash + " != recorded " +
                                *log.telemetry_hash);
  }
  result.final_snapshot = sim.snapshot();
  return result;
}

}  // namespace multiarm
