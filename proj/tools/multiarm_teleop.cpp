// multiarm_teleop: serve a scenario over WebSocket, replay a recorded
// session, validate or run a scenario headless.
//
// Exit codes: 0 ok, 1 config error, 2 runtime fault or replay mismatch,
// 3 replay of a truncated log.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "multiarm/errors.hpp"
#include "multiarm/recorder.hpp"
#include "multiarm/scenario.hpp"
#include "multiarm/server.hpp"
#include "multiarm/simulation.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

enum Exit { kOk = 0, kConfig = 1, kRuntime = 2, kTruncated = 3 };

int serve(const std::string& scenario_path, std::optional<int> port, double rate,
          const std::string& record, std::optional<double> duration) {
  multiarm::Scenario scenario = multiarm::load_scenario(scenario_path);
  multiarm::ServeOptions opts;
  opts.port = multiarm::resolve_port(port, std::getenv("MULTIARM_PORT"));
  if (!(rate > 0.0)) throw multiarm::ConfigError("--rate must be positive");
  opts.snapshot_rate = rate;
  if (!record.empty()) opts.record = record;
  opts.duration = duration;

  multiarm::TeleopServer server(std::move(scenario), opts);
  server.start();
  std::cerr << "listening on ws://" << opts.host << ":" << server.port() << "\n";
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!server.wait_for(0.1)) {
    if (g_interrupted) break;
  }
  server.stop();
  const auto s = server.stats();
  std::cerr << "ticks " << s.ticks << ", mean |jitter| " << s.mean_abs_jitter * 1e6
            << " us, snapshots " << s.snapshots_sent << ", dropped frames " << s.frames_dropped
            << "\n";
  if (auto f = server.fault()) {
    std::cerr << "fault: " << *f << "\n";
    return kRuntime;
  }
  return kOk;
}

int replay(const std::string& log_path, const std::string& out_path) {
  std::ifstream in(log_path);
  if (!in) throw multiarm::ConfigError("cannot open " + log_path);
  const multiarm::ReplayLog log = multiarm::read_log(in);
  std::ofstream out;
  if (!out_path.empty()) {
    out.open(out_path);
    if (!out) throw multiarm::ConfigError("cannot open " + out_path);
  }
  const multiarm::ReplayResult r = multiarm::replay(log, out_path.empty() ? nullptr : &out);
  nlohmann::json summary{{"ticks", r.ticks},
                         {"inputs", log.inputs.size()},
                         {"telemetry_hash", r.telemetry_hash},
                         {"truncated", r.truncated},
                         {"mismatches", r.mismatches}};
  std::cout << summary.dump() << "\n";
  if (!r.mismatches.empty()) return kRuntime;
  return r.truncated ? kTruncated : kOk;
}

int run(const std::string& scenario_path, const std::string& record, const std::string& out_path) {
  const multiarm::Scenario scenario = multiarm::load_scenario(scenario_path);
  std::ofstream out, log;
  if (!out_path.empty()) out.open(out_path);
  std::optional<multiarm::Recorder> recorder;
  if (!record.empty()) {
    log.open(record);
    if (!log) throw multiarm::ConfigError("cannot open " + record);
    recorder.emplace(log, scenario);
  }
  const auto r = multiarm::run_scenario(scenario, {}, out_path.empty() ? nullptr : &out,
                                        recorder ? &*recorder : nullptr);
  std::cout << nlohmann::json{{"ticks", r.ticks}, {"inputs", r.inputs},
                              {"telemetry_hash", r.telemetry_hash}}
                   .dump()
            << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-arm telemanipulation service"};
  app.require_subcommand(1);

  std::string scenario_path, record, log_path, out_path;
  std::optional<int> port;
  std::optional<double> duration;
  double rate = 60.0;

  auto* serve_cmd = app.add_subcommand("serve", "Run the control loop and WebSocket server");
  serve_cmd->add_option("--scenario", scenario_path, "Scenario file")->required();
  serve_cmd->add_option("--port", port, "Listen port (default $MULTIARM_PORT or 8765)");
  serve_cmd->add_option("--rate", rate, "Snapshot broadcast rate [Hz]");
  serve_cmd->add_option("--record", record, "Write a session log");
  serve_cmd->add_option("--duration", duration, "Stop after this many simulated seconds");

  auto* replay_cmd = app.add_subcommand("replay", "Replay a session log offline");
  replay_cmd->add_option("--log", log_path, "Session log")->required();
  replay_cmd->add_option("--out", out_path, "Telemetry output (JSON lines)");

  auto* check_cmd = app.add_subcommand("check", "Validate a scenario file");
  check_cmd->add_option("--scenario", scenario_path, "Scenario file")->required();

  auto* run_cmd = app.add_subcommand("run", "Run a scenario headless at full speed");
  run_cmd->add_option("--scenario", scenario_path, "Scenario file")->required();
  run_cmd->add_option("--record", record, "Write a session log");
  run_cmd->add_option("--out", out_path, "Telemetry output (JSON lines)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*serve_cmd) return serve(scenario_path, port, rate, record, duration);
    if (*replay_cmd) return replay(log_path, out_path);
    if (*run_cmd) return run(scenario_path, record, out_path);
    const auto s = multiarm::load_scenario(scenario_path);
    std::cout << scenario_path << ": ok (" << s.arms.size() << " arms, " << s.script.size()
              << " scripted inputs)\n";
    return kOk;
  } catch (const multiarm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime fault: " << e.what() << "\n";
    return kRuntime;
  }
}
