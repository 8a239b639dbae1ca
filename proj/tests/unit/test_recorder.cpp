#include <doctest.h>

#include <sstream>

#include "multiarm/errors.hpp"
#include "multiarm/recorder.hpp"
#include "multiarm/simulation.hpp"

using namespace multiarm;

namespace {

Scenario four_arm() {
  return load_scenario(std::filesystem::path(MULTIARM_SOURCE_DIR) / "scenarios" / "four_arm.json");
}

std::string record(const Scenario& s, RunResult* out = nullptr) {
  std::ostringstream log;
  Recorder rec(log, s);
  const RunResult r = run_scenario(s, {}, nullptr, &rec);
  if (out) *out = r;
  return log.str();
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

/// Index of the last line whose record type is `type`.
std::size_t last_of(const std::vector<std::string>& lines, const std::string& type) {
  for (std::size_t i = lines.size(); i-- > 0;) {
    if (lines[i].find("\"type\":\"" + type + "\"") != std::string::npos) return i;
  }
  FAIL("no " << type << " record");
  return 0;
}

ReplayLog parse(const std::string& text) {
  std::istringstream in(text);
  return read_log(in);
}

}  // namespace

TEST_CASE("record then replay reproduces telemetry and the final snapshot") {
  const Scenario s = four_arm();
  RunResult live;
  const std::string text = record(s, &live);
  const ReplayLog log = parse(text);
  CHECK_FALSE(log.truncated);
  CHECK(log.inputs.size() == live.inputs);
  REQUIRE(log.ticks);
  CHECK(*log.ticks == 3000);

  std::ostringstream telemetry;
  const ReplayResult r = replay(log, &telemetry);
  CHECK(r.clean());
  CHECK(r.telemetry_hash == live.telemetry_hash);
  CHECK(snapshot_to_json(r.final_snapshot) == snapshot_to_json(live.final_snapshot));

  std::ostringstream direct;
  run_scenario(s, {}, &direct);
  CHECK(telemetry.str() == direct.str());
}

TEST_CASE("empty log replays zero ticks cleanly") {
  const ReplayLog log = parse("");
  const ReplayResult r = replay(log);
  CHECK(r.clean());
  CHECK(r.ticks == 0);
}

TEST_CASE("header-only log is truncated at zero ticks") {
  const Scenario s = four_arm();
  std::ostringstream out;
  Recorder rec(out, s);
  const ReplayLog log = parse(out.str());
  CHECK(log.truncated);
  const ReplayResult r = replay(log);
  CHECK(r.ticks == 0);
  CHECK(r.truncated);
}

TEST_CASE("a torn last line is a truncation, not an error") {
  auto lines = split(record(four_arm()));
  const std::size_t cut = last_of(lines, "input");
  lines.resize(cut + 1);
  lines.back().resize(lines.back().size() / 2);
  const ReplayLog log = parse(join(lines));
  CHECK(log.truncated);
  CHECK_FALSE(log.ticks);
  const ReplayResult r = replay(log);
  CHECK(r.truncated);
  CHECK(r.mismatches.empty());
  CHECK(r.ticks == log.inputs.back().tick);
}

TEST_CASE("a tampered snapshot is reported") {
  auto lines = split(record(four_arm()));
  std::string& snap = lines[last_of(lines, "snapshot")];
  const auto kl = snap.find("\"k_l\":");
  REQUIRE(kl != std::string::npos);
  snap.insert(kl + 6, "1");
  const ReplayResult r = replay(parse(join(lines)));
  CHECK_FALSE(r.clean());
  CHECK(r.mismatches.size() == 1);
}

TEST_CASE("a tampered input changes the telemetry hash") {
  auto lines = split(record(four_arm()));
  // A hand sample mid-run, while groups are bound.
  std::size_t i = lines.size() / 2;
  while (lines[i].find("\"hand_pose\"") == std::string::npos) ++i;
  nlohmann::json j = nlohmann::json::parse(lines[i]);
  j["msg"]["body"]["position"][0] = j["msg"]["body"]["position"][0].get<double>() + 0.01;
  lines[i] = j.dump();
  const ReplayResult r = replay(parse(join(lines)));
  CHECK_FALSE(r.clean());
}

TEST_CASE("corrupt logs are config errors") {
  CHECK_THROWS_AS(parse("not json\n{}\n"), ConfigError);
  CHECK_THROWS_AS(parse("{\"type\":\"input\",\"tick\":0}\n"), ConfigError);
  const std::string text = record(four_arm());
  const auto first_nl = text.find('\n');
  std::string bad = text;
  bad.insert(first_nl + 1, "garbage\n");
  CHECK_THROWS_AS(parse(bad), ConfigError);
  CHECK_THROWS_AS(parse(text + "{\"type\":\"input\",\"tick\":1}\n"), ConfigError);
}
