#include <doctest.h>

#include <sstream>

#include "multiarm/errors.hpp"
#include "multiarm/simulation.hpp"

using namespace multiarm;
using nlohmann::json;

namespace {

json button(double t, const char* hand, const std::string& b, const char* edge) {
  return {{"t", t}, {"type", "button"}, {"body", {{"hand", hand}, {"button", b}, {"edge", edge}}}};
}

void select(json& script, double t, const char* hand, std::initializer_list<int> ids) {
  script.push_back(button(t, hand, "S", "press"));
  for (int id : ids) {
    t += 0.01;
    script.push_back(button(t, hand, "RB" + std::to_string(id), "press"));
    script.push_back(button(t, hand, "RB" + std::to_string(id), "release"));
  }
  script.push_back(button(t + 0.01, hand, "S", "release"));
}

json hand_path(const char* hand, json waypoints, double s_a, double hold = -1.0) {
  json p{{"hand", hand}, {"rate", 100}, {"s_a", s_a}, {"waypoints", std::move(waypoints)}};
  if (hold >= 0.0) p["hold_until"] = hold;
  return p;
}

json wp(double t, double x, double y, double z) {
  return {{"t", t}, {"position", {x, y, z}}, {"orientation", {1, 0, 0, 0}}};
}

}  // namespace

TEST_CASE("with no commands every arm holds its initial pose") {
  json doc = default_scenario_json();
  doc["duration"] = 1.0;
  Simulation sim(parse_scenario(doc));
  std::vector<Pose> start;
  for (RobotId id = 1; id <= 4; ++id) start.push_back(sim.ee_world(id));
  for (int k = 0; k < 1000; ++k) sim.tick();
  for (RobotId id = 1; id <= 4; ++id) {
    CHECK(distance(sim.ee_world(id), start[static_cast<std::size_t>(id - 1)]).position < 1e-12);
  }
  const StateSnapshot snap = sim.snapshot();
  CHECK(snap.tick == 1000);
  CHECK(snap.clock == doctest::Approx(1.0));
  CHECK(snap.groups.empty());
  CHECK_FALSE(snap.robots[0].modality);
  CHECK(snap.robots[0].k_l == 100.0);
}

TEST_CASE("inputs are validated on ingest") {
  Simulation sim(parse_scenario(default_scenario_json()));
  HandPoseMsg m;
  m.s_a = std::nan("");
  CHECK_THROWS_AS(sim.apply({1, 0.0, m}), ValidationError);
  m.s_a = 4.0;
  sim.apply({2, 0.0, m});
  CHECK(sim.hands()[0]->s_a == 1.0);
  CHECK_THROWS_AS(sim.apply({3, 0.0, AckMsg{}}), ValidationError);
  const auto effects = sim.apply({4, 0.0, ButtonMsg{{Hand::Left, ButtonKind::F, 0, Edge::Press}}});
  REQUIRE(effects.size() == 1);
  CHECK(effects[0].kind == EffectKind::Warning);
}

TEST_CASE("IC square trajectory converges to the final target") {
  json doc = default_scenario_json();
  doc["duration"] = 5.0;
  const double x = 0.0, y = -0.3, z = 1.0, a = 0.08;
  doc["hand_paths"] = json::array({hand_path(
      "right",
      json::array({wp(0.0, x, y, z), wp(0.5, x, y, z), wp(1.3, x + a, y, z), wp(2.1, x + a, y + a, z),
                   wp(2.9, x, y + a, z), wp(3.7, x, y, z)}),
      1.0, 5.0)});
  json script = json::array();
  select(script, 0.1, "right", {1});
  doc["script"] = script;
  const Scenario s = parse_scenario(doc);
  const RunResult r = run_scenario(s);
  const auto& robot = r.final_snapshot.robots[0];
  CHECK(robot.modality == Modality::Independent);
  CHECK(robot.k_l == 600.0);
  CHECK((robot.ee.translation - robot.desired.translation).norm() < 2e-3);
  // Net hand travel is zero, so the target is the start pose.
  Simulation fresh(s);
  CHECK((robot.desired.translation - fresh.ee_world(1).translation).norm() < 1e-12);
}

TEST_CASE("coordinated transport with alpha held keeps desired distances") {
  json doc = default_scenario_json();
  doc["duration"] = 2.0;
  doc["telemetry_decimation"] = 1;
  doc["hand_paths"] = json::array({hand_path(
      "right", json::array({wp(0.0, 0, 0, 1), wp(0.4, 0, 0, 1), wp(1.2, 0.05, 0.02, 1.1), wp(2.0, 0.05, 0.02, 1.1)}), 1.0)});
  json script = json::array();
  select(script, 0.05, "right", {1, 2, 3, 4});
  script.push_back(button(0.2, "right", "S", "press"));
  script.push_back(button(0.21, "right", "S", "release"));
  doc["script"] = script;
  const Scenario s = parse_scenario(doc);
  std::ostringstream telemetry;
  run_scenario(s, {}, &telemetry);

  std::map<std::uint64_t, std::map<int, Vector3>> desired;
  std::istringstream in(telemetry.str());
  for (std::string line; std::getline(in, line);) {
    const json j = json::parse(line);
    if (j["modality"] != "CC") continue;
    desired[j["tick"]][j["arm"]] = vec3_from_json(j["desired"]["position"]);
  }
  REQUIRE(desired.size() > 1500);
  const auto& first = desired.begin()->second;
  double worst = 0.0;
  for (const auto& [tick, d] : desired) {
    for (int i = 1; i <= 4; ++i) {
      for (int j = i + 1; j <= 4; ++j) {
        worst = std::max(worst, std::abs((d.at(i) - d.at(j)).norm() - (first.at(i) - first.at(j)).norm()));
      }
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("identical inputs give identical telemetry") {
  const Scenario s = load_scenario(std::filesystem::path(MULTIARM_SOURCE_DIR) / "scenarios" / "four_arm.json");
  std::ostringstream a, b;
  const RunResult ra = run_scenario(s, {}, &a);
  const RunResult rb = run_scenario(s, {}, &b);
  CHECK(a.str() == b.str());
  CHECK(ra.telemetry_hash == rb.telemetry_hash);
  CHECK(ra.ticks == 3000);
  TelemetryHash h;
  h.update(a.str());
  CHECK(h.hex() == ra.telemetry_hash);
}

TEST_CASE("telemetry lines carry the per-arm fields") {
  json doc = default_scenario_json();
  doc["duration"] = 0.01;
  doc["telemetry_decimation"] = 5;
  std::ostringstream out;
  run_scenario(parse_scenario(doc), {}, &out);
  std::istringstream in(out.str());
  std::vector<json> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(json::parse(l));
  REQUIRE(lines.size() == 8);  // ticks 1 and 6, four arms each
  for (const char* key : {"tick", "t", "arm", "q", "tau", "err", "ee", "desired", "modality", "owner",
                          "frozen", "alpha", "k_l", "k_w", "gripper", "saturated", "stale", "fault"}) {
    CHECK(lines[0].contains(key));
  }
  CHECK(lines[4]["tick"] == 6);
}

TEST_CASE("FNV-1a reference values") {
  TelemetryHash empty;
  CHECK(empty.hex() == "cbf29ce484222325");
  TelemetryHash a;
  a.update("a");
  CHECK(a.value() == 0xaf63dc4c8601ec8cull);
  TelemetryHash foobar;
  foobar.update("foobar");
  CHECK(foobar.value() == 0x85944171f73967e8ull);
}

TEST_CASE("carried object attaches on grasp and releases on open") {
  const Scenario s = load_scenario(std::filesystem::path(MULTIARM_SOURCE_DIR) / "scenarios" / "pallet.json");
  Simulation sim(s);
  std::size_t next = 0;
  auto run_until = [&](double t) {
    while (sim.clock() < t - 1e-12) {
      while (next < s.script.size() && apply_tick(s.script[next].t, s.dt) <= sim.tick_count()) {
        sim.apply(s.script[next++].message);
      }
      sim.tick();
    }
  };
  run_until(0.25);
  CHECK(sim.objects()[0].grasp_offsets.empty());
  run_until(0.5);
  CHECK(sim.objects()[0].grasp_offsets.size() == 4);
  const Pose start = sim.objects()[0].pose;
  run_until(2.0);
  CHECK(sim.objects()[0].pose.translation.z() > start.translation.z() + 0.04);
  CHECK_FALSE(sim.objects()[0].dropped);
  // Open the grippers: the object stays where it was released.
  sim.apply({9000, sim.clock(), ButtonMsg{{Hand::Right, ButtonKind::Trigger, 0, Edge::Press}}});
  sim.tick();
  const Pose released = sim.objects()[0].pose;
  CHECK(sim.objects()[0].grasp_offsets.empty());
  for (int k = 0; k < 100; ++k) sim.tick();
  CHECK(distance(sim.objects()[0].pose, released).position == 0.0);
}

TEST_CASE("object drops when the grasp is pulled apart") {
  json doc = json::parse(R"({"schema_version":1,"duration":1.0,
    "arms":[{"id":1,"base":{"position":[0,-0.5,0],"yaw":1.5707963267948966}},
            {"id":2,"base":{"position":[0,0.5,0],"yaw":-1.5707963267948966}}]})");
  Simulation probe(parse_scenario(doc));
  const Vector3 p1 = probe.ee_world(1).translation, p2 = probe.ee_world(2).translation;
  const Vector3 c = 0.5 * (p1 + p2);
  doc["objects"] = json::array({{{"name", "bar"},
                                 {"pose", {{"position", {c.x(), c.y(), c.z()}}, {"orientation", {1, 0, 0, 0}}}},
                                 {"grasp_points", {{p1.x() - c.x(), p1.y() - c.y(), 0.0}, {p2.x() - c.x(), p2.y() - c.y(), 0.0}}},
                                 {"slack", 0.01}}});
  doc["wrenches"] = json::array({{{"arm", 1}, {"start", 0.3}, {"force", {0, -10, 0}}}});
  json script = json::array();
  select(script, 0.0, "left", {1, 2});
  script.push_back(button(0.05, "left", "Trigger", "press"));
  doc["script"] = script;
  doc["hand_paths"] = json::array({hand_path("left", json::array({wp(0.0, 0, 0, 1)}), 1.0, 1.0)});
  const RunResult r = run_scenario(parse_scenario(doc));
  CHECK(r.final_snapshot.objects[0].dropped);
  CHECK(r.final_snapshot.objects[0].attached.empty());
}
