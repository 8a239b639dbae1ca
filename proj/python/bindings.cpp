// Thin pybind11 layer. Structured values cross the boundary as JSON text;
// the Python package decodes them.

#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "multiarm/errors.hpp"
#include "multiarm/impedance.hpp"
#include "multiarm/kinematics.hpp"
#include "multiarm/protocol.hpp"
#include "multiarm/recorder.hpp"
#include "multiarm/scenario.hpp"
#include "multiarm/session.hpp"
#include "multiarm/simulation.hpp"

namespace py = pybind11;
using namespace multiarm;
using nlohmann::json;

namespace {

Scenario scenario_from(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("scenario: not valid JSON");
  return parse_scenario(doc);
}

WireMessage message_from(const std::string& text) { return parse_message(std::string_view(text)).message; }

class PySimulation {
 public:
  explicit PySimulation(const std::string& scenario) : sim_(scenario_from(scenario)) {}

  void apply(const std::string& message) { sim_.apply(message_from(message)); }

  /// Telemetry lines of one tick, one JSON object per arm.
  std::vector<std::string> tick() {
    const TickRecord r = sim_.tick();
    std::vector<std::string> out;
    for (const auto& a : r.arms) out.push_back(telemetry_to_json(r, a).dump());
    return out;
  }

  std::string snapshot() const { return snapshot_to_json(sim_.snapshot()).dump(); }
  std::string gui() const { return gui_to_json(sim_.gui()).dump(); }
  std::uint64_t tick_count() const { return sim_.tick_count(); }
  double clock() const { return sim_.clock(); }

 private:
  Simulation sim_;
};

class PySession {
 public:
  explicit PySession(int robots) : state_(initial_session(robots)) {}

  /// Applies a button wire message; returns warning texts.
  std::vector<std::string> apply(const std::string& message) {
    const WireMessage m = message_from(message);
    const auto* b = std::get_if<ButtonMsg>(&m.payload);
    if (!b) throw ValidationError("session accepts button messages only");
    EventResult r = apply_event(state_, b->event);
    state_ = std::move(r.state);
    std::vector<std::string> warnings;
    for (const auto& e : r.effects) {
      if (e.kind == EffectKind::Warning) warnings.push_back(e.message);
    }
    return warnings;
  }

  std::string state() const { return session_to_json(state_).dump(); }
  std::string gui() const { return gui_to_json(gui_projection(state_)).dump(); }
  void check() const { check_invariants(state_); }

 private:
  SessionState state_;
};

std::string run(const std::string& scenario, bool want_telemetry, bool want_log) {
  const Scenario s = scenario_from(scenario);
  std::ostringstream telemetry, log;
  std::optional<Recorder> recorder;
  if (want_log) recorder.emplace(log, s);
  const RunResult r = run_scenario(s, {}, want_telemetry ? &telemetry : nullptr, recorder ? &*recorder : nullptr);
  json out{{"ticks", r.ticks},
           {"inputs", r.inputs},
           {"telemetry_hash", r.telemetry_hash},
           {"final_snapshot", snapshot_to_json(r.final_snapshot)}};
  if (want_telemetry) out["telemetry"] = telemetry.str();
  if (want_log) out["log"] = log.str();
  return out.dump();
}

std::string replay_text(const std::string& text) {
  std::istringstream in(text);
  const ReplayLog log = read_log(in);
  const ReplayResult r = replay(log);
  return json{{"ticks", r.ticks},
              {"telemetry_hash", r.telemetry_hash},
              {"mismatches", r.mismatches},
              {"truncated", r.truncated},
              {"final_snapshot", snapshot_to_json(r.final_snapshot)}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_multiarm, m) {
  m.doc() = "Multi-arm telemanipulation core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_RuntimeError);
  py::register_exception<SimulationFault>(m, "SimulationFault", PyExc_RuntimeError);

  m.attr("PROTOCOL_VERSION") = kProtocolVersion;

  m.def(
      "map_stiffness",
      [](double s_a, double k_l_min, double k_l_max, double k_w_min, double k_w_max) {
        const StiffnessCommand c = map_stiffness(s_a, {k_l_min, k_l_max, k_w_min, k_w_max});
        return std::pair{c.k_l, c.k_w};
      },
      py::arg("s_a"), py::arg("k_l_min") = 100.0, py::arg("k_l_max") = 600.0, py::arg("k_w_min") = 10.0,
      py::arg("k_w_max") = 60.0);
  m.def("fk", [](const VectorX& q) { return fk(default_arm_model(), q).matrix(); }, py::arg("q"),
        "End-effector pose (4x4) of the stand-in arm in its base frame.");
  m.def("jacobian", [](const VectorX& q) { return MatrixX(jacobian(default_arm_model(), q)); }, py::arg("q"));
  m.def("ready_pose", [] { return ready_configuration(); });
  m.def("default_scenario", [] { return default_scenario_json().dump(); });
  m.def("check_scenario", [](const std::string& s) { return scenario_from(s).source.dump(); });
  m.def("run_scenario", &run, py::arg("scenario"), py::arg("telemetry") = false, py::arg("record") = false);
  m.def("replay", &replay_text, py::arg("log"));

  py::class_<PySimulation>(m, "Simulation")
      .def(py::init<const std::string&>(), py::arg("scenario"))
      .def("apply", &PySimulation::apply, py::arg("message"))
      .def("tick", &PySimulation::tick)
      .def("snapshot", &PySimulation::snapshot)
      .def("gui", &PySimulation::gui)
      .def_property_readonly("tick_count", &PySimulation::tick_count)
      .def_property_readonly("clock", &PySimulation::clock);

  py::class_<PySession>(m, "Session")
      .def(py::init<int>(), py::arg("robots"))
      .def("apply", &PySession::apply, py::arg("message"))
      .def("state", &PySession::state)
      .def("gui", &PySession::gui)
      .def("check", &PySession::check);
}
