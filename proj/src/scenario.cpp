#include "multiarm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "multiarm/errors.hpp"

namespace multiarm {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
  throw ConfigError(where + ": " + msg);
}

double get_number(const json& j, const char* key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) fail(where, std::string("'") + key + "' must be a number");
  const double v = j[key].get<double>();
  if (!std::isfinite(v)) fail(where, std::string("'") + key + "' must be finite");
  return v;
}

VectorX get_vector(const json& j, const std::string& where) {
  try {
    return vecx_from_json(j);
  } catch (const ProtocolError& e) {
    fail(where, e.what());
  }
}

Vector3 get_vec3(const json& j, const std::string& where) {
  try {
    return vec3_from_json(j);
  } catch (const ProtocolError& e) {
    fail(where, e.what());
  }
}

/// Pose with either a quaternion "orientation" or a "yaw" shortcut [rad].
Pose get_pose(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "pose must be an object");
  if (j.contains("yaw")) {
    if (j.contains("orientation")) fail(where, "give either 'yaw' or 'orientation'");
    const Pose p{Rotation::about_z(get_number(j, "yaw", 0.0, where)),
                 get_vec3(j.value("position", json::array({0, 0, 0})), where)};
    return p;
  }
  try {
    return pose_from_json(j);
  } catch (const ProtocolError& e) {
    fail(where, e.what());
  }
}

ArmModel parse_model(const json& j, const std::string& where) {
  if (j.is_string()) {
    if (j.get<std::string>() == "panda_standin") return default_arm_model();
    fail(where, "unknown model name '" + j.get<std::string>() + "'");
  }
  if (!j.is_object()) fail(where, "model must be a name or an object");
  if (j.contains("planar")) {
    std::vector<double> lengths;
    for (const auto& v : j["planar"]) {
      if (!v.is_number()) fail(where, "planar link lengths must be numbers");
      lengths.push_back(v.get<double>());
    }
    if (lengths.empty()) fail(where, "planar chain needs at least one link");
    return planar_chain(lengths);
  }
  ArmModel m;
  if (!j.contains("dh") || !j["dh"].is_array()) fail(where, "custom model needs a 'dh' array");
  for (const auto& row : j["dh"]) {
    m.joints.push_back({get_number(row, "a", 0.0, where), get_number(row, "d", 0.0, where),
                        get_number(row, "alpha", 0.0, where),
                        get_number(row, "theta_offset", 0.0, where)});
  }
  if (j.contains("flange")) m.flange = get_pose(j["flange"], where + ".flange");
  const auto n = static_cast<Eigen::Index>(m.joints.size());
  m.lower_limits = j.contains("lower") ? get_vector(j["lower"], where) : VectorX::Constant(n, -2.9);
  m.upper_limits = j.contains("upper") ? get_vector(j["upper"], where) : VectorX::Constant(n, 2.9);
  m.torque_limits = j.contains("torque_limits") ? get_vector(j["torque_limits"], where)
                                                : VectorX::Constant(n, 87.0);
  return m;
}

json merged(const json& defaults, const json& arm) {
  json out = defaults.is_object() ? defaults : json::object();
  for (auto it = arm.begin(); it != arm.end(); ++it) out[it.key()] = it.value();
  return out;
}

ArmConfig parse_arm(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "arm entry must be an object");
  ArmConfig a;
  if (!j.contains("id") || !j["id"].is_number_integer()) fail(where, "'id' must be an integer");
  a.id = j["id"].get<int>();
  a.model = parse_model(j.value("model", json("panda_standin")), where + ".model");
  if (!j.contains("base")) fail(where, "missing 'base'");
  a.model.base_pose = get_pose(j["base"], where + ".base");
  try {
    a.model.validate();
  } catch (const ConfigError& e) {
    fail(where, e.what());
  }
  const auto n = static_cast<Eigen::Index>(a.model.joint_count());
  const bool standin = !j.contains("model") || j["model"] == "panda_standin";
  a.q0 = j.contains("q0") ? get_vector(j["q0"], where + ".q0")
                          : (standin ? ready_configuration() : VectorX::Zero(n));
  if (a.q0.size() != n) fail(where, "q0 must have one entry per joint");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a.q0[i] < a.model.lower_limits[i] || a.q0[i] > a.model.upper_limits[i]) {
      fail(where, "q0 outside joint limits at joint " + std::to_string(i + 1));
    }
  }
  if (j.contains("inertia") && j["inertia"].is_number()) {
    a.inertia = VectorX::Constant(n, j["inertia"].get<double>());
  } else if (j.contains("inertia")) {
    a.inertia = get_vector(j["inertia"], where + ".inertia");
  } else {
    a.inertia = VectorX::Constant(n, 0.1);
  }
  if (a.inertia.size() != n || !(a.inertia.array() > 0.0).all()) {
    fail(where, "inertia must be positive with one entry per joint");
  }
  a.nullspace_target = j.contains("nullspace_target")
                           ? get_vector(j["nullspace_target"], where + ".nullspace_target")
                           : a.q0;
  if (a.nullspace_target.size() != n) fail(where, "nullspace_target dimension mismatch");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a.nullspace_target[i] < a.model.lower_limits[i] ||
        a.nullspace_target[i] > a.model.upper_limits[i]) {
      fail(where, "nullspace_target outside joint limits");
    }
  }
  if (j.contains("link_masses")) {
    const VectorX m = get_vector(j["link_masses"], where + ".link_masses");
    if (m.size() != n || (m.array() < 0.0).any()) fail(where, "link_masses must be >= 0, one per joint");
    a.link_masses.assign(m.data(), m.data() + m.size());
  } else {
    a.link_masses.assign(static_cast<std::size_t>(n), 0.0);
  }
  return a;
}

WireMessage parse_script_message(json entry, const std::string& where) {
  entry.erase("t");
  if (!entry.contains("v")) entry["v"] = kProtocolVersion;
  try {
    const auto parsed = parse_message(entry);
    const auto idx = parsed.message.payload.index();
    if (idx != 0 && idx != 1) fail(where, "scripts may only contain hand_pose and button messages");
    return parsed.message;
  } catch (const ProtocolError& e) {
    fail(where, e.what());
  }
}

double interpolate_scalar(const json& profile, double t, const std::string& where) {
  if (profile.is_number()) return profile.get<double>();
  if (!profile.is_array() || profile.empty()) fail(where, "s_a must be a number or [[t, value], ...]");
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : profile) {
    if (!p.is_array() || p.size() != 2) fail(where, "s_a breakpoints must be [t, value]");
    pts.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  if (t <= pts.front().first) return pts.front().second;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (t <= pts[i].first) {
      const double u = (t - pts[i - 1].first) / (pts[i].first - pts[i - 1].first);
      return pts[i - 1].second + u * (pts[i].second - pts[i - 1].second);
    }
  }
  return pts.back().second;
}

/// Expands a waypoint path into HandPose messages at a fixed rate.
std::vector<ScriptedInput> expand_hand_path(const json& j, const std::string& where) {
  const auto hand = j.contains("hand") && j["hand"].is_string()
                        ? parse_hand(j["hand"].get<std::string>())
                        : std::nullopt;
  if (!hand) fail(where, "'hand' must be \"left\" or \"right\"");
  const double rate = get_number(j, "rate", 100.0, where);
  if (!(rate > 0.0)) fail(where, "rate must be positive");
  if (!j.contains("waypoints") || !j["waypoints"].is_array() || j["waypoints"].empty()) {
    fail(where, "need at least one waypoint");
  }
  std::vector<std::pair<double, Pose>> wps;
  for (const auto& w : j["waypoints"]) {
    wps.emplace_back(get_number(w, "t", 0.0, where), get_pose(w, where + ".waypoint"));
  }
  for (std::size_t i = 1; i < wps.size(); ++i) {
    if (!(wps[i].first > wps[i - 1].first)) fail(where, "waypoint times must increase");
  }
  const double start = wps.front().first;
  const double end = get_number(j, "hold_until", wps.back().first, where);
  const json s_a = j.value("s_a", json(0.0));

  std::vector<ScriptedInput> out;
  const auto count = static_cast<long>(std::floor((end - start) * rate + 1e-9));
  for (long k = 0; k <= count; ++k) {
    const double t = start + static_cast<double>(k) / rate;
    Pose p = wps.back().second;
    for (std::size_t i = 1; i < wps.size(); ++i) {
      if (t <= wps[i].first) {
        const double u = (t - wps[i - 1].first) / (wps[i].first - wps[i - 1].first);
        const auto& a = wps[i - 1].second;
        const auto& b = wps[i].second;
        p.translation = a.translation + u * (b.translation - a.translation);
        p.rotation = Rotation(a.rotation.quaternion().slerp(u, b.rotation.quaternion()));
        break;
      }
    }
    HandPoseMsg m;
    m.hand = *hand;
    m.position = p.translation;
    m.orientation = p.rotation.quaternion();
    m.s_a = interpolate_scalar(s_a, t, where);
    out.push_back({t, WireMessage{0, t, m}});
  }
  return out;
}

}  // namespace

std::map<RobotId, Pose> Scenario::bases() const {
  std::map<RobotId, Pose> out;
  for (const auto& a : arms) out.emplace(a.id, a.model.base_pose);
  return out;
}

const ArmConfig& Scenario::arm(RobotId id) const {
  for (const auto& a : arms) {
    if (a.id == id) return a;
  }
  throw ContractViolation("scenario: unknown robot id " + std::to_string(id));
}

VectorX ready_configuration() {
  VectorX q(7);
  q << 0.0, -std::numbers::pi / 4.0, 0.0, -3.0 * std::numbers::pi / 4.0, 0.0, std::numbers::pi / 2.0,
      std::numbers::pi / 4.0;
  return q;
}

Scenario parse_scenario(const json& doc) {
  const std::string where = "scenario";
  if (!doc.is_object()) fail(where, "document must be a JSON object");
  if (doc.value("schema_version", 0) != kScenarioSchemaVersion) {
    fail(where, "schema_version must be " + std::to_string(kScenarioSchemaVersion));
  }
  Scenario s;
  s.source = doc;
  s.dt = get_number(doc, "dt", 1e-3, where);
  if (!(s.dt > 0.0)) fail(where, "dt must be positive");
  s.duration = get_number(doc, "duration", 0.0, where);
  if (s.duration < 0.0) fail(where, "duration must be non-negative");
  s.xi = get_number(doc, "xi", 1.0, where);
  if (s.xi < 0.0) fail(where, "xi must be non-negative");
  s.pinv_damping = get_number(doc, "pinv_damping", kDefaultPinvDamping, where);
  if (s.pinv_damping < 0.0) fail(where, "pinv_damping must be non-negative");
  s.nullspace_stiffness = get_number(doc, "nullspace_stiffness", 5.0, where);
  if (s.nullspace_stiffness < 0.0) fail(where, "nullspace_stiffness must be non-negative");
  if (doc.contains("gravity")) s.gravity = get_vec3(doc["gravity"], where + ".gravity");
  const double decimation = get_number(doc, "telemetry_decimation", 1.0, where);
  if (decimation < 1.0 || decimation != std::floor(decimation)) {
    fail(where, "telemetry_decimation must be a positive integer");
  }
  s.telemetry_decimation = static_cast<std::size_t>(decimation);
  s.snapshot_rate = get_number(doc, "snapshot_rate", 60.0, where);
  if (!(s.snapshot_rate > 0.0)) fail(where, "snapshot_rate must be positive");

  if (doc.contains("stiffness")) {
    const json& k = doc["stiffness"];
    auto& b = s.modality.stiffness_bounds;
    b.k_l_min = get_number(k, "k_l_min", b.k_l_min, where + ".stiffness");
    b.k_l_max = get_number(k, "k_l_max", b.k_l_max, where + ".stiffness");
    b.k_w_min = get_number(k, "k_w_min", b.k_w_min, where + ".stiffness");
    b.k_w_max = get_number(k, "k_w_max", b.k_w_max, where + ".stiffness");
    if (!(b.k_l_min >= 0.0 && b.k_l_min <= b.k_l_max && b.k_w_min >= 0.0 && b.k_w_min <= b.k_w_max)) {
      fail(where + ".stiffness", "need 0 <= min <= max for both channels");
    }
  }
  if (doc.contains("closure")) {
    const json& c = doc["closure"];
    s.modality.epsilon = get_number(c, "epsilon", s.modality.epsilon, where + ".closure");
    s.modality.limits.l_min = get_number(c, "l_min", s.modality.limits.l_min, where + ".closure");
    s.modality.limits.l_max = get_number(c, "l_max", s.modality.limits.l_max, where + ".closure");
    if (!(s.modality.epsilon >= 0.0 && s.modality.limits.l_min >= 0.0 &&
          s.modality.limits.l_min < s.modality.limits.l_max)) {
      fail(where + ".closure", "need epsilon >= 0 and 0 <= l_min < l_max");
    }
  }
  s.modality.translation_scale = get_number(doc, "translation_scale", 1.0, where);
  if (!(s.modality.translation_scale > 0.0)) fail(where, "translation_scale must be positive");
  s.modality.stale_timeout = get_number(doc, "stale_timeout", kDefaultStaleTimeout, where);
  if (!(s.modality.stale_timeout > 0.0)) fail(where, "stale_timeout must be positive");

  if (!doc.contains("arms") || !doc["arms"].is_array() || doc["arms"].empty()) {
    fail(where, "'arms' must be a non-empty array");
  }
  const json defaults = doc.value("arm_defaults", json::object());
  for (std::size_t i = 0; i < doc["arms"].size(); ++i) {
    s.arms.push_back(parse_arm(merged(defaults, doc["arms"][i]), "arms[" + std::to_string(i) + "]"));
  }
  std::sort(s.arms.begin(), s.arms.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < s.arms.size(); ++i) {
    if (s.arms[i].id != static_cast<RobotId>(i + 1)) {
      fail(where, "arm ids must be exactly 1..N");
    }
  }

  if (doc.contains("objects")) {
    for (std::size_t i = 0; i < doc["objects"].size(); ++i) {
      const json& o = doc["objects"][i];
      const std::string w = "objects[" + std::to_string(i) + "]";
      ObjectConfig oc;
      oc.name = o.value("name", "object" + std::to_string(i));
      if (!o.contains("pose")) fail(w, "missing 'pose'");
      oc.pose = get_pose(o["pose"], w + ".pose");
      for (const auto& g : o.value("grasp_points", json::array())) oc.grasp_points.push_back(get_vec3(g, w));
      if (oc.grasp_points.empty()) oc.grasp_points.push_back(Vector3::Zero());
      oc.grasp_radius = get_number(o, "grasp_radius", oc.grasp_radius, w);
      oc.slack = get_number(o, "slack", oc.slack, w);
      if (!(oc.grasp_radius > 0.0 && oc.slack > 0.0)) fail(w, "grasp_radius and slack must be positive");
      s.objects.push_back(std::move(oc));
    }
  }

  if (doc.contains("wrenches")) {
    for (std::size_t i = 0; i < doc["wrenches"].size(); ++i) {
      const json& wj = doc["wrenches"][i];
      const std::string w = "wrenches[" + std::to_string(i) + "]";
      WrenchEvent e;
      e.arm = wj.value("arm", 0);
      if (e.arm < 1 || e.arm > static_cast<RobotId>(s.arms.size())) fail(w, "unknown arm");
      e.start = get_number(wj, "start", 0.0, w);
      e.end = get_number(wj, "end", 1e300, w);
      if (wj.contains("force")) e.force = get_vec3(wj["force"], w);
      if (wj.contains("torque")) e.torque = get_vec3(wj["torque"], w);
      s.wrenches.push_back(e);
    }
  }

  if (doc.contains("hand_paths")) {
    for (std::size_t i = 0; i < doc["hand_paths"].size(); ++i) {
      auto expanded = expand_hand_path(doc["hand_paths"][i], "hand_paths[" + std::to_string(i) + "]");
      s.script.insert(s.script.end(), expanded.begin(), expanded.end());
    }
  }
  if (doc.contains("script")) {
    for (std::size_t i = 0; i < doc["script"].size(); ++i) {
      const json& e = doc["script"][i];
      const std::string w = "script[" + std::to_string(i) + "]";
      const double t = get_number(e, "t", 0.0, w);
      WireMessage m = parse_script_message(e, w);
      m.t = t;
      s.script.push_back({t, std::move(m)});
    }
  }
  std::stable_sort(s.script.begin(), s.script.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });
  std::uint64_t seq = 1;
  for (auto& e : s.script) e.message.seq = seq++;
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario file " + path.string() + ": " + e.what());
  }
  return parse_scenario(doc);
}

json default_scenario_json() {
  json arms = json::array();
  const double hx = 0.4;
  const double hy = 0.95;
  const std::array<std::pair<double, double>, 4> corners{{{-hx, -hy}, {hx, -hy}, {hx, hy}, {-hx, hy}}};
  for (std::size_t i = 0; i < corners.size(); ++i) {
    const auto [x, y] = corners[i];
    arms.push_back({{"id", static_cast<int>(i + 1)},
                    {"base", {{"position", {x, y, 0.0}}, {"yaw", std::atan2(-y, -x)}}}});
  }
  return {{"schema_version", kScenarioSchemaVersion},
          {"dt", 1e-3},
          {"duration", 1.0},
          {"arm_defaults", {{"model", "panda_standin"}, {"inertia", 0.1}}},
          {"arms", arms}};
}

}  // namespace multiarm
