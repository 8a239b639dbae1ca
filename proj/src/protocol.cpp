#include "multiarm/protocol.hpp"

#include <charconv>
#include <cmath>

namespace multiarm {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ProtocolError(msg); }

const json& field(const json& j, const char* key) {
  if (!j.is_object()) fail("expected an object");
  const auto it = j.find(key);
  if (it == j.end()) fail(std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) fail(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

bool boolean(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_boolean()) fail(std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

std::string text(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

Hand hand_field(const json& j, const char* key) {
  const auto h = parse_hand(text(j, key));
  if (!h) fail(std::string("field '") + key + "' must be \"left\" or \"right\"");
  return *h;
}

Modality modality_from(const json& j) {
  if (!j.is_string()) fail("modality must be a string");
  const auto m = parse_modality(j.get<std::string>());
  if (!m) fail("modality must be \"IC\" or \"CC\"");
  return *m;
}

json optional_to_json(const std::optional<Modality>& m) {
  return m ? json(std::string(to_string(*m))) : json(nullptr);
}

json optional_to_json(const std::optional<Hand>& h) {
  return h ? json(std::string(to_string(*h))) : json(nullptr);
}

ButtonEvent button_from_json(const json& j) {
  ButtonEvent ev;
  ev.hand = hand_field(j, "hand");
  const std::string b = text(j, "button");
  if (b == "S") {
    ev.button = ButtonKind::S;
  } else if (b == "F") {
    ev.button = ButtonKind::F;
  } else if (b == "Trigger") {
    ev.button = ButtonKind::Trigger;
  } else if (b == "Increase") {
    ev.button = ButtonKind::Increase;
  } else if (b == "Decrease") {
    ev.button = ButtonKind::Decrease;
  } else if (b.size() > 2 && b.starts_with("RB")) {
    ev.button = ButtonKind::RB;
    int id = 0;
    const char* first = b.data() + 2;
    const char* last = b.data() + b.size();
    const auto [ptr, ec] = std::from_chars(first, last, id);
    if (ec != std::errc() || ptr != last || id < 1) fail("bad robot button '" + b + "'");
    ev.robot = id;
  } else {
    fail("unknown button '" + b + "'");
  }
  const std::string edge = text(j, "edge");
  if (edge == "press") {
    ev.edge = Edge::Press;
  } else if (edge == "release") {
    ev.edge = Edge::Release;
  } else {
    fail("edge must be \"press\" or \"release\"");
  }
  return ev;
}

json body_to_json(const Payload& p) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, HandPoseMsg>) {
          return {{"hand", to_string(m.hand)},
                  {"position", to_json_array(m.position)},
                  {"orientation",
                   {m.orientation.w(), m.orientation.x(), m.orientation.y(), m.orientation.z()}},
                  {"s_a", m.s_a}};
        } else if constexpr (std::is_same_v<T, ButtonMsg>) {
          return {{"hand", to_string(m.event.hand)},
                  {"button", button_name(m.event)},
                  {"edge", m.event.edge == Edge::Press ? "press" : "release"}};
        } else if constexpr (std::is_same_v<T, StateSnapshot>) {
          return snapshot_to_json(m);
        } else if constexpr (std::is_same_v<T, AckMsg>) {
          return {{"ack_seq", m.ack_seq}, {"gui", gui_to_json(m.gui)}};
        } else if constexpr (std::is_same_v<T, ErrorMsg>) {
          return {{"ack_seq", m.ack_seq ? json(*m.ack_seq) : json(nullptr)},
                  {"message", m.message}};
        } else {
          return {{"arms", m.arms}};
        }
      },
      p);
}

HandPoseMsg hand_pose_from_json(const json& b, std::vector<std::string>& warnings) {
  HandPoseMsg m;
  m.hand = hand_field(b, "hand");
  m.position = vec3_from_json(field(b, "position"));
  const json& q = field(b, "orientation");
  if (!q.is_array() || q.size() != 4) fail("orientation must be [w, x, y, z]");
  for (const auto& c : q) {
    if (!c.is_number()) fail("orientation entries must be numbers");
  }
  m.orientation = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                     q[3].get<double>());
  const double n = m.orientation.norm();
  if (!std::isfinite(n) || n < 1e-9) fail("orientation quaternion is degenerate");
  if (std::abs(n - 1.0) > 1e-6) {
    if (std::abs(n - 1.0) > 1e-3) {
      warnings.push_back("hand orientation norm " + std::to_string(n) + " renormalized");
    }
    m.orientation.coeffs() /= n;
  }
  m.s_a = number(b, "s_a");
  if (std::isnan(m.s_a)) fail("s_a is NaN");
  if (!m.position.allFinite()) fail("position must be finite");
  return m;
}

}  // namespace

std::string button_name(const ButtonEvent& ev) {
  switch (ev.button) {
    case ButtonKind::RB: return "RB" + std::to_string(ev.robot);
    case ButtonKind::S: return "S";
    case ButtonKind::F: return "F";
    case ButtonKind::Trigger: return "Trigger";
    case ButtonKind::Increase: return "Increase";
    case ButtonKind::Decrease: return "Decrease";
  }
  return "?";
}

std::string type_name(const Payload& p) {
  static constexpr const char* names[] = {"hand_pose", "button", "snapshot", "ack", "error", "hello"};
  return names[p.index()];
}

json to_json_array(const VectorX& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json_array(const Vector3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vector3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) fail("expected a 3-vector");
  Vector3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) fail("vector entries must be numbers");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

VectorX vecx_from_json(const json& j) {
  if (!j.is_array()) fail("expected an array of numbers");
  VectorX v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail("vector entries must be numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

json pose_to_json(const Pose& p) {
  const auto& q = p.rotation.quaternion();
  return {{"position", to_json_array(p.translation)},
          {"orientation", {q.w(), q.x(), q.y(), q.z()}}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  p.translation = vec3_from_json(field(j, "position"));
  if (j.contains("orientation")) {
    const json& q = j["orientation"];
    if (!q.is_array() || q.size() != 4) fail("orientation must be [w, x, y, z]");
    try {
      p.rotation = Rotation(Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(),
                                               q[2].get<double>(), q[3].get<double>()));
    } catch (const json::exception&) {
      fail("orientation entries must be numbers");
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  return p;
}

json gui_to_json(const GuiModel& g) {
  json out;
  for (Hand h : kHands) {
    json panel = json::array();
    for (const auto& e : g.panels[index(h)]) {
      panel.push_back({{"id", e.id}, {"modality", to_string(e.modality)}, {"frozen", e.frozen}});
    }
    out[std::string(to_string(h))] = panel;
    out["selecting"][std::string(to_string(h))] = g.selecting[index(h)];
    out["pending"][std::string(to_string(h))] = g.pending[index(h)];
  }
  return out;
}

GuiModel gui_from_json(const json& j) {
  GuiModel g;
  for (Hand h : kHands) {
    const std::string key(to_string(h));
    for (const auto& e : field(j, key.c_str())) {
      g.panels[index(h)].push_back(
          {field(e, "id").get<RobotId>(), modality_from(field(e, "modality")), boolean(e, "frozen")});
    }
    g.selecting[index(h)] = field(field(j, "selecting"), key.c_str()).get<bool>();
    g.pending[index(h)] = field(field(j, "pending"), key.c_str()).get<std::vector<RobotId>>();
  }
  return g;
}

json snapshot_to_json(const StateSnapshot& s) {
  json robots = json::array();
  for (const auto& r : s.robots) {
    robots.push_back({{"id", r.id},
                      {"q", to_json_array(r.q)},
                      {"ee", pose_to_json(r.ee)},
                      {"desired", pose_to_json(r.desired)},
                      {"modality", optional_to_json(r.modality)},
                      {"owner", optional_to_json(r.owner)},
                      {"frozen", r.frozen},
                      {"k_l", r.k_l},
                      {"k_w", r.k_w},
                      {"gripper", r.gripper},
                      {"saturated", r.saturated}});
  }
  json groups = json::array();
  for (const auto& g : s.groups) {
    groups.push_back({{"owner", to_string(g.owner)},
                      {"modality", to_string(g.modality)},
                      {"frozen", g.frozen},
                      {"stale", g.stale},
                      {"alpha", g.alpha},
                      {"virtual_frame", g.virtual_frame ? pose_to_json(*g.virtual_frame) : json(nullptr)}});
  }
  json objects = json::array();
  for (const auto& o : s.objects) {
    objects.push_back({{"name", o.name},
                       {"pose", pose_to_json(o.pose)},
                       {"attached", o.attached},
                       {"dropped", o.dropped}});
  }
  return {{"clock", s.clock}, {"tick", s.tick},     {"robots", robots},
          {"groups", groups}, {"objects", objects}, {"gui", gui_to_json(s.gui)}};
}

StateSnapshot snapshot_from_json(const json& j) {
  StateSnapshot s;
  s.clock = number(j, "clock");
  s.tick = field(j, "tick").get<std::uint64_t>();
  for (const auto& r : field(j, "robots")) {
    RobotSnapshot rs;
    rs.id = field(r, "id").get<RobotId>();
    rs.q = vecx_from_json(field(r, "q"));
    rs.ee = pose_from_json(field(r, "ee"));
    rs.desired = pose_from_json(field(r, "desired"));
    if (!field(r, "modality").is_null()) rs.modality = modality_from(r["modality"]);
    if (!field(r, "owner").is_null()) rs.owner = hand_field(r, "owner");
    rs.frozen = boolean(r, "frozen");
    rs.k_l = number(r, "k_l");
    rs.k_w = number(r, "k_w");
    rs.gripper = boolean(r, "gripper");
    rs.saturated = boolean(r, "saturated");
    s.robots.push_back(std::move(rs));
  }
  for (const auto& g : field(j, "groups")) {
    GroupSnapshot gs;
    gs.owner = hand_field(g, "owner");
    gs.modality = modality_from(field(g, "modality"));
    gs.frozen = boolean(g, "frozen");
    gs.stale = boolean(g, "stale");
    gs.alpha = number(g, "alpha");
    if (!field(g, "virtual_frame").is_null()) gs.virtual_frame = pose_from_json(g["virtual_frame"]);
    s.groups.push_back(gs);
  }
  for (const auto& o : field(j, "objects")) {
    s.objects.push_back({text(o, "name"), pose_from_json(field(o, "pose")),
                         field(o, "attached").get<std::vector<RobotId>>(), boolean(o, "dropped")});
  }
  s.gui = gui_from_json(field(j, "gui"));
  return s;
}

json session_to_json(const SessionState& s) {
  json groups = json::array();
  for (const auto& g : s.groups) {
    if (!g) {
      groups.push_back(nullptr);
      continue;
    }
    groups.push_back({{"members", g->members},
                      {"owner", to_string(g->owner)},
                      {"modality", to_string(g->modality)},
                      {"frozen", g->frozen},
                      {"generation", g->generation}});
  }
  json controls = json::array();
  for (const auto& c : s.controls) {
    controls.push_back({{"s_held", c.s_held},
                        {"s_used", c.s_used},
                        {"working", c.working},
                        {"closure", static_cast<int>(c.closure)}});
  }
  return {{"robot_count", s.robot_count},
          {"groups", groups},
          {"controls", controls},
          {"gripper_closed", s.gripper_closed},
          {"next_generation", s.next_generation}};
}

json to_json(const WireMessage& m) {
  return {{"v", kProtocolVersion},
          {"type", type_name(m.payload)},
          {"seq", m.seq},
          {"t", m.t},
          {"body", body_to_json(m.payload)}};
}

std::string serialize(const WireMessage& m) { return to_json(m).dump(); }

ParseResult parse_message(const json& j) {
  ParseResult r;
  try {
    if (!j.is_object()) fail("message must be a JSON object");
    const json& v = field(j, "v");
    if (!v.is_number_integer() || v.get<int>() != kProtocolVersion) {
      fail("unsupported protocol version");
    }
    const std::string type = text(j, "type");
    if (j.contains("seq")) {
      if (!j["seq"].is_number_unsigned()) fail("seq must be a non-negative integer");
      r.message.seq = j["seq"].get<std::uint64_t>();
    }
    if (j.contains("t")) r.message.t = number(j, "t");
    const json& body = field(j, "body");
    if (type == "hand_pose") {
      r.message.payload = hand_pose_from_json(body, r.warnings);
    } else if (type == "button") {
      r.message.payload = ButtonMsg{button_from_json(body)};
    } else if (type == "snapshot") {
      r.message.payload = snapshot_from_json(body);
    } else if (type == "ack") {
      r.message.payload = AckMsg{field(body, "ack_seq").get<std::uint64_t>(),
                                 gui_from_json(field(body, "gui"))};
    } else if (type == "error") {
      ErrorMsg e;
      if (!field(body, "ack_seq").is_null()) e.ack_seq = body["ack_seq"].get<std::uint64_t>();
      e.message = text(body, "message");
      r.message.payload = e;
    } else if (type == "hello") {
      r.message.payload = HelloMsg{field(body, "arms")};
    } else {
      fail("unknown message type '" + type + "'");
    }
  } catch (const json::exception& e) {
    fail(std::string("malformed message: ") + e.what());
  }
  return r;
}

ParseResult parse_message(std::string_view text_in) {
  json j;
  try {
    j = json::parse(text_in);
  } catch (const json::parse_error& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
  return parse_message(j);
}

}  // namespace multiarm
