#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "multiarm/errors.hpp"
#include "multiarm/kinematics.hpp"
#include "multiarm/se3.hpp"
#include "multiarm/session.hpp"
#include "multiarm/types.hpp"

namespace multiarm {

inline constexpr int kProtocolVersion = 1;

/// Operator hand sample. Orientation is (w, x, y, z).
struct HandPoseMsg {
  Hand hand = Hand::Left;
  Vector3 position = Vector3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  double s_a = 0.0;
  bool operator==(const HandPoseMsg& o) const {
    return hand == o.hand && position == o.position && orientation.coeffs() == o.orientation.coeffs() &&
           s_a == o.s_a;
  }
};

struct ButtonMsg {
  ButtonEvent event;
  bool operator==(const ButtonMsg&) const = default;
};

struct RobotSnapshot {
  RobotId id = 0;
  VectorX q;
  Pose ee;       // world frame
  Pose desired;  // world frame
  std::optional<Modality> modality;
  std::optional<Hand> owner;
  bool frozen = false;
  double k_l = 0.0;
  double k_w = 0.0;
  bool gripper = false;
  bool saturated = false;
};

struct GroupSnapshot {
  Hand owner = Hand::Left;
  Modality modality = Modality::Independent;
  bool frozen = false;
  bool stale = false;
  double alpha = 1.0;
  std::optional<Pose> virtual_frame;  // world frame, CC only
};

struct ObjectSnapshot {
  std::string name;
  Pose pose;
  std::vector<RobotId> attached;
  bool dropped = false;
};

struct StateSnapshot {
  double clock = 0.0;
  std::uint64_t tick = 0;
  std::vector<RobotSnapshot> robots;
  std::vector<GroupSnapshot> groups;
  std::vector<ObjectSnapshot> objects;
  GuiModel gui;
};

/// Server reply to a Button message: the resulting operator-panel model.
struct AckMsg {
  std::uint64_t ack_seq = 0;
  GuiModel gui;
  bool operator==(const AckMsg&) const = default;
};

struct ErrorMsg {
  std::optional<std::uint64_t> ack_seq;
  std::string message;
  bool operator==(const ErrorMsg&) const = default;
};

/// Sent once per connection: arm geometry so clients can draw from q.
struct HelloMsg {
  nlohmann::json arms = nlohmann::json::array();
  bool operator==(const HelloMsg&) const = default;
};

using Payload = std::variant<HandPoseMsg, ButtonMsg, StateSnapshot, AckMsg, ErrorMsg, HelloMsg>;

struct WireMessage {
  std::uint64_t seq = 0;
  double t = 0.0;
  Payload payload;
};

/// Wire-level rejection: malformed JSON, wrong schema version, bad field.
class ProtocolError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct ParseResult {
  WireMessage message;
  std::vector<std::string> warnings;
};

std::string type_name(const Payload& p);

nlohmann::json to_json(const WireMessage& m);
std::string serialize(const WireMessage& m);
/// Throws ProtocolError. Hand quaternions more than 1e-6 off unit norm are
/// renormalized; beyond 1e-3 a warning is attached.
ParseResult parse_message(const nlohmann::json& j);
ParseResult parse_message(std::string_view text);

std::string button_name(const ButtonEvent& ev);

// Shared JSON helpers (also used by the scenario loader and telemetry).
nlohmann::json pose_to_json(const Pose& p);
Pose pose_from_json(const nlohmann::json& j);
nlohmann::json gui_to_json(const GuiModel& g);
GuiModel gui_from_json(const nlohmann::json& j);
nlohmann::json snapshot_to_json(const StateSnapshot& s);
StateSnapshot snapshot_from_json(const nlohmann::json& j);
nlohmann::json session_to_json(const SessionState& s);

Vector3 vec3_from_json(const nlohmann::json& j);
VectorX vecx_from_json(const nlohmann::json& j);
nlohmann::json to_json_array(const VectorX& v);
nlohmann::json to_json_array(const Vector3& v);

}  // namespace multiarm
