#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multiarm/impedance.hpp"
#include "multiarm/kinematics.hpp"
#include "multiarm/modality.hpp"
#include "multiarm/protocol.hpp"

namespace multiarm {

inline constexpr int kScenarioSchemaVersion = 1;

struct ArmConfig {
  RobotId id = 0;
  ArmModel model;  // base_pose set from the scenario
  VectorX q0;
  VectorX inertia;  // diagonal joint inertia [kg m^2]
  VectorX nullspace_target;  // defaults to q0
  std::vector<double> link_masses;  // point mass at each joint frame origin [kg]
};

struct ObjectConfig {
  std::string name;
  Pose pose;  // world
  std::vector<Vector3> grasp_points;  // object frame
  double grasp_radius = 0.05;
  double slack = 0.02;
};

/// Constant external wrench on one end-effector, world frame, active on
/// [start, end).
struct WrenchEvent {
  RobotId arm = 0;
  double start = 0.0;
  double end = 0.0;
  Vector3 force = Vector3::Zero();
  Vector3 torque = Vector3::Zero();
};

/// Inbound message applied at the first tick whose clock reaches `t`.
struct ScriptedInput {
  double t = 0.0;
  WireMessage message;
};

struct Scenario {
  double dt = 1e-3;
  double duration = 0.0;
  double xi = 1.0;
  double pinv_damping = kDefaultPinvDamping;
  double nullspace_stiffness = 5.0;
  Vector3 gravity = Vector3::Zero();
  std::size_t telemetry_decimation = 1;
  double snapshot_rate = 60.0;  // Hz, for the service broadcast
  ModalityParams modality;
  std::vector<ArmConfig> arms;
  std::vector<ObjectConfig> objects;
  std::vector<WrenchEvent> wrenches;
  std::vector<ScriptedInput> script;  // sorted by t
  nlohmann::json source;              // document this scenario was parsed from

  std::map<RobotId, Pose> bases() const;
  const ArmConfig& arm(RobotId id) const;
};

/// Throws ConfigError describing the first schema violation.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);

/// Four stand-in arms on the corners of a 0.8 m x 1.9 m rectangle, each
/// yawed to face the centre.
nlohmann::json default_scenario_json();

/// Ready configuration of the stand-in arm.
VectorX ready_configuration();

}  // namespace multiarm
