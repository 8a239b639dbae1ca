#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "multiarm/impedance.hpp"
#include "multiarm/se3.hpp"
#include "multiarm/session.hpp"
#include "multiarm/types.hpp"

namespace multiarm {

inline constexpr double kDefaultStaleTimeout = 0.2;  // s

/// Operator hand sample in the world frame. `timestamp` is the logical time at
/// which it was ingested.
struct HandFrame {
  Hand hand = Hand::Left;
  Pose pose;
  double s_a = 0.0;
  double timestamp = 0.0;
};

bool is_fresh(const HandFrame& hand, double now, double stale_timeout);

// ---------------------------------------------------------------------------
// Independent control

/// Robot base in the world and its end-effector pose in that base.
struct ArmAnchor {
  Pose base;
  Pose ee;
};

/// Offsets captured at activation: hand->ee rotation and the hand->ee
/// translation expressed in the robot base frame.
struct IcBinding {
  Rotation hand_to_ee;
  Vector3 offset_base = Vector3::Zero();
};

/// Throws StaleInputError if the hand sample is older than `stale_timeout`.
std::vector<IcBinding> ic_init(const HandFrame& hand, std::span<const ArmAnchor> robots, double now,
                               double stale_timeout = kDefaultStaleTimeout);

/// Desired end-effector pose in the robot base frame.
Pose ic_update(const IcBinding& binding, const HandFrame& hand, const Pose& base);

// ---------------------------------------------------------------------------
// Coordinated control

struct ClosureLimits {
  double l_min = 0.05;  // m
  double l_max = 1.0;
};

struct CcMember {
  RobotId id = 0;
  Rotation virtual_to_ee;
  Vector3 offset_ts = Vector3::Zero();  // l^v_ee at activation
  Vector3 offset = Vector3::Zero();     // current, after closure saturation
};

struct CcBinding {
  Pose virtual_ts;  // world pose of the virtual frame at activation
  Rotation hand_to_virtual;
  Vector3 offset_world = Vector3::Zero();
  Vector3 hand_position_ts = Vector3::Zero();
  double translation_scale = 1.0;
  std::vector<CcMember> members;
  double alpha = 1.0;
  ClosureLimits limits;
};

struct CcAnchor {
  RobotId id = 0;
  Pose ee_world;
};

/// Virtual frame at the centroid of the end-effectors, oriented as the hand.
/// Needs at least two robots (ContractViolation otherwise).
CcBinding cc_init(const HandFrame& hand, std::span<const CcAnchor> robots,
                  const ClosureLimits& limits, double now,
                  double stale_timeout = kDefaultStaleTimeout, double translation_scale = 1.0);

/// Integrates alpha by +-epsilon*dt and rescales every member offset. If any
/// member would leave [l_min, l_max] the whole step is rejected: alpha and
/// offsets keep their previous values. Returns true when committed.
bool cc_closure_step(CcBinding& binding, ClosureCommand command, double dt, double epsilon);

/// World pose of the virtual frame driven by the hand.
Pose virtual_frame(const CcBinding& binding, const HandFrame& hand);

/// Desired end-effector poses in each robot's base frame.
std::map<RobotId, Pose> cc_update(const CcBinding& binding, const HandFrame& hand,
                                  const std::map<RobotId, Pose>& robot_bases);

/// Re-attach an existing binding to a new hand sample so that the virtual
/// frame sits at `virtual_world`. Member offsets and alpha are kept.
CcBinding cc_relink(const CcBinding& binding, const Pose& virtual_world, const HandFrame& hand);

// ---------------------------------------------------------------------------
// Freeze

using ActiveBinding = std::variant<std::vector<IcBinding>, CcBinding>;

struct FreezeSnapshot {
  std::vector<RobotId> members;
  Hand owner = Hand::Left;
  Modality modality = Modality::Independent;
  std::map<RobotId, Pose> desired;  // base frames
  std::map<RobotId, StiffnessCommand> stiffness;
  std::optional<CcBinding> cc;           // binding active when frozen
  std::optional<Pose> virtual_world;     // its virtual frame at that moment
};

struct RobotReference {
  Pose desired;  // base frame
  StiffnessCommand stiffness;
};

FreezeSnapshot freeze(const ControlGroup& group, const std::map<RobotId, RobotReference>& refs,
                      const std::optional<CcBinding>& cc, const std::optional<Pose>& virtual_world);

/// Re-runs the activation capture against the current hand and the frozen
/// poses. A coordinated group whose binding survived keeps its alpha.
ActiveBinding unfreeze(const FreezeSnapshot& snapshot, const HandFrame& hand,
                       const std::map<RobotId, Pose>& robot_bases, const ClosureLimits& limits,
                       double now, double stale_timeout = kDefaultStaleTimeout,
                       double translation_scale = 1.0);

// ---------------------------------------------------------------------------
// Per-tick engine

struct ModalityParams {
  double stale_timeout = kDefaultStaleTimeout;
  double epsilon = 0.2;  // 1/s
  ClosureLimits limits;
  double translation_scale = 1.0;
  StiffnessBounds stiffness_bounds;
};

struct GroupStatus {
  bool active = false;  // has a live binding this tick
  bool stale = false;
  bool frozen = false;
  Modality modality = Modality::Independent;
  double alpha = 1.0;
  std::optional<Pose> virtual_world;
};

/// Turns session groups plus hand samples into per-robot references. Owns
/// every binding; runs inside the control loop only.
class ModalityEngine {
 public:
  ModalityEngine(std::map<RobotId, Pose> robot_bases, std::map<RobotId, RobotReference> initial,
                 ModalityParams params = {});

  void step(const std::array<std::optional<ControlGroup>, 2>& groups,
            const std::array<std::optional<HandFrame>, 2>& hands,
            const std::array<ClosureCommand, 2>& closure, double now, double dt);

  const RobotReference& reference(RobotId id) const;
  const std::map<RobotId, RobotReference>& references() const { return refs_; }
  GroupStatus status(Hand h) const;
  const ModalityParams& params() const { return params_; }

 private:
  struct Runtime {
    std::uint64_t generation = 0;
    std::variant<std::monostate, std::vector<IcBinding>, CcBinding> binding;
    bool needs_link = false;
    bool stale = false;
    std::optional<FreezeSnapshot> snapshot;
    std::optional<Pose> virtual_world;
  };

  void step_group(Runtime& rt, const ControlGroup& g, const std::optional<HandFrame>& hand,
                  ClosureCommand closure, double now, double dt);
  void link(Runtime& rt, const ControlGroup& g, const HandFrame& hand, double now);

  std::map<RobotId, Pose> bases_;
  std::map<RobotId, RobotReference> refs_;
  ModalityParams params_;
  std::array<std::optional<Runtime>, 2> runtime_;
};

}  // namespace multiarm
