#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "multiarm/types.hpp"

namespace multiarm {

/// Robots commanded together by one hand. Each hand owns at most one group;
/// bindings live in the modality engine, keyed by owner and `generation`.
struct ControlGroup {
  std::vector<RobotId> members;  // sorted, non-empty
  Hand owner = Hand::Left;
  Modality modality = Modality::Independent;
  bool frozen = false;
  /// Bumped on every membership, owner or modality change so the engine
  /// knows to re-run its activation capture. Freeze toggles do not bump it.
  std::uint64_t generation = 0;

  bool contains(RobotId id) const;
  bool operator==(const ControlGroup&) const = default;
};

enum class ButtonKind { RB, S, F, Trigger, Increase, Decrease };
enum class Edge { Press, Release };

struct ButtonEvent {
  Hand hand = Hand::Left;
  ButtonKind button = ButtonKind::S;
  RobotId robot = 0;  // only for RB
  Edge edge = Edge::Press;

  bool operator==(const ButtonEvent&) const = default;
};

/// Per-hand joystick state that outlives a single event.
struct HandControls {
  bool s_held = false;
  bool s_used = false;  // an RB click happened during this S hold
  std::vector<RobotId> working;  // selection being edited while S is held
  ClosureCommand closure = ClosureCommand::Neutral;

  bool operator==(const HandControls&) const = default;
};

struct SessionState {
  int robot_count = 0;
  std::array<std::optional<ControlGroup>, 2> groups;  // indexed by owner hand
  std::array<HandControls, 2> controls;
  std::vector<bool> gripper_closed;  // index id - 1
  std::uint64_t next_generation = 1;

  const std::optional<ControlGroup>& group(Hand h) const { return groups[index(h)]; }
  /// Group containing `id`, or nullptr.
  const ControlGroup* group_of(RobotId id) const;
  bool valid_robot(RobotId id) const { return id >= 1 && id <= robot_count; }
  bool operator==(const SessionState&) const = default;
};

enum class EffectKind {
  GroupChanged,
  GroupDissolved,
  ModalityToggled,
  Frozen,
  Unfrozen,
  GripperChanged,
  ClosureChanged,
  Warning,
};

struct Effect {
  EffectKind kind;
  Hand hand;
  std::string message;
};

struct EventResult {
  SessionState state;
  std::vector<Effect> effects;
};

SessionState initial_session(int robot_count);

/// Joystick grammar:
///  - S held + RB(k): toggle k in the hand's working selection; releasing S
///    commits it (robots taken from the other hand's group leave that group).
///  - S click without RB: toggle IC/CC on the hand's group (needs >= 2 robots).
///  - RB(k) without S: take over the group containing k; merges with the
///    hand's current group if any.
///  - F: toggle freeze. Trigger: toggle grippers of an active group.
///  - Increase/Decrease: closure command while pressed.
/// Invalid requests leave the state unchanged and emit a Warning effect.
EventResult apply_event(const SessionState& state, const ButtonEvent& ev);

/// Trigger handling, exposed separately for callers driving grippers directly.
EventResult gripper_command(const SessionState& state, Hand hand, bool pressed);

struct GuiModel {
  struct Entry {
    RobotId id = 0;
    Modality modality = Modality::Independent;
    bool frozen = false;
    bool operator==(const Entry&) const = default;
  };
  std::array<std::vector<Entry>, 2> panels;
  std::array<bool, 2> selecting{false, false};
  std::array<std::vector<RobotId>, 2> pending;

  bool operator==(const GuiModel&) const = default;
};

GuiModel gui_projection(const SessionState& state);

/// Throws ContractViolation naming the first broken invariant.
void check_invariants(const SessionState& state);

/// Single-writer wrapper used by the control loop.
class SessionManager {
 public:
  explicit SessionManager(int robot_count) : state_(initial_session(robot_count)) {}
  std::vector<Effect> apply(const ButtonEvent& ev);
  const SessionState& state() const { return state_; }

 private:
  SessionState state_;
};

}  // namespace multiarm
