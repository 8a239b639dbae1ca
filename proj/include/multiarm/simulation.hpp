#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "multiarm/impedance.hpp"
#include "multiarm/modality.hpp"
#include "multiarm/plant.hpp"
#include "multiarm/protocol.hpp"
#include "multiarm/scenario.hpp"
#include "multiarm/session.hpp"

namespace multiarm {

/// Object carried as a kinematic attachment to the commanded end-effector
/// frames of the robots gripping it.
struct ObjectState {
  std::string name;
  Pose pose;
  std::map<RobotId, Pose> grasp_offsets;  // commanded ee (world) -> object
  std::map<std::pair<RobotId, RobotId>, double> reference_distances;  // measured ee pairs
  bool dropped = false;
  std::set<RobotId> must_reopen;  // held it when it dropped; regrasp needs a fresh close
};

struct ArmTelemetry {
  RobotId arm = 0;
  VectorX q;
  VectorX tau;
  Twist6 error;
  Pose ee;       // world
  Pose desired;  // world
  std::optional<Modality> modality;
  std::optional<Hand> owner;
  bool frozen = false;
  double alpha = 1.0;
  StiffnessCommand stiffness;
  bool gripper = false;
  bool saturated = false;
  bool stale = false;
  bool fault = false;
};

struct TickRecord {
  std::uint64_t tick = 0;
  double clock = 0.0;
  std::vector<ArmTelemetry> arms;
};

/// The control loop in one object: ingest -> modality engine -> controllers
/// -> plant -> objects. Bit-deterministic for identical input sequences.
class Simulation {
 public:
  explicit Simulation(Scenario scenario);

  /// Applies one inbound message between ticks. HandPose samples are stamped
  /// with the current logical clock. Returns session effects (buttons) and
  /// throws ValidationError for out-of-range input.
  std::vector<Effect> apply(const WireMessage& message);

  TickRecord tick();

  StateSnapshot snapshot() const;
  GuiModel gui() const { return gui_projection(session_.state()); }

  std::uint64_t tick_count() const { return tick_; }
  double clock() const { return static_cast<double>(tick_) * scenario_.dt; }
  const Scenario& scenario() const { return scenario_; }
  const SessionState& session() const { return session_.state(); }
  const ModalityEngine& modality() const { return modality_; }
  const SimState& state() const { return state_; }
  const Plant& plant() const { return plant_; }
  const std::vector<ObjectState>& objects() const { return objects_; }
  const std::array<std::optional<HandFrame>, 2>& hands() const { return hands_; }

  /// End-effector pose of arm `id` in the world frame from the plant state.
  Pose ee_world(RobotId id) const;
  Pose desired_world(RobotId id) const;

 private:
  void update_objects();

  Scenario scenario_;
  Plant plant_;
  SessionManager session_;
  ModalityEngine modality_;
  std::deque<ImpedanceController> controllers_;  // not movable
  SimState state_;
  std::array<std::optional<HandFrame>, 2> hands_;
  std::vector<ObjectState> objects_;
  std::vector<bool> saturated_;
  std::vector<VectorX> last_tau_;
  std::vector<Twist6> last_error_;
  std::uint64_t tick_ = 0;
};

/// Tick index at which a message stamped `t` is applied.
std::uint64_t apply_tick(double t, double dt);

nlohmann::json telemetry_to_json(const TickRecord& record, const ArmTelemetry& arm);

/// 64-bit FNV-1a, used to pin telemetry streams.
class TelemetryHash {
 public:
  void update(std::string_view bytes);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 14695981039346656037ull;
};

/// Writes and hashes the telemetry lines of `record` if its tick is kept by
/// `decimation`.
void emit_telemetry(const TickRecord& record, std::size_t decimation, TelemetryHash& hash,
                    std::ostream* out);

class Recorder;

struct RunResult {
  std::uint64_t ticks = 0;
  std::size_t inputs = 0;
  std::string telemetry_hash;
  StateSnapshot final_snapshot;
};

/// Runs the scenario for its duration, feeding its script plus `extra`
/// inputs. Telemetry lines (one per arm per kept tick) go to `telemetry`.
/// With a recorder, every applied input and a final snapshot are logged.
RunResult run_scenario(const Scenario& scenario, std::span<const ScriptedInput> extra = {},
                       std::ostream* telemetry = nullptr, Recorder* recorder = nullptr);

}  // namespace multiarm
