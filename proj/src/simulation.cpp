#include "multiarm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "multiarm/errors.hpp"
#include "multiarm/recorder.hpp"

namespace multiarm {

namespace {

PlantConfig plant_config(const Scenario& s) {
  PlantConfig pc;
  pc.dt = s.dt;
  pc.gravity = s.gravity;
  for (const auto& a : s.arms) pc.arms.push_back({a.model, a.inertia, a.link_masses});
  return pc;
}

std::map<RobotId, RobotReference> initial_references(const Scenario& s) {
  std::map<RobotId, RobotReference> refs;
  const StiffnessCommand k = map_stiffness(0.0, s.modality.stiffness_bounds);
  for (const auto& a : s.arms) refs.emplace(a.id, RobotReference{fk(a.model, a.q0), k});
  return refs;
}

SimState initial_state(const Scenario& s) {
  SimState st;
  for (const auto& a : s.arms) {
    st.arms.push_back({a.q0, VectorX::Zero(a.q0.size())});
  }
  return st;
}

}  // namespace

std::uint64_t apply_tick(double t, double dt) {
  if (t <= 0.0) return 0;
  return static_cast<std::uint64_t>(std::ceil(t / dt - 1e-9));
}

Simulation::Simulation(Scenario scenario)
    : scenario_(std::move(scenario)),
      plant_(plant_config(scenario_)),
      session_(static_cast<int>(scenario_.arms.size())),
      modality_(scenario_.bases(), initial_references(scenario_), scenario_.modality),
      state_(initial_state(scenario_)),
      saturated_(scenario_.arms.size(), false),
      last_error_(scenario_.arms.size()) {
  for (const auto& a : scenario_.arms) {
    controllers_.emplace_back(a.model, scenario_.pinv_damping);
    last_tau_.push_back(VectorX::Zero(a.q0.size()));
  }
  for (const auto& o : scenario_.objects) objects_.push_back({o.name, o.pose, {}, {}, false, {}});
}

std::vector<Effect> Simulation::apply(const WireMessage& message) {
  if (const auto* hp = std::get_if<HandPoseMsg>(&message.payload)) {
    if (std::isnan(hp->s_a)) throw ValidationError("hand_pose: s_a is NaN");
    if (!hp->position.allFinite()) throw ValidationError("hand_pose: non-finite position");
    hands_[index(hp->hand)] = HandFrame{hp->hand, Pose{Rotation(hp->orientation), hp->position},
                                        std::clamp(hp->s_a, 0.0, 1.0), clock()};
    return {};
  }
  if (const auto* b = std::get_if<ButtonMsg>(&message.payload)) return session_.apply(b->event);
  throw ValidationError("simulation: only hand_pose and button messages are inbound");
}

Pose Simulation::ee_world(RobotId id) const {
  const auto& a = scenario_.arm(id);
  return a.model.base_pose * fk(a.model, state_.arms[static_cast<std::size_t>(id - 1)].q);
}

Pose Simulation::desired_world(RobotId id) const {
  return scenario_.arm(id).model.base_pose * modality_.reference(id).desired;
}

TickRecord Simulation::tick() {
  const double now = clock();
  const SessionState& session = session_.state();
  const std::array<ClosureCommand, 2> closure{session.controls[0].closure,
                                              session.controls[1].closure};
  modality_.step(session.groups, hands_, closure, now, scenario_.dt);

  const std::size_t n_arms = scenario_.arms.size();
  std::vector<VectorX> torques(n_arms);
  std::vector<Twist6> external(n_arms);
  for (std::size_t i = 0; i < n_arms; ++i) {
    const ArmConfig& a = scenario_.arms[i];
    const RobotReference& ref = modality_.reference(a.id);
    controllers_[i].set_gains(build_gains(ref.stiffness, scenario_.xi, a.model.joint_count(),
                                          {scenario_.nullspace_stiffness, a.nullspace_target}));
    const ArmState& s = state_.arms[i];
    const DynamicsTerms dyn = plant_.dynamics(i, s.q, s.qdot);
    TorqueResult r = controllers_[i].update(s.q, s.qdot, ref.desired, dyn);
    saturated_[i] = r.saturated;
    last_error_[i] = r.error;
    torques[i] = r.tau;
  }
  for (const auto& w : scenario_.wrenches) {
    if (now >= w.start && now < w.end) {
      auto& e = external[static_cast<std::size_t>(w.arm - 1)];
      e.linear += w.force;
      e.angular += w.torque;
    }
  }
  state_ = plant_.step(state_, torques, external);
  last_tau_ = std::move(torques);
  ++tick_;
  update_objects();

  TickRecord rec;
  rec.tick = tick_;
  rec.clock = clock();
  for (std::size_t i = 0; i < n_arms; ++i) {
    const RobotId id = scenario_.arms[i].id;
    ArmTelemetry t;
    t.arm = id;
    t.q = state_.arms[i].q;
    t.tau = last_tau_[i];
    t.error = last_error_[i];
    t.ee = ee_world(id);
    t.desired = desired_world(id);
    t.stiffness = modality_.reference(id).stiffness;
    t.gripper = session_.state().gripper_closed[i];
    t.saturated = saturated_[i];
    t.fault = controllers_[i].faulted();
    if (const ControlGroup* g = session_.state().group_of(id)) {
      const GroupStatus gs = modality_.status(g->owner);
      t.modality = g->modality;
      t.owner = g->owner;
      t.frozen = g->frozen;
      t.alpha = gs.alpha;
      t.stale = gs.stale;
    }
    rec.arms.push_back(std::move(t));
  }
  return rec;
}

void Simulation::update_objects() {
  const auto& grippers = session_.state().gripper_closed;
  auto attached_anywhere = [&](RobotId id) {
    return std::any_of(objects_.begin(), objects_.end(),
                       [&](const ObjectState& o) { return o.grasp_offsets.contains(id); });
  };
  for (std::size_t k = 0; k < objects_.size(); ++k) {
    ObjectState& o = objects_[k];
    const ObjectConfig& cfg = scenario_.objects[k];
    bool changed = false;
    for (auto it = o.grasp_offsets.begin(); it != o.grasp_offsets.end();) {
      if (!grippers[static_cast<std::size_t>(it->first - 1)]) {
        it = o.grasp_offsets.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
    for (const auto& a : scenario_.arms) {
      if (!grippers[static_cast<std::size_t>(a.id - 1)]) o.must_reopen.erase(a.id);
    }
    for (const auto& a : scenario_.arms) {
      if (!grippers[static_cast<std::size_t>(a.id - 1)] || attached_anywhere(a.id) ||
          o.must_reopen.count(a.id)) {
        continue;
      }
      const Vector3 ee = ee_world(a.id).translation;
      const bool in_reach = std::any_of(cfg.grasp_points.begin(), cfg.grasp_points.end(),
                                        [&](const Vector3& gp) {
                                          return (o.pose * gp - ee).norm() <= cfg.grasp_radius;
                                        });
      if (in_reach) {
        o.grasp_offsets.emplace(a.id, inverse(desired_world(a.id)) * o.pose);
        o.dropped = false;
        changed = true;
      }
    }
    if (changed) {
      o.reference_distances.clear();
      for (auto i = o.grasp_offsets.begin(); i != o.grasp_offsets.end(); ++i) {
        for (auto j = std::next(i); j != o.grasp_offsets.end(); ++j) {
          o.reference_distances[{i->first, j->first}] =
              (ee_world(i->first).translation - ee_world(j->first).translation).norm();
        }
      }
    }
    for (const auto& [pair, d0] : o.reference_distances) {
      const double d = (ee_world(pair.first).translation - ee_world(pair.second).translation).norm();
      if (std::abs(d - d0) > cfg.slack) {
        o.dropped = true;
        break;
      }
    }
    if (o.dropped) {
      for (const auto& [id, offset] : o.grasp_offsets) o.must_reopen.insert(id);
      o.grasp_offsets.clear();
      o.reference_distances.clear();
      continue;
    }
    if (!o.grasp_offsets.empty()) {
      const auto& [id, offset] = *o.grasp_offsets.begin();
      o.pose = desired_world(id) * offset;
    }
  }
}

StateSnapshot Simulation::snapshot() const {
  StateSnapshot s;
  s.clock = clock();
  s.tick = tick_;
  const SessionState& session = session_.state();
  for (std::size_t i = 0; i < scenario_.arms.size(); ++i) {
    const RobotId id = scenario_.arms[i].id;
    RobotSnapshot r;
    r.id = id;
    r.q = state_.arms[i].q;
    r.ee = ee_world(id);
    r.desired = desired_world(id);
    if (const ControlGroup* g = session.group_of(id)) {
      r.modality = g->modality;
      r.owner = g->owner;
      r.frozen = g->frozen;
    }
    const auto& k = modality_.reference(id).stiffness;
    r.k_l = k.k_l;
    r.k_w = k.k_w;
    r.gripper = session.gripper_closed[i];
    r.saturated = saturated_[i];
    s.robots.push_back(std::move(r));
  }
  for (Hand h : kHands) {
    const auto& g = session.group(h);
    if (!g) continue;
    const GroupStatus gs = modality_.status(h);
    s.groups.push_back({h, g->modality, g->frozen, gs.stale, gs.alpha, gs.virtual_world});
  }
  for (const auto& o : objects_) {
    ObjectSnapshot os{o.name, o.pose, {}, o.dropped};
    for (const auto& [id, _] : o.grasp_offsets) os.attached.push_back(id);
    s.objects.push_back(std::move(os));
  }
  s.gui = gui_projection(session);
  return s;
}

nlohmann::json telemetry_to_json(const TickRecord& record, const ArmTelemetry& a) {
  return {{"tick", record.tick},
          {"t", record.clock},
          {"arm", a.arm},
          {"q", to_json_array(a.q)},
          {"tau", to_json_array(a.tau)},
          {"err", to_json_array(VectorX(a.error.vector()))},
          {"ee", pose_to_json(a.ee)},
          {"desired", pose_to_json(a.desired)},
          {"modality", a.modality ? nlohmann::json(std::string(to_string(*a.modality))) : nlohmann::json()},
          {"owner", a.owner ? nlohmann::json(std::string(to_string(*a.owner))) : nlohmann::json()},
          {"frozen", a.frozen},
          {"alpha", a.alpha},
          {"k_l", a.stiffness.k_l},
          {"k_w", a.stiffness.k_w},
          {"gripper", a.gripper},
          {"saturated", a.saturated},
          {"stale", a.stale},
          {"fault", a.fault}};
}

void TelemetryHash::update(std::string_view bytes) {
  for (unsigned char c : bytes) {
    state_ ^= c;
    state_ *= 1099511628211ull;
  }
}

std::string TelemetryHash::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

void emit_telemetry(const TickRecord& record, std::size_t decimation, TelemetryHash& hash,
                    std::ostream* out) {
  if ((record.tick - 1) % decimation != 0) return;
  for (const auto& arm : record.arms) {
    const std::string line = telemetry_to_json(record, arm).dump() + "\n";
    hash.update(line);
    if (out) *out << line;
  }
}

RunResult run_scenario(const Scenario& scenario, std::span<const ScriptedInput> extra,
                       std::ostream* telemetry, Recorder* recorder) {
  std::vector<ScriptedInput> inputs(scenario.script.begin(), scenario.script.end());
  inputs.insert(inputs.end(), extra.begin(), extra.end());
  std::stable_sort(inputs.begin(), inputs.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });

  Simulation sim(scenario);
  const auto ticks = static_cast<std::uint64_t>(std::llround(scenario.duration / scenario.dt));
  TelemetryHash hash;
  RunResult result;
  std::size_t next = 0;
  for (std::uint64_t k = 0; k < ticks; ++k) {
    while (next < inputs.size() && apply_tick(inputs[next].t, scenario.dt) <= k) {
      sim.apply(inputs[next].message);
      if (recorder) recorder->input(k, inputs[next].message);
      ++next;
      ++result.inputs;
    }
    emit_telemetry(sim.tick(), scenario.telemetry_decimation, hash, telemetry);
  }
  result.ticks = ticks;
  result.telemetry_hash = hash.hex();
  result.final_snapshot = sim.snapshot();
  if (recorder) {
    recorder->snapshot(ticks, result.final_snapshot);
    recorder->finish(ticks, result.telemetry_hash);
  }
  return result;
}

}  // namespace multiarm
