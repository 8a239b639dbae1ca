#include "multiarm/modality.hpp"

#include <algorithm>
#include <string>

#include "multiarm/errors.hpp"

namespace multiarm {

bool is_fresh(const HandFrame& hand, double now, double stale_timeout) {
  return now - hand.timestamp <= stale_timeout;
}

namespace {

void require_fresh(const HandFrame& hand, double now, double stale_timeout, const char* what) {
  if (!is_fresh(hand, now, stale_timeout)) {
    throw StaleInputError(std::string(what) + ": hand sample is stale");
  }
}

const Pose& base_of(const std::map<RobotId, Pose>& bases, RobotId id) {
  const auto it = bases.find(id);
  if (it == bases.end()) throw ContractViolation("unknown robot id " + std::to_string(id));
  return it->second;
}

std::vector<RobotId> member_ids(const CcBinding& b) {
  std::vector<RobotId> ids;
  for (const auto& m : b.members) ids.push_back(m.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

std::vector<IcBinding> ic_init(const HandFrame& hand, std::span<const ArmAnchor> robots, double now,
                               double stale_timeout) {
  require_fresh(hand, now, stale_timeout, "ic_init");
  if (robots.empty()) throw ContractViolation("ic_init: no robots");
  std::vector<IcBinding> out;
  out.reserve(robots.size());
  for (const auto& r : robots) {
    const Pose hand_in_base = inverse(r.base) * hand.pose;
    out.push_back({hand_in_base.rotation.inverse() * r.ee.rotation,
                   r.ee.translation - hand_in_base.translation});
  }
  return out;
}

Pose ic_update(const IcBinding& binding, const HandFrame& hand, const Pose& base) {
  const Pose hand_in_base = inverse(base) * hand.pose;
  return {hand_in_base.rotation * binding.hand_to_ee,
          hand_in_base.translation + binding.offset_base};
}

CcBinding cc_init(const HandFrame& hand, std::span<const CcAnchor> robots,
                  const ClosureLimits& limits, double now, double stale_timeout,
                  double translation_scale) {
  require_fresh(hand, now, stale_timeout, "cc_init");
  if (robots.size() < 2) throw ContractViolation("cc_init: coordinated control needs >= 2 robots");
  Vector3 centroid = Vector3::Zero();
  for (const auto& r : robots) centroid += r.ee_world.translation;
  centroid /= static_cast<double>(robots.size());

  CcBinding b;
  b.virtual_ts = Pose{hand.pose.rotation, centroid};
  b.hand_to_virtual = hand.pose.rotation.inverse() * b.virtual_ts.rotation;
  b.offset_world = centroid - hand.pose.translation;
  b.hand_position_ts = hand.pose.translation;
  b.translation_scale = translation_scale;
  b.limits = limits;
  const Pose world_to_virtual = inverse(b.virtual_ts);
  for (const auto& r : robots) {
    const Pose ee_in_virtual = world_to_virtual * r.ee_world;
    b.members.push_back(
        {r.id, ee_in_virtual.rotation, ee_in_virtual.translation, ee_in_virtual.translation});
  }
  return b;
}

bool cc_closure_step(CcBinding& binding, ClosureCommand command, double dt, double epsilon) {
  if (!(dt > 0.0)) throw ContractViolation("cc_closure_step: dt must be positive");
  if (command == ClosureCommand::Neutral) return true;
  const double rate = command == ClosureCommand::Increase ? epsilon : -epsilon;
  const double alpha = binding.alpha + rate * dt;
  for (const auto& m : binding.members) {
    const double norm = (m.offset_ts * alpha).norm();
    if (norm < binding.limits.l_min || norm > binding.limits.l_max) return false;
  }
  binding.alpha = alpha;
  for (auto& m : binding.members) m.offset = m.offset_ts * alpha;
  return true;
}

Pose virtual_frame(const CcBinding& binding, const HandFrame& hand) {
  const Rotation r = hand.pose.rotation * binding.hand_to_virtual;
  if (binding.translation_scale == 1.0) {
    return {r, hand.pose.translation + binding.offset_world};
  }
  const Vector3 travel = hand.pose.translation - binding.hand_position_ts;
  return {r, binding.hand_position_ts + binding.offset_world + binding.translation_scale * travel};
}

std::map<RobotId, Pose> cc_update(const CcBinding& binding, const HandFrame& hand,
                                  const std::map<RobotId, Pose>& robot_bases) {
  const Pose v = virtual_frame(binding, hand);
  std::map<RobotId, Pose> out;
  for (const auto& m : binding.members) {
    const Pose ee_world = v * Pose{m.virtual_to_ee, m.offset};
    out.emplace(m.id, inverse(base_of(robot_bases, m.id)) * ee_world);
  }
  return out;
}

CcBinding cc_relink(const CcBinding& binding, const Pose& virtual_world, const HandFrame& hand) {
  CcBinding b = binding;
  b.virtual_ts = virtual_world;
  b.hand_to_virtual = hand.pose.rotation.inverse() * virtual_world.rotation;
  b.offset_world = virtual_world.translation - hand.pose.translation;
  b.hand_position_ts = hand.pose.translation;
  return b;
}

FreezeSnapshot freeze(const ControlGroup& group, const std::map<RobotId, RobotReference>& refs,
                      const std::optional<CcBinding>& cc, const std::optional<Pose>& virtual_world) {
  FreezeSnapshot s;
  s.members = group.members;
  s.owner = group.owner;
  s.modality = group.modality;
  for (RobotId id : group.members) {
    const auto it = refs.find(id);
    if (it == refs.end()) throw ContractViolation("freeze: unknown robot " + std::to_string(id));
    s.desired.emplace(id, it->second.desired);
    s.stiffness.emplace(id, it->second.stiffness);
  }
  if (cc && virtual_world && group.modality == Modality::Coordinated &&
      member_ids(*cc) == group.members) {
    s.cc = cc;
    s.virtual_world = virtual_world;
  }
  return s;
}

ActiveBinding unfreeze(const FreezeSnapshot& snapshot, const HandFrame& hand,
                       const std::map<RobotId, Pose>& robot_bases, const ClosureLimits& limits,
                       double now, double stale_timeout, double translation_scale) {
  require_fresh(hand, now, stale_timeout, "unfreeze");
  if (snapshot.modality == Modality::Coordinated) {
    if (snapshot.cc && snapshot.virtual_world && member_ids(*snapshot.cc) == snapshot.members) {
      return cc_relink(*snapshot.cc, *snapshot.virtual_world, hand);
    }
    std::vector<CcAnchor> anchors;
    for (RobotId id : snapshot.members) {
      anchors.push_back({id, base_of(robot_bases, id) * snapshot.desired.at(id)});
    }
    return cc_init(hand, anchors, limits, now, stale_timeout, translation_scale);
  }
  std::vector<ArmAnchor> anchors;
  for (RobotId id : snapshot.members) {
    anchors.push_back({base_of(robot_bases, id), snapshot.desired.at(id)});
  }
  return ic_init(hand, anchors, now, stale_timeout);
}

// ---------------------------------------------------------------------------

ModalityEngine::ModalityEngine(std::map<RobotId, Pose> robot_bases,
                               std::map<RobotId, RobotReference> initial, ModalityParams params)
    : bases_(std::move(robot_bases)), refs_(std::move(initial)), params_(params) {
  for (const auto& [id, base] : bases_) {
    if (!refs_.contains(id)) throw ContractViolation("modality engine: missing initial reference");
  }
}

const RobotReference& ModalityEngine::reference(RobotId id) const {
  const auto it = refs_.find(id);
  if (it == refs_.end()) throw ContractViolation("unknown robot id " + std::to_string(id));
  return it->second;
}

GroupStatus ModalityEngine::status(Hand h) const {
  GroupStatus s;
  const auto& rt = runtime_[index(h)];
  if (!rt) return s;
  s.stale = rt->stale;
  s.frozen = rt->snapshot.has_value() && std::holds_alternative<std::monostate>(rt->binding);
  s.active = !s.stale && !s.frozen && !std::holds_alternative<std::monostate>(rt->binding);
  if (const auto* cc = std::get_if<CcBinding>(&rt->binding)) {
    s.modality = Modality::Coordinated;
    s.alpha = cc->alpha;
    s.virtual_world = rt->virtual_world;
  } else if (rt->snapshot && rt->snapshot->cc) {
    s.modality = Modality::Coordinated;
    s.alpha = rt->snapshot->cc->alpha;
    s.virtual_world = rt->snapshot->virtual_world;
  } else if (rt->snapshot) {
    s.modality = rt->snapshot->modality;
  }
  return s;
}

void ModalityEngine::step(const std::array<std::optional<ControlGroup>, 2>& groups,
                          const std::array<std::optional<HandFrame>, 2>& hands,
                          const std::array<ClosureCommand, 2>& closure, double now, double dt) {
  for (Hand h : kHands) {
    const auto& g = groups[index(h)];
    auto& rt = runtime_[index(h)];
    if (!g) {
      rt.reset();
      continue;
    }
    if (!rt) {
      rt.emplace();
      rt->generation = g->generation;
    }
    step_group(*rt, *g, hands[index(h)], closure[index(h)], now, dt);
  }
}

void ModalityEngine::link(Runtime& rt, const ControlGroup& g, const HandFrame& hand, double now) {
  if (rt.snapshot) {
    FreezeSnapshot snap = *rt.snapshot;
    snap.modality = g.modality;
    ActiveBinding b = unfreeze(snap, hand, bases_, params_.limits, now, params_.stale_timeout,
                               params_.translation_scale);
    std::visit([&](auto&& v) { rt.binding = std::move(v); }, std::move(b));
    rt.snapshot.reset();
  } else if (g.modality == Modality::Coordinated) {
    if (auto* cc = std::get_if<CcBinding>(&rt.binding); cc && rt.virtual_world) {
      rt.binding = cc_relink(*cc, *rt.virtual_world, hand);
    } else {
      std::vector<CcAnchor> anchors;
      for (RobotId id : g.members) anchors.push_back({id, base_of(bases_, id) * refs_.at(id).desired});
      rt.binding = cc_init(hand, anchors, params_.limits, now, params_.stale_timeout,
                           params_.translation_scale);
    }
  } else {
    std::vector<ArmAnchor> anchors;
    for (RobotId id : g.members) anchors.push_back({base_of(bases_, id), refs_.at(id).desired});
    rt.binding = ic_init(hand, anchors, now, params_.stale_timeout);
  }
  rt.needs_link = false;
}

void ModalityEngine::step_group(Runtime& rt, const ControlGroup& g,
                                const std::optional<HandFrame>& hand, ClosureCommand closure,
                                double now, double dt) {
  if (rt.generation != g.generation) {
    rt.binding = std::monostate{};
    rt.needs_link = false;
    rt.virtual_world.reset();
    if (rt.snapshot) {
      rt.snapshot->cc.reset();
      rt.snapshot->virtual_world.reset();
    }
    rt.generation = g.generation;
  }

  if (g.frozen) {
    if (!rt.snapshot) {
      const auto* cc = std::get_if<CcBinding>(&rt.binding);
      rt.snapshot = freeze(g, refs_, cc ? std::optional<CcBinding>(*cc) : std::nullopt,
                           rt.virtual_world);
    } else if (rt.snapshot->members != g.members) {
      for (RobotId id : g.members) {
        if (!rt.snapshot->desired.contains(id)) {
          rt.snapshot->desired.emplace(id, refs_.at(id).desired);
          rt.snapshot->stiffness.emplace(id, refs_.at(id).stiffness);
        }
      }
      std::erase_if(rt.snapshot->desired, [&](const auto& kv) { return !g.contains(kv.first); });
      std::erase_if(rt.snapshot->stiffness, [&](const auto& kv) { return !g.contains(kv.first); });
      rt.snapshot->members = g.members;
    }
    rt.snapshot->owner = g.owner;
    rt.snapshot->modality = g.modality;
    rt.binding = std::monostate{};
    rt.needs_link = false;
    rt.stale = false;
    for (RobotId id : g.members) {
      refs_[id] = {rt.snapshot->desired.at(id), rt.snapshot->stiffness.at(id)};
    }
    return;
  }

  if (!hand || !is_fresh(*hand, now, params_.stale_timeout)) {
    // Hold outputs; the next fresh sample re-captures offsets.
    rt.stale = true;
    if (!std::holds_alternative<std::monostate>(rt.binding)) rt.needs_link = true;
    return;
  }
  rt.stale = false;

  bool linked_now = false;
  if (rt.snapshot || rt.needs_link || std::holds_alternative<std::monostate>(rt.binding)) {
    link(rt, g, *hand, now);
    linked_now = true;
  }

  if (auto* ic = std::get_if<std::vector<IcBinding>>(&rt.binding)) {
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      const RobotId id = g.members[i];
      refs_[id].desired = ic_update((*ic)[i], *hand, base_of(bases_, id));
    }
  } else if (auto* cc = std::get_if<CcBinding>(&rt.binding)) {
    if (!linked_now) cc_closure_step(*cc, closure, dt, params_.epsilon);
    for (auto& [id, pose] : cc_update(*cc, *hand, bases_)) refs_[id].desired = pose;
    rt.virtual_world = virtual_frame(*cc, *hand);
  }

  const StiffnessCommand k = map_stiffness(hand->s_a, params_.stiffness_bounds);
  for (RobotId id : g.members) refs_[id].stiffness = k;
}

}  // namespace multiarm
