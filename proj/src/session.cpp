#include "multiarm/session.hpp"

#include <algorithm>

#include "multiarm/errors.hpp"

namespace multiarm {

namespace {

bool contains(const std::vector<RobotId>& v, RobotId id) {
  return std::find(v.begin(), v.end(), id) != v.end();
}

void warn(EventResult& r, Hand h, std::string msg) {
  r.effects.push_back({EffectKind::Warning, h, std::move(msg)});
}

std::vector<RobotId> set_union(const std::vector<RobotId>& a, const std::vector<RobotId>& b) {
  std::vector<RobotId> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

void bump(SessionState& s, ControlGroup& g) { g.generation = s.next_generation++; }

/// Robot is mid-selection by `by` (that hand holds S and the robot is in its
/// working set or committed group).
bool reserved_by(const SessionState& s, Hand by, RobotId id) {
  const auto& c = s.controls[index(by)];
  if (!c.s_held) return false;
  if (contains(c.working, id)) return true;
  const auto& g = s.groups[index(by)];
  return g && g->contains(id);
}

void commit_selection(EventResult& r, Hand h) {
  SessionState& s = r.state;
  auto& controls = s.controls[index(h)];
  std::vector<RobotId> working = controls.working;
  std::sort(working.begin(), working.end());
  auto& mine = s.groups[index(h)];

  if (working.empty()) {
    if (mine) {
      mine.reset();
      r.effects.push_back({EffectKind::GroupDissolved, h, "selection emptied"});
    }
    return;
  }

  // Robots taken from the other hand's group.
  auto& theirs = s.groups[index(other(h))];
  if (theirs) {
    const auto before = theirs->members.size();
    std::erase_if(theirs->members, [&](RobotId id) { return contains(working, id); });
    if (theirs->members.size() != before) {
      if (theirs->members.empty()) {
        theirs.reset();
        r.effects.push_back({EffectKind::GroupDissolved, other(h), "all robots taken"});
      } else {
        if (theirs->members.size() == 1) theirs->modality = Modality::Independent;
        bump(s, *theirs);
        r.effects.push_back({EffectKind::GroupChanged, other(h), "robots taken"});
      }
    }
  }

  if (mine) {
    if (mine->members == working) return;
    mine->members = working;
    if (working.size() == 1) mine->modality = Modality::Independent;
  } else {
    mine = ControlGroup{working, h, Modality::Independent, false, 0};
  }
  bump(s, *mine);
  r.effects.push_back({EffectKind::GroupChanged, h, "selection committed"});
}

void toggle_modality(EventResult& r, Hand h) {
  auto& g = r.state.groups[index(h)];
  if (!g) {
    warn(r, h, "S click without an owned group");
    return;
  }
  if (g->frozen) {
    warn(r, h, "modality toggle ignored while frozen");
    return;
  }
  if (g->members.size() < 2) {
    warn(r, h, "coordinated control needs at least two robots");
    return;
  }
  g->modality = g->modality == Modality::Independent ? Modality::Coordinated
                                                      : Modality::Independent;
  bump(r.state, *g);
  r.effects.push_back({EffectKind::ModalityToggled, h, std::string(to_string(g->modality))});
}

void select_toggle(EventResult& r, Hand h, RobotId id) {
  SessionState& s = r.state;
  if (reserved_by(s, other(h), id)) {
    warn(r, h, "robot " + std::to_string(id) + " is mid-selection by the other hand");
    return;
  }
  auto& c = s.controls[index(h)];
  c.s_used = true;
  if (auto it = std::find(c.working.begin(), c.working.end(), id); it != c.working.end()) {
    c.working.erase(it);
  } else {
    c.working.push_back(id);
  }
}

void transfer_owner(EventResult& r, Hand h, RobotId id) {
  SessionState& s = r.state;
  const ControlGroup* holder = s.group_of(id);
  if (!holder) {
    warn(r, h, "robot " + std::to_string(id) + " is not in any group");
    return;
  }
  if (holder->owner == h) return;
  if (s.controls[index(other(h))].s_held) {
    warn(r, h, "group is mid-selection by the other hand");
    return;
  }
  ControlGroup moved = *s.groups[index(other(h))];
  s.groups[index(other(h))].reset();
  auto& mine = s.groups[index(h)];
  if (mine) {
    mine->members = set_union(mine->members, moved.members);
    mine->frozen = mine->frozen || moved.frozen;
  } else {
    mine = moved;
    mine->owner = h;
  }
  bump(s, *mine);
  s.controls[index(other(h))].closure = ClosureCommand::Neutral;
  r.effects.push_back({EffectKind::GroupDissolved, other(h), "group transferred"});
  r.effects.push_back({EffectKind::GroupChanged, h, "group received"});
}

}  // namespace

bool ControlGroup::contains(RobotId id) const { return multiarm::contains(members, id); }

const ControlGroup* SessionState::group_of(RobotId id) const {
  for (const auto& g : groups) {
    if (g && g->contains(id)) return &*g;
  }
  return nullptr;
}

SessionState initial_session(int robot_count) {
  if (robot_count < 1) throw ContractViolation("session: robot count must be positive");
  SessionState s;
  s.robot_count = robot_count;
  s.gripper_closed.assign(static_cast<std::size_t>(robot_count), false);
  return s;
}

EventResult gripper_command(const SessionState& state, Hand hand, bool pressed) {
  EventResult r{state, {}};
  if (!pressed) return r;
  const auto& g = state.groups[index(hand)];
  if (!g || g->frozen) return r;
  const bool all_closed = std::all_of(g->members.begin(), g->members.end(), [&](RobotId id) {
    return state.gripper_closed[static_cast<std::size_t>(id - 1)];
  });
  for (RobotId id : g->members) r.state.gripper_closed[static_cast<std::size_t>(id - 1)] = !all_closed;
  r.effects.push_back({EffectKind::GripperChanged, hand, all_closed ? "open" : "close"});
  return r;
}

EventResult apply_event(const SessionState& state, const ButtonEvent& ev) {
  EventResult r{state, {}};
  SessionState& s = r.state;
  auto& c = s.controls[index(ev.hand)];
  const bool press = ev.edge == Edge::Press;

  switch (ev.button) {
    case ButtonKind::S:
      if (press) {
        if (c.s_held) break;
        c.s_held = true;
        c.s_used = false;
        const auto& g = s.groups[index(ev.hand)];
        c.working = g ? g->members : std::vector<RobotId>{};
      } else {
        if (!c.s_held) break;
        c.s_held = false;
        if (c.s_used) {
          commit_selection(r, ev.hand);
        } else {
          toggle_modality(r, ev.hand);
        }
        c.working.clear();
        c.s_used = false;
      }
      break;

    case ButtonKind::RB:
      if (!press) break;
      if (!s.valid_robot(ev.robot)) {
        warn(r, ev.hand, "RB" + std::to_string(ev.robot) + ": no such robot");
        break;
      }
      if (c.s_held) {
        select_toggle(r, ev.hand, ev.robot);
      } else {
        transfer_owner(r, ev.hand, ev.robot);
      }
      break;

    case ButtonKind::F: {
      if (!press) break;
      auto& g = s.groups[index(ev.hand)];
      if (!g) {
        warn(r, ev.hand, "F without an owned group");
        break;
      }
      g->frozen = !g->frozen;
      r.effects.push_back({g->frozen ? EffectKind::Frozen : EffectKind::Unfrozen, ev.hand, ""});
      break;
    }

    case ButtonKind::Trigger:
      return gripper_command(state, ev.hand, press);

    case ButtonKind::Increase:
    case ButtonKind::Decrease: {
      const auto cmd =
          ev.button == ButtonKind::Increase ? ClosureCommand::Increase : ClosureCommand::Decrease;
      if (press) {
        c.closure = cmd;
      } else if (c.closure == cmd) {
        c.closure = ClosureCommand::Neutral;
      } else {
        break;
      }
      r.effects.push_back({EffectKind::ClosureChanged, ev.hand, ""});
      break;
    }
  }
  return r;
}

GuiModel gui_projection(const SessionState& state) {
  GuiModel m;
  for (Hand h : kHands) {
    if (const auto& g = state.groups[index(h)]) {
      for (RobotId id : g->members) m.panels[index(h)].push_back({id, g->modality, g->frozen});
    }
    const auto& c = state.controls[index(h)];
    m.selecting[index(h)] = c.s_held;
    if (c.s_held) {
      m.pending[index(h)] = c.working;
      std::sort(m.pending[index(h)].begin(), m.pending[index(h)].end());
    }
  }
  return m;
}

void check_invariants(const SessionState& state) {
  std::vector<int> seen(static_cast<std::size_t>(state.robot_count) + 1, 0);
  if (state.gripper_closed.size() != static_cast<std::size_t>(state.robot_count)) {
    throw ContractViolation("session: gripper table size mismatch");
  }
  for (Hand h : kHands) {
    const auto& g = state.groups[index(h)];
    if (!g) continue;
    if (g->owner != h) throw ContractViolation("session: group stored under wrong hand");
    if (g->members.empty()) throw ContractViolation("session: empty group");
    if (!std::is_sorted(g->members.begin(), g->members.end())) {
      throw ContractViolation("session: members not sorted");
    }
    if (g->modality == Modality::Coordinated && g->members.size() < 2) {
      throw ContractViolation("session: CC group with fewer than two robots");
    }
    for (RobotId id : g->members) {
      if (!state.valid_robot(id)) throw ContractViolation("session: unknown robot in group");
      if (++seen[static_cast<std::size_t>(id)] > 1) {
        throw ContractViolation("session: robot " + std::to_string(id) + " in two groups");
      }
    }
  }
}

std::vector<Effect> SessionManager::apply(const ButtonEvent& ev) {
  auto result = apply_event(state_, ev);
  state_ = std::move(result.state);
  return std::move(result.effects);
}

}  // namespace multiarm
