#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "multiarm/errors.hpp"
#include "multiarm/modality.hpp"

using namespace multiarm;

namespace {

constexpr Hand L = Hand::Left;
constexpr Hand R = Hand::Right;

HandFrame sample(Hand h, const Pose& p, double t, double s_a = 0.0) { return {h, p, s_a, t}; }

std::map<RobotId, Pose> four_bases() {
  return {{1, Pose{Rotation::about_z(0.5), Vector3(-0.4, -0.95, 0.0)}},
          {2, Pose{Rotation::about_z(2.0), Vector3(0.4, -0.95, 0.0)}},
          {3, Pose{Rotation::about_z(-2.0), Vector3(0.4, 0.95, 0.0)}},
          {4, Pose{Rotation::about_z(-0.5), Vector3(-0.4, 0.95, 0.0)}}};
}

std::map<RobotId, RobotReference> initial_refs() {
  std::map<RobotId, RobotReference> r;
  for (RobotId id = 1; id <= 4; ++id) {
    r[id] = {Pose{Rotation::about_x(3.0), Vector3(0.3, 0.05 * id, 0.5)}, {}};
  }
  return r;
}

double pose_jump(const Pose& a, const Pose& b) {
  const auto d = distance(a, b);
  return std::max(d.position, d.orientation);
}

}  // namespace

TEST_CASE("IC keeps the captured hand-to-EE relation") {
  std::mt19937_64 rng(41);
  const Pose base{Rotation::about_z(1.1), Vector3(0.4, -0.9, 0.0)};
  const Pose ee{test::random_rotation(rng), Vector3(0.3, 0.1, 0.5)};
  const HandFrame h0 = sample(R, test::random_pose(rng), 0.0);
  const ArmAnchor anchor{base, ee};
  const auto b = ic_init(h0, std::span(&anchor, 1), 0.0);
  REQUIRE(b.size() == 1);
  CHECK(pose_jump(ic_update(b[0], h0, base), ee) < 1e-15);

  const HandFrame h1 = sample(R, test::random_pose(rng), 0.01);
  const Pose out = ic_update(b[0], h1, base);
  // Orientation: R_hand^T R_ee constant (in the base frame).
  const Rotation rel0 = (base.rotation.inverse() * h0.pose.rotation).inverse() * ee.rotation;
  const Rotation rel1 = (base.rotation.inverse() * h1.pose.rotation).inverse() * out.rotation;
  CHECK(rel0.angle_to(rel1) < 1e-12);
  // Translation: hand deltas reproduced in the base frame.
  const Vector3 dh = base.rotation.inverse() * (h1.pose.translation - h0.pose.translation);
  CHECK(((out.translation - ee.translation) - dh).norm() < 1e-12);
}

TEST_CASE("IC init rejects stale input") {
  const ArmAnchor anchor{Pose{}, Pose{}};
  CHECK_THROWS_AS(ic_init(sample(L, Pose{}, 0.0), std::span(&anchor, 1), 0.5), StaleInputError);
  CHECK_NOTHROW(ic_init(sample(L, Pose{}, 0.0), std::span(&anchor, 1), 0.2));
}

TEST_CASE("CC virtual frame sits at the centroid with hand orientation") {
  std::mt19937_64 rng(42);
  const HandFrame h = sample(R, test::random_pose(rng), 0.0);
  const std::vector<CcAnchor> anchors{{1, Pose{Rotation{}, Vector3(0.0, 0.0, 0.0)}},
                                      {2, Pose{Rotation{}, Vector3(0.6, 0.0, 0.0)}},
                                      {3, Pose{Rotation{}, Vector3(0.3, 0.9, 0.3)}}};
  const CcBinding b = cc_init(h, anchors, {}, 0.0);
  const Pose v = virtual_frame(b, h);
  CHECK((v.translation - Vector3(0.3, 0.3, 0.1)).norm() < 1e-15);
  CHECK(v.rotation.angle_to(h.pose.rotation) < 1e-15);
  std::map<RobotId, Pose> bases{{1, Pose{}}, {2, Pose{}}, {3, Pose{}}};
  const auto out = cc_update(b, h, bases);
  for (const auto& a : anchors) CHECK(pose_jump(out.at(a.id), a.ee_world) < 1e-15);
  CHECK_THROWS_AS(cc_init(h, std::span(anchors).first(1), {}, 0.0), ContractViolation);
}

TEST_CASE("closure scales every offset and saturates all-or-nothing") {
  const HandFrame h = sample(R, Pose{}, 0.0);
  const std::vector<CcAnchor> anchors{{1, Pose::from_translation(Vector3(-0.2, 0, 0))},
                                      {2, Pose::from_translation(Vector3(0.5, 0, 0))}};
  CcBinding b = cc_init(h, anchors, {0.05, 1.0}, 0.0);
  // Offsets from the centroid (0.15): 0.35 and 0.35.
  CHECK(cc_closure_step(b, ClosureCommand::Increase, 0.5, 0.2));
  CHECK(b.alpha == doctest::Approx(1.1));
  CHECK(b.members[0].offset.norm() == doctest::Approx(0.385));
  CHECK(cc_closure_step(b, ClosureCommand::Neutral, 0.5, 0.2));
  CHECK(b.alpha == doctest::Approx(1.1));

  // Drive toward l_min = 0.05: alpha >= 1/7.
  int committed = 0;
  while (cc_closure_step(b, ClosureCommand::Decrease, 0.01, 0.2)) ++committed;
  CHECK(committed > 0);
  const double alpha_last = b.alpha;
  CHECK(b.members[0].offset.norm() >= 0.05);
  CHECK_FALSE(cc_closure_step(b, ClosureCommand::Decrease, 0.01, 0.2));
  CHECK(b.alpha == alpha_last);
  CHECK(cc_closure_step(b, ClosureCommand::Increase, 0.01, 0.2));
}

TEST_CASE("closure rejection uses the member closest to the bound") {
  const HandFrame h = sample(R, Pose{}, 0.0);
  // Asymmetric: centroid at 0.1, offsets 0.7 and 0.35 and 0.35.
  const std::vector<CcAnchor> anchors{{1, Pose::from_translation(Vector3(0.8, 0, 0))},
                                      {2, Pose::from_translation(Vector3(-0.25, 0, 0))},
                                      {3, Pose::from_translation(Vector3(-0.25, 0, 0))}};
  CcBinding b = cc_init(h, anchors, {0.05, 1.0}, 0.0);
  while (cc_closure_step(b, ClosureCommand::Increase, 0.01, 0.5)) {
  }
  for (const auto& m : b.members) CHECK(m.offset.norm() <= 1.0);
  CHECK(b.members[0].offset.norm() > 0.99);
  CHECK(b.members[1].offset.norm() == doctest::Approx(b.members[0].offset.norm() / 2.0));
}

TEST_CASE("relink keeps alpha and the virtual frame") {
  std::mt19937_64 rng(43);
  const HandFrame h0 = sample(R, test::random_pose(rng), 0.0);
  const std::vector<CcAnchor> anchors{{1, Pose::from_translation(Vector3(-0.2, 0, 0))},
                                      {2, Pose::from_translation(Vector3(0.5, 0.1, 0))}};
  CcBinding b = cc_init(h0, anchors, {}, 0.0);
  cc_closure_step(b, ClosureCommand::Increase, 0.5, 0.2);
  const Pose v = virtual_frame(b, h0);
  const HandFrame h1 = sample(R, test::random_pose(rng), 1.0);
  const CcBinding r = cc_relink(b, v, h1);
  CHECK(r.alpha == b.alpha);
  CHECK(pose_jump(virtual_frame(r, h1), v) < 1e-14);
}

TEST_CASE("freeze and unfreeze reproduce the frozen poses") {
  std::mt19937_64 rng(44);
  const auto bases = four_bases();
  auto refs = initial_refs();
  ControlGroup g{{1, 3}, L, Modality::Independent, true, 5};
  const FreezeSnapshot snap = freeze(g, refs, std::nullopt, std::nullopt);
  CHECK(snap.desired.size() == 2);
  const HandFrame h = sample(L, test::random_pose(rng), 2.0);
  const ActiveBinding b = unfreeze(snap, h, bases, {}, 2.0);
  const auto& ic = std::get<std::vector<IcBinding>>(b);
  CHECK(pose_jump(ic_update(ic[0], h, bases.at(1)), refs.at(1).desired) < 1e-14);
  CHECK(pose_jump(ic_update(ic[1], h, bases.at(3)), refs.at(3).desired) < 1e-14);
  CHECK_THROWS_AS(unfreeze(snap, h, bases, {}, 3.0), StaleInputError);
}

TEST_CASE("engine: ungrouped robots hold their references") {
  ModalityEngine e(four_bases(), initial_refs());
  std::array<std::optional<ControlGroup>, 2> groups;
  std::array<std::optional<HandFrame>, 2> hands{sample(L, Pose{}, 0.0), std::nullopt};
  e.step(groups, hands, {}, 0.0, 1e-3);
  for (RobotId id = 1; id <= 4; ++id) {
    CHECK(pose_jump(e.reference(id).desired, initial_refs().at(id).desired) == 0.0);
  }
  CHECK_THROWS_AS(e.reference(9), ContractViolation);
}

TEST_CASE("engine: activation, transfer and modality switches are continuous") {
  std::mt19937_64 rng(45);
  ModalityEngine e(four_bases(), initial_refs());
  std::array<std::optional<ControlGroup>, 2> groups;
  std::array<std::optional<HandFrame>, 2> hands;
  double t = 0.0;
  Pose hl = test::random_pose(rng), hr = test::random_pose(rng);
  auto step = [&](std::array<ClosureCommand, 2> closure = {}) {
    t += 1e-3;
    hl.translation += Vector3(1e-4, 0.0, 2e-4);
    hr = hr * Pose{Rotation::about_y(1e-3), Vector3(0.0, 1e-4, 0.0)};
    hands = {sample(L, hl, t, 0.3), sample(R, hr, t, 0.9)};
    const auto before = e.references();
    e.step(groups, hands, closure, t, 1e-3);
    double worst = 0.0;
    for (const auto& [id, ref] : before) worst = std::max(worst, pose_jump(ref.desired, e.reference(id).desired));
    return worst;
  };
  step();
  groups[1] = ControlGroup{{1, 2}, R, Modality::Independent, false, 1};
  CHECK(step() < 1e-9);
  for (int i = 0; i < 20; ++i) step();

  auto switch_jump = [&](auto mutate) {
    // Offsets are re-captured against the current hand on a switch tick, so
    // desired poses must not move at all on that tick.
    mutate();
    return step();
  };
  CHECK(switch_jump([&] { groups[1]->modality = Modality::Coordinated; groups[1]->generation = 2; }) < 1e-9);
  for (int i = 0; i < 20; ++i) step({ClosureCommand::Neutral, ClosureCommand::Increase});
  CHECK(e.status(R).alpha > 1.0);
  CHECK(switch_jump([&] {
    groups[0] = groups[1];
    groups[0]->owner = L;
    groups[0]->generation = 3;
    groups[1].reset();
  }) < 1e-9);
  CHECK(switch_jump([&] { groups[0]->frozen = true; }) < 1e-9);
  for (int i = 0; i < 10; ++i) CHECK(step() == 0.0);
  CHECK(e.status(L).frozen);
  const double alpha_frozen = e.status(L).alpha;
  CHECK(switch_jump([&] { groups[0]->frozen = false; }) < 1e-9);
  CHECK(e.status(L).alpha == alpha_frozen);
}

TEST_CASE("engine: stale hand holds and relinks without a jump") {
  ModalityEngine e(four_bases(), initial_refs());
  std::array<std::optional<ControlGroup>, 2> groups;
  groups[0] = ControlGroup{{2, 3}, L, Modality::Coordinated, false, 1};
  Pose h{Rotation{}, Vector3(0.0, 0.0, 1.0)};
  std::array<std::optional<HandFrame>, 2> hands{sample(L, h, 0.0), std::nullopt};
  e.step(groups, hands, {}, 0.0, 1e-3);
  const auto held = e.references();
  // No new samples for 0.5 s.
  for (int k = 1; k <= 500; ++k) e.step(groups, hands, {}, k * 1e-3, 1e-3);
  CHECK(e.status(L).stale);
  for (const auto& [id, ref] : held) CHECK(pose_jump(ref.desired, e.reference(id).desired) == 0.0);
  // The hand comes back somewhere else: poses do not jump.
  h.translation += Vector3(0.3, -0.2, 0.1);
  hands[0] = sample(L, h, 0.501);
  e.step(groups, hands, {}, 0.501, 1e-3);
  CHECK_FALSE(e.status(L).stale);
  for (const auto& [id, ref] : held) CHECK(pose_jump(ref.desired, e.reference(id).desired) < 1e-12);
}

TEST_CASE("engine: stiffness follows the owning hand") {
  ModalityEngine e(four_bases(), initial_refs());
  std::array<std::optional<ControlGroup>, 2> groups;
  groups[1] = ControlGroup{{4}, R, Modality::Independent, false, 1};
  std::array<std::optional<HandFrame>, 2> hands{std::nullopt, sample(R, Pose{}, 0.0, 1.0)};
  e.step(groups, hands, {}, 0.0, 1e-3);
  CHECK(e.reference(4).stiffness == StiffnessCommand{600.0, 60.0});
  CHECK(e.reference(1).stiffness == StiffnessCommand{});
}
