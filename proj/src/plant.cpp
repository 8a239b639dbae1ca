#include "multiarm/plant.hpp"

#include <string>

#include "multiarm/errors.hpp"

namespace multiarm {

Plant::Plant(PlantConfig config) : config_(std::move(config)) {
  if (!(config_.dt > 0.0)) throw ConfigError("plant: dt must be positive");
  for (const auto& a : config_.arms) {
    a.model.validate();
    const auto n = static_cast<Eigen::Index>(a.model.joint_count());
    if (a.inertia.size() != n || !(a.inertia.array() > 0.0).all()) {
      throw ConfigError("plant: inertia must be positive definite");
    }
    if (a.link_masses.size() != a.model.joint_count()) {
      throw ConfigError("plant: need one link mass per joint");
    }
  }
}

VectorX Plant::gravity_torque(std::size_t arm, const VectorX& q) const {
  const ArmPlant& a = config_.arms.at(arm);
  const auto n = static_cast<Eigen::Index>(a.model.joint_count());
  VectorX tau = VectorX::Zero(n);
  if (config_.gravity.isZero(0.0)) return tau;
  const Vector3 g_base = a.model.base_pose.rotation.inverse() * config_.gravity;
  for (std::size_t link = 0; link < a.link_masses.size(); ++link) {
    if (a.link_masses[link] == 0.0) continue;
    const auto Jp = point_jacobian(a.model, q, link, Vector3::Zero());
    tau -= Jp.transpose() * (a.link_masses[link] * g_base);
  }
  return tau;
}

DynamicsTerms Plant::dynamics(std::size_t arm, const VectorX& q, const VectorX& qdot) const {
  const ArmPlant& a = config_.arms.at(arm);
  DynamicsTerms d;
  d.M = a.inertia.asDiagonal();
  d.coriolis = VectorX::Zero(qdot.size());
  d.gravity = gravity_torque(arm, q);
  return d;
}

SimState Plant::step(const SimState& state, std::span<const VectorX> torques,
                     std::span<const Twist6> external) const {
  if (state.arms.size() != config_.arms.size() || torques.size() != config_.arms.size() ||
      external.size() != config_.arms.size()) {
    throw ContractViolation("plant step: one torque and one wrench per arm required");
  }
  SimState next = state;
  for (std::size_t i = 0; i < config_.arms.size(); ++i) {
    const ArmPlant& a = config_.arms[i];
    const auto n = static_cast<Eigen::Index>(a.model.joint_count());
    if (torques[i].size() != n) throw ContractViolation("plant step: torque dimension mismatch");
    if (!torques[i].allFinite()) {
      throw SimulationFault("plant step: non-finite torque on arm " + std::to_string(i + 1));
    }
    const ArmState& s = state.arms[i];
    const DynamicsTerms d = dynamics(i, s.q, s.qdot);
    VectorX drive = torques[i] - d.coriolis - d.gravity;
    const Twist6& w = external[i];
    if (!w.linear.isZero(0.0) || !w.angular.isZero(0.0)) {
      const Rotation to_base = a.model.base_pose.rotation.inverse();
      const Twist6 w_base{to_base * w.linear, to_base * w.angular};
      drive += jacobian(a.model, s.q).transpose() * w_base.vector();
    }
    const VectorX qddot = drive.cwiseQuotient(a.inertia);
    ArmState& out = next.arms[i];
    out.qdot = s.qdot + qddot * config_.dt;
    out.q = s.q + out.qdot * config_.dt;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (out.q[j] < a.model.lower_limits[j]) {
        out.q[j] = a.model.lower_limits[j];
        out.qdot[j] = 0.0;
      } else if (out.q[j] > a.model.upper_limits[j]) {
        out.q[j] = a.model.upper_limits[j];
        out.qdot[j] = 0.0;
      }
    }
    if (!out.q.allFinite() || !out.qdot.allFinite()) {
      throw SimulationFault("plant step: state diverged on arm " + std::to_string(i + 1));
    }
  }
  next.clock = state.clock + config_.dt;
  return next;
}

}  // namespace multiarm
