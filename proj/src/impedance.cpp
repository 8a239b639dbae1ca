#include "multiarm/impedance.hpp"

#include <algorithm>
#include <cmath>

#include "multiarm/errors.hpp"

namespace multiarm {

StiffnessCommand map_stiffness(double s_a, const StiffnessBounds& bounds) {
  if (std::isnan(s_a)) throw ValidationError("map_stiffness: stiffness index is NaN");
  const double s = std::clamp(s_a, 0.0, 1.0);
  StiffnessCommand cmd{bounds.k_l_min + (bounds.k_l_max - bounds.k_l_min) * s,
                       bounds.k_w_min + (bounds.k_w_max - bounds.k_w_min) * s};
  cmd.k_l = std::clamp(cmd.k_l, bounds.k_l_min, bounds.k_l_max);
  cmd.k_w = std::clamp(cmd.k_w, bounds.k_w_min, bounds.k_w_max);
  return cmd;
}

ImpedanceGains build_gains(const StiffnessCommand& cmd, double xi, std::size_t joint_count,
                           const NullspaceParams& nullspace) {
  if (!(cmd.k_l >= 0.0) || !(cmd.k_w >= 0.0)) {
    throw ValidationError("build_gains: stiffness must be non-negative");
  }
  if (!(xi >= 0.0)) throw ValidationError("build_gains: damping factor must be non-negative");
  const auto n = static_cast<Eigen::Index>(joint_count);
  ImpedanceGains g;
  g.K.diagonal() << cmd.k_l, cmd.k_l, cmd.k_l, cmd.k_w, cmd.k_w, cmd.k_w;
  g.D.diagonal() = 2.0 * xi * g.K.diagonal().cwiseSqrt();
  g.Kq = MatrixX::Identity(n, n) * nullspace.stiffness;
  g.Dq = MatrixX::Identity(n, n) * (2.0 * xi * std::sqrt(nullspace.stiffness));
  if (nullspace.target.size() == 0) {
    g.q_d = VectorX::Zero(n);
  } else if (nullspace.target.size() == n) {
    g.q_d = nullspace.target;
  } else {
    throw ContractViolation("build_gains: null-space target has wrong dimension");
  }
  return g;
}

TorqueResult compute_torque(const ArmModel& model, const VectorX& q, const VectorX& qdot,
                            const VectorX& qddot_ref, const Pose& desired,
                            const ImpedanceGains& gains, const DynamicsTerms& dyn,
                            double pinv_damping) {
  const auto n = static_cast<Eigen::Index>(model.joint_count());
  if (q.size() != n || qdot.size() != n || qddot_ref.size() != n || gains.Kq.rows() != n ||
      gains.Dq.rows() != n || gains.q_d.size() != n || dyn.M.rows() != n || dyn.M.cols() != n ||
      dyn.coriolis.size() != n || dyn.gravity.size() != n) {
    throw ContractViolation("compute_torque: inconsistent dimensions");
  }

  const Matrix6X J = jacobian(model, q);
  const Pose actual = fk(model, q);

  TorqueResult out;
  out.error = pose_error(desired, actual);
  const Vector6 e = out.error.vector();
  const Vector6 edot = -(J * qdot);
  const MatrixX N = nullspace_projector(J, singularity_damping(J, pinv_damping));

  VectorX tau = J.transpose() * (gains.K * e + gains.D * edot) +
                N * (gains.Kq * (gains.q_d - q) - gains.Dq * qdot) + dyn.M * qddot_ref +
                dyn.coriolis + dyn.gravity;
  if (!tau.allFinite()) throw SimulationFault("compute_torque: non-finite torque");

  for (Eigen::Index i = 0; i < n; ++i) {
    const double limit = model.torque_limits[i];
    if (std::abs(tau[i]) > limit) {
      tau[i] = std::copysign(limit, tau[i]);
      out.saturated = true;
    }
  }
  out.tau = std::move(tau);
  return out;
}

ImpedanceController::ImpedanceController(ArmModel model, double pinv_damping)
    : model_(std::move(model)), pinv_damping_(pinv_damping) {
  set_gains(build_gains(StiffnessCommand{}, 1.0, model_.joint_count()));
}

void ImpedanceController::set_gains(ImpedanceGains gains) {
  auto next = std::make_shared<const ImpedanceGains>(std::move(gains));
  std::lock_guard lock(gains_mutex_);
  gains_ = std::move(next);
}

std::shared_ptr<const ImpedanceGains> ImpedanceController::gains() const {
  std::lock_guard lock(gains_mutex_);
  return gains_;
}

TorqueResult ImpedanceController::update(const VectorX& q, const VectorX& qdot,
                                         const Pose& desired, const DynamicsTerms& dyn) {
  const auto n = static_cast<Eigen::Index>(model_.joint_count());
  if (!faulted_) {
    try {
      return compute_torque(model_, q, qdot, VectorX::Zero(n), desired, *gains(), dyn,
                            pinv_damping_);
    } catch (const SimulationFault&) {
      faulted_ = true;
    }
  }
  TorqueResult hold;
  hold.tau = dyn.coriolis + dyn.gravity;
  if (!hold.tau.allFinite()) hold.tau = VectorX::Zero(n);
  return hold;
}

}  // namespace multiarm
