#pragma once

#include <memory>
#include <mutex>

#include "multiarm/kinematics.hpp"
#include "multiarm/se3.hpp"

namespace multiarm {

using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Saturation bounds for the tele-impedance stiffness map.
struct StiffnessBounds {
  double k_l_min = 100.0;  // N/m
  double k_l_max = 600.0;
  double k_w_min = 10.0;  // Nm/rad
  double k_w_max = 60.0;
};

struct StiffnessCommand {
  double k_l = 100.0;
  double k_w = 10.0;

  bool operator==(const StiffnessCommand&) const = default;
};

/// Affine map of the stiffness index onto [k_min, k_max] for both channels.
/// s_a outside [0, 1] is clamped; NaN throws ValidationError.
StiffnessCommand map_stiffness(double s_a, const StiffnessBounds& bounds = {});

struct NullspaceParams {
  double stiffness = 5.0;  // Nm/rad, isotropic
  VectorX target;          // empty means zero
};

struct ImpedanceGains {
  Matrix6 K = Matrix6::Zero();
  Matrix6 D = Matrix6::Zero();
  MatrixX Kq;
  MatrixX Dq;
  VectorX q_d;
};

/// K = blockdiag(k_l I3, k_w I3); D = 2 xi sqrt(K) on the diagonal; the same
/// relation gives Dq from Kq = stiffness * I.
ImpedanceGains build_gains(const StiffnessCommand& cmd, double xi, std::size_t joint_count,
                           const NullspaceParams& nullspace = {});

struct DynamicsTerms {
  MatrixX M;
  VectorX coriolis;  // C(q, qdot) qdot
  VectorX gravity;
};

struct TorqueResult {
  VectorX tau;
  Twist6 error;
  bool saturated = false;
};

/// tau = J^T (K e + D edot) + N (Kq (q_d - q) - Dq qdot) + M qddot_ref + C qdot + g,
/// with e = pose_error(desired, fk(q)) and edot = -J qdot. N uses an exact
/// pseudo-inverse unless the arm is near a singularity, where damping ramps up
/// to `pinv_damping`. The result is clamped to the model's torque limits.
/// Throws ContractViolation on dimension mismatch and SimulationFault if any
/// intermediate is non-finite.
TorqueResult compute_torque(const ArmModel& model, const VectorX& q, const VectorX& qdot,
                            const VectorX& qddot_ref, const Pose& desired,
                            const ImpedanceGains& gains, const DynamicsTerms& dyn,
                            double pinv_damping = kDefaultPinvDamping);

/// Per-arm controller. The control loop is the single writer of the fault
/// latch; gains can be replaced from another thread between ticks.
class ImpedanceController {
 public:
  ImpedanceController(ArmModel model, double pinv_damping = kDefaultPinvDamping);

  void set_gains(ImpedanceGains gains);
  std::shared_ptr<const ImpedanceGains> gains() const;

  /// Returns zero torque plus gravity/Coriolis once faulted.
  TorqueResult update(const VectorX& q, const VectorX& qdot, const Pose& desired,
                      const DynamicsTerms& dyn);

  bool faulted() const { return faulted_; }
  void reset_fault() { faulted_ = false; }
  const ArmModel& model() const { return model_; }

 private:
  ArmModel model_;
  double pinv_damping_;
  mutable std::mutex gains_mutex_;
  std::shared_ptr<const ImpedanceGains> gains_;
  bool faulted_ = false;
};

}  // namespace multiarm
