#pragma once

#include <vector>

#include <Eigen/Core>

#include "multiarm/se3.hpp"

namespace multiarm {

using VectorX = Eigen::VectorXd;
using MatrixX = Eigen::MatrixXd;
using Matrix6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;
using MatrixX6 = Eigen::Matrix<double, Eigen::Dynamic, 6>;

inline constexpr double kDefaultPinvDamping = 1e-3;
/// Smallest singular value below which damping is switched on.
inline constexpr double kSingularityThreshold = 0.02;

/// Modified (Craig) DH row: RotX(alpha) * TransX(a) * RotZ(q + theta_offset) * TransZ(d).
struct DhRow {
  double a = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double theta_offset = 0.0;
};

/// Revolute serial chain. `flange` is the fixed transform from the last joint
/// frame to the end-effector; `base_pose` places the chain in the world.
struct ArmModel {
  std::vector<DhRow> joints;
  Pose flange;
  VectorX lower_limits;
  VectorX upper_limits;
  VectorX torque_limits;
  Pose base_pose;

  std::size_t joint_count() const { return joints.size(); }
  /// Throws ConfigError when limits are missing, unordered or non-finite.
  void validate() const;
  /// Sum of |a|, |d| over joints and flange translation. Upper bound on reach.
  double reach() const;
};

/// Panda-like 7-DoF chain used as a stand-in; the geometry is public Franka
/// data but inertial data is not modelled. Joint limits are symmetric
/// +-2.9 rad so that the zero null-space target lies inside them.
ArmModel default_arm_model();

/// Planar chain in the x-y plane (all axes parallel to z) with the given link
/// lengths; the last length becomes the flange offset.
ArmModel planar_chain(const std::vector<double>& link_lengths);

/// Joint frames in the base frame, one per joint (frame i is attached after
/// joint i's rotation). The end-effector is frames.back() * flange.
std::vector<Pose> joint_frames(const ArmModel& model, const VectorX& q);

Pose fk(const ArmModel& model, const VectorX& q);

/// Geometric Jacobian in the base frame: rows 0-2 linear velocity of the
/// end-effector origin, rows 3-5 angular velocity.
Matrix6X jacobian(const ArmModel& model, const VectorX& q);

/// Position Jacobian (3 x n) of a point rigidly attached to joint frame
/// `link`, given in that frame's coordinates.
Eigen::Matrix<double, 3, Eigen::Dynamic> point_jacobian(const ArmModel& model, const VectorX& q,
                                                        std::size_t link,
                                                        const Vector3& point_in_link);

/// Damped least-squares pseudo-inverse J^T (J J^T + lambda^2 I)^-1. With
/// lambda == 0 the exact Moore-Penrose inverse is returned, including for
/// rank-deficient J.
MatrixX6 pinv(const Matrix6X& J, double lambda);

/// Damping that vanishes away from singularities:
/// lambda_max * sqrt(1 - (sigma_min / threshold)^2) when sigma_min < threshold, else 0.
double singularity_damping(const Matrix6X& J, double lambda_max,
                           double threshold = kSingularityThreshold);

/// N = I - J^T pinv(J, lambda)^T.
MatrixX nullspace_projector(const Matrix6X& J, double lambda);

}  // namespace multiarm
