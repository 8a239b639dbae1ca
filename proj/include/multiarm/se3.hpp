#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace multiarm {

using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;
using Matrix4 = Eigen::Matrix4d;

/// Proper rotation stored as a unit quaternion. The matrix view is computed
/// on demand; constructors renormalize inputs that are off unit norm so long composition
/// chains do not drift off SO(3).
class Rotation {
 public:
  Rotation() = default;
  explicit Rotation(const Eigen::Quaterniond& q);
  /// Throws std::invalid_argument if `m` is not orthonormal with det +1
  /// (tolerance 1e-6 on the Frobenius residual).
  static Rotation from_matrix(const Matrix3& m);
  static Rotation from_axis_angle(const Vector3& rotation_vector);
  static Rotation about_x(double angle);
  static Rotation about_y(double angle);
  static Rotation about_z(double angle);
  static Rotation identity() { return {}; }

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Matrix3 matrix() const { return q_.toRotationMatrix(); }
  /// Rotation vector (axis * angle), angle in [0, pi]. At exactly pi the axis
  /// sign is chosen so its largest-magnitude component is positive.
  Vector3 log() const;

  Rotation inverse() const { return Rotation(q_.conjugate()); }
  Rotation operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }
  Vector3 operator*(const Vector3& v) const { return q_ * v; }

  /// Geodesic angle to `other` in [0, pi].
  double angle_to(const Rotation& other) const;

 private:
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

/// Rigid transform H = [R l; 0 1].
struct Pose {
  Rotation rotation;
  Vector3 translation = Vector3::Zero();

  static Pose identity() { return {}; }
  static Pose from_translation(const Vector3& t) { return {Rotation{}, t}; }
  static Pose from_rotation(const Rotation& r) { return {r, Vector3::Zero()}; }
  static Pose from_matrix(const Matrix4& h);

  Matrix4 matrix() const;
  Vector3 operator*(const Vector3& point) const { return rotation * point + translation; }
};

/// Stacked linear/angular 6-vector (error, velocity or wrench).
struct Twist6 {
  Vector3 linear = Vector3::Zero();
  Vector3 angular = Vector3::Zero();

  static Twist6 from_vector(const Vector6& v);
  Vector6 vector() const;
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);
inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

/// Cartesian error from `actual` to `desired`, both in the same base frame:
/// linear = l_des - l_act, angular = log(R_des * R_act^T) in the base frame.
Twist6 pose_error(const Pose& desired, const Pose& actual);

/// Translation distance and geodesic rotation angle between two poses.
struct PoseDistance {
  double position = 0.0;
  double orientation = 0.0;
};
PoseDistance distance(const Pose& a, const Pose& b);

}  // namespace multiarm
