#include "multiarm/se3.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace multiarm {

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(q) {
  const double n = q_.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument("rotation: quaternion must be finite and non-zero");
  }
  // Leave already-unit quaternions bit-identical so serialization round-trips.
  if (std::abs(n - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) q_.coeffs() /= n;
}

Rotation Rotation::from_matrix(const Matrix3& m) {
  if (!m.allFinite()) throw std::invalid_argument("rotation: non-finite matrix");
  const double residual = (m * m.transpose() - Matrix3::Identity()).norm();
  if (residual > 1e-6 || std::abs(m.determinant() - 1.0) > 1e-6) {
    throw std::invalid_argument("rotation: matrix is not a proper rotation");
  }
  return Rotation(Eigen::Quaterniond(m));
}

Rotation Rotation::from_axis_angle(const Vector3& rotation_vector) {
  const double angle = rotation_vector.norm();
  if (angle < 1e-300) return {};
  return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(angle, rotation_vector / angle)));
}

Rotation Rotation::about_x(double angle) { return from_axis_angle(Vector3::UnitX() * angle); }
Rotation Rotation::about_y(double angle) { return from_axis_angle(Vector3::UnitY() * angle); }
Rotation Rotation::about_z(double angle) { return from_axis_angle(Vector3::UnitZ() * angle); }

Vector3 Rotation::log() const {
  // Work on the w >= 0 hemisphere so the angle lands in [0, pi].
  double w = q_.w();
  Vector3 v = q_.vec();
  if (w < 0.0) {
    w = -w;
    v = -v;
  }
  const double s = v.norm();
  if (s < 1e-300) return Vector3::Zero();
  const double angle = 2.0 * std::atan2(s, w);
  Vector3 axis = v / s;
  if (w < 1e-12) {  // at pi both signs are valid; pick one deterministically
    Eigen::Index largest = 0;
    axis.cwiseAbs().maxCoeff(&largest);
    if (axis[largest] < 0.0) axis = -axis;
  }
  return axis * angle;
}

double Rotation::angle_to(const Rotation& other) const {
  // atan2 form keeps resolution for angles far below sqrt(machine epsilon).
  const Eigen::Quaterniond rel = q_.conjugate() * other.q_;
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

Pose Pose::from_matrix(const Matrix4& h) {
  return {Rotation::from_matrix(h.topLeftCorner<3, 3>()), h.topRightCorner<3, 1>()};
}

Matrix4 Pose::matrix() const {
  Matrix4 h = Matrix4::Identity();
  h.topLeftCorner<3, 3>() = rotation.matrix();
  h.topRightCorner<3, 1>() = translation;
  return h;
}

Twist6 Twist6::from_vector(const Vector6& v) { return {v.head<3>(), v.tail<3>()}; }

Vector6 Twist6::vector() const {
  Vector6 v;
  v << linear, angular;
  return v;
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose inverse(const Pose& p) {
  const Rotation r_inv = p.rotation.inverse();
  return {r_inv, -(r_inv * p.translation)};
}

Twist6 pose_error(const Pose& desired, const Pose& actual) {
  const Rotation r_err = desired.rotation * actual.rotation.inverse();
  return {desired.translation - actual.translation, r_err.log()};
}

PoseDistance distance(const Pose& a, const Pose& b) {
  return {(a.translation - b.translation).norm(), a.rotation.angle_to(b.rotation)};
}

}  // namespace multiarm
