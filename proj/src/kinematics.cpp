#include "multiarm/kinematics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "multiarm/errors.hpp"

namespace multiarm {

namespace {

void check_dimension(const ArmModel& model, const VectorX& q, const char* what) {
  if (static_cast<std::size_t>(q.size()) != model.joint_count()) {
    throw ContractViolation(std::string(what) + ": joint vector has " + std::to_string(q.size()) +
                            " entries, model has " + std::to_string(model.joint_count()));
  }
}

Pose dh_transform(const DhRow& row, double q) {
  const Pose twist_link{Rotation::about_x(row.alpha), Vector3(row.a, 0.0, 0.0)};
  const Pose joint{Rotation::about_z(q + row.theta_offset), Vector3(0.0, 0.0, row.d)};
  return twist_link * joint;
}

}  // namespace

void ArmModel::validate() const {
  const auto n = static_cast<Eigen::Index>(joint_count());
  if (n < 1) throw ConfigError("arm model: at least one joint required");
  if (lower_limits.size() != n || upper_limits.size() != n || torque_limits.size() != n) {
    throw ConfigError("arm model: limit vectors must have one entry per joint");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(lower_limits[i]) || !std::isfinite(upper_limits[i]) ||
        !(lower_limits[i] < upper_limits[i])) {
      throw ConfigError("arm model: joint " + std::to_string(i + 1) +
                        " needs finite limits with lower < upper");
    }
    if (!(torque_limits[i] > 0.0)) {
      throw ConfigError("arm model: joint " + std::to_string(i + 1) +
                        " torque limit must be positive");
    }
  }
  for (const auto& row : joints) {
    if (!std::isfinite(row.a) || !std::isfinite(row.d) || !std::isfinite(row.alpha) ||
        !std::isfinite(row.theta_offset)) {
      throw ConfigError("arm model: non-finite DH parameter");
    }
  }
}

double ArmModel::reach() const {
  double sum = flange.translation.norm();
  for (const auto& row : joints) sum += std::abs(row.a) + std::abs(row.d);
  return sum;
}

ArmModel default_arm_model() {
  constexpr double half_pi = std::numbers::pi / 2.0;
  ArmModel m;
  m.joints = {
      {0.0, 0.333, 0.0, 0.0},        {0.0, 0.0, -half_pi, 0.0},     {0.0, 0.316, half_pi, 0.0},
      {0.0825, 0.0, half_pi, 0.0},   {-0.0825, 0.384, -half_pi, 0.0}, {0.0, 0.0, half_pi, 0.0},
      {0.088, 0.0, half_pi, 0.0},
  };
  m.flange = Pose::from_translation(Vector3(0.0, 0.0, 0.107));
  m.lower_limits = VectorX::Constant(7, -2.9);
  m.upper_limits = VectorX::Constant(7, 2.9);
  m.torque_limits.resize(7);
  m.torque_limits << 87.0, 87.0, 87.0, 87.0, 12.0, 12.0, 12.0;
  return m;
}

ArmModel planar_chain(const std::vector<double>& link_lengths) {
  if (link_lengths.empty()) throw ContractViolation("planar_chain: need at least one link");
  ArmModel m;
  const auto n = static_cast<Eigen::Index>(link_lengths.size());
  double previous = 0.0;
  for (double length : link_lengths) {
    m.joints.push_back({previous, 0.0, 0.0, 0.0});
    previous = length;
  }
  m.flange = Pose::from_translation(Vector3(previous, 0.0, 0.0));
  m.lower_limits = VectorX::Constant(n, -std::numbers::pi);
  m.upper_limits = VectorX::Constant(n, std::numbers::pi);
  m.torque_limits = VectorX::Constant(n, 100.0);
  return m;
}

std::vector<Pose> joint_frames(const ArmModel& model, const VectorX& q) {
  check_dimension(model, q, "joint_frames");
  std::vector<Pose> frames;
  frames.reserve(model.joint_count());
  Pose h;
  for (std::size_t i = 0; i < model.joint_count(); ++i) {
    h = h * dh_transform(model.joints[i], q[static_cast<Eigen::Index>(i)]);
    frames.push_back(h);
  }
  return frames;
}

Pose fk(const ArmModel& model, const VectorX& q) {
  return joint_frames(model, q).back() * model.flange;
}

Matrix6X jacobian(const ArmModel& model, const VectorX& q) {
  const auto frames = joint_frames(model, q);
  const Vector3 tip = (frames.back() * model.flange).translation;
  Matrix6X J(6, static_cast<Eigen::Index>(frames.size()));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Vector3 z = frames[i].rotation * Vector3::UnitZ();
    const auto col = static_cast<Eigen::Index>(i);
    J.block<3, 1>(0, col) = z.cross(tip - frames[i].translation);
    J.block<3, 1>(3, col) = z;
  }
  return J;
}

Eigen::Matrix<double, 3, Eigen::Dynamic> point_jacobian(const ArmModel& model, const VectorX& q,
                                                        std::size_t link,
                                                        const Vector3& point_in_link) {
  const auto frames = joint_frames(model, q);
  if (link >= frames.size()) throw ContractViolation("point_jacobian: link index out of range");
  const Vector3 p = frames[link] * point_in_link;
  Eigen::Matrix<double, 3, Eigen::Dynamic> Jp =
      Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, static_cast<Eigen::Index>(frames.size()));
  for (std::size_t i = 0; i <= link; ++i) {
    const Vector3 z = frames[i].rotation * Vector3::UnitZ();
    Jp.col(static_cast<Eigen::Index>(i)) = z.cross(p - frames[i].translation);
  }
  return Jp;
}

MatrixX6 pinv(const Matrix6X& J, double lambda) {
  if (!(lambda >= 0.0)) throw ContractViolation("pinv: damping must be non-negative");
  if (lambda == 0.0) {
    Eigen::CompleteOrthogonalDecomposition<MatrixX> cod(J);
    return cod.pseudoInverse();
  }
  const Eigen::Matrix<double, 6, 6> JJt =
      J * J.transpose() + lambda * lambda * Eigen::Matrix<double, 6, 6>::Identity();
  // (J J^T + l^2 I) is SPD for l > 0.
  return JJt.llt().solve(J).transpose();
}

double singularity_damping(const Matrix6X& J, double lambda_max, double threshold) {
  if (!(lambda_max >= 0.0) || !(threshold > 0.0)) {
    throw ContractViolation("singularity_damping: bad parameters");
  }
  const VectorX sv = Eigen::JacobiSVD<MatrixX>(J).singularValues();
  const double sigma_min = sv.size() > 0 ? sv[sv.size() - 1] : 0.0;
  if (sigma_min >= threshold) return 0.0;
  const double r = sigma_min / threshold;
  return lambda_max * std::sqrt(1.0 - r * r);
}

MatrixX nullspace_projector(const Matrix6X& J, double lambda) {
  const auto n = J.cols();
  return MatrixX::Identity(n, n) - J.transpose() * pinv(J, lambda).transpose();
}

}  // namespace multiarm
