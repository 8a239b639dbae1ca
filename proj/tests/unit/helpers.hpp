#pragma once

#include <random>

#include "multiarm/kinematics.hpp"
#include "multiarm/se3.hpp"

namespace multiarm::test {

inline Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return Rotation(q);
}

inline Vector3 random_vector(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline Pose random_pose(std::mt19937_64& rng, double scale = 1.0) {
  return {random_rotation(rng), random_vector(rng, scale)};
}

/// Uniform inside the joint limits, shrunk by `margin` rad.
inline VectorX random_configuration(const ArmModel& m, std::mt19937_64& rng, double margin = 0.3) {
  VectorX q(static_cast<Eigen::Index>(m.joint_count()));
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    std::uniform_real_distribution<double> u(m.lower_limits[i] + margin, m.upper_limits[i] - margin);
    q[i] = u(rng);
  }
  return q;
}

}  // namespace multiarm::test
