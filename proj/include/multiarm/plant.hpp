#pragma once

#include <span>
#include <vector>

#include "multiarm/impedance.hpp"
#include "multiarm/kinematics.hpp"

namespace multiarm {

/// Rigid-body stand-in for one arm: constant diagonal joint inertia, no
/// Coriolis term, gravity from point masses at the joint frame origins.
struct ArmPlant {
  ArmModel model;
  VectorX inertia;
  std::vector<double> link_masses;
};

struct PlantConfig {
  std::vector<ArmPlant> arms;
  Vector3 gravity = Vector3::Zero();  // world frame [m/s^2]
  double dt = 1e-3;
};

struct ArmState {
  VectorX q;
  VectorX qdot;
};

struct SimState {
  std::vector<ArmState> arms;
  double clock = 0.0;
};

class Plant {
 public:
  explicit Plant(PlantConfig config);

  /// Torque needed to hold the arm static against gravity.
  VectorX gravity_torque(std::size_t arm, const VectorX& q) const;
  DynamicsTerms dynamics(std::size_t arm, const VectorX& q, const VectorX& qdot) const;

  /// Semi-implicit Euler: qddot = M^-1 (tau + J^T F_ext - C - g), then qdot,
  /// then q. Joints hitting a limit are clamped and stopped. `external` holds
  /// end-effector wrenches in the world frame. Throws SimulationFault on
  /// non-finite torque; the input state is untouched.
  SimState step(const SimState& state, std::span<const VectorX> torques,
                std::span<const Twist6> external) const;

  const PlantConfig& config() const { return config_; }

 private:
  PlantConfig config_;
};

}  // namespace multiarm
