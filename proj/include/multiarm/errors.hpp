#pragma once

#include <stdexcept>
#include <string>

namespace multiarm {

/// Caller broke a documented precondition (dimension mismatch, unknown id).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input value rejected on ingest (NaN stiffness index, bad quaternion).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Scenario/config file does not satisfy the schema.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hand stream too old to initialize a binding from.
class StaleInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite torque or state reached the plant.
class SimulationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace multiarm
