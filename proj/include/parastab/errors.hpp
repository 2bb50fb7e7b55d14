#pragma once

#include <stdexcept>
#include <string>

namespace parastab {

/// Actuator window leaves the domain, or a mesh/geometry precondition fails.
class GeometryError : public std::runtime_error {
 public:
  explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid or inconsistent configuration values.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A documented operation precondition does not hold.
class PreconditionError : public std::runtime_error {
 public:
  explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

/// An iterative procedure exceeded its budget without meeting its target.
class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Closed loop failed to decay while estimating feedback constants.
class StabilizationError : public std::runtime_error {
 public:
  explicit StabilizationError(const std::string& what) : std::runtime_error(what) {}
};

/// Optimizer produced non-finite values.
class OptimizerError : public std::runtime_error {
 public:
  explicit OptimizerError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data (files, trajectories).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace parastab
