#pragma once

#include <stdexcept>
#include <string>

namespace mblab {

/// Invalid configuration, unknown keys, or ill-posed problem setup.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Mismatched grids or array shapes.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Tile or node index outside the strip.
struct RangeError : std::out_of_range {
  explicit RangeError(const std::string& what) : std::out_of_range(what) {}
};

/// Objective or gradient became non-finite.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Constraints could not be met at any penalty weight.
struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

/// Iteration limit hit before the stopping rule; carries the best value seen.
struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& what, double best_value, long iterations)
      : std::runtime_error(what), best_value(best_value), iterations(iterations) {}
  double best_value;
  long iterations;
};

}  // namespace mblab
