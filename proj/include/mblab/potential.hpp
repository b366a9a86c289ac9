#pragma once

// Registered closed-form potential families F(x,u), 1-periodic in every
// argument, with the exact partial derivative F_u. Closed forms keep the
// derivative exact and the periodicity certifiable by sampling.

#include <cmath>
#include <map>
#include <string>

#include "errors.hpp"

namespace mblab {

struct Point {
  double x1 = 0.0;
  double x2 = 0.0;
  double x3 = 0.0;
};

namespace detail {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 6.28318530717958647692;

/// C2 bump on [0,1] vanishing to second order at both ends:
/// q(s) = 16 s^2 (1-s)^2, q(1/2) = 1, q''(0) = q''(1) = 32.
inline double bump_q(double s) {
  double a = s * (1.0 - s);
  return 16.0 * a * a;
}
inline double bump_dq(double s) { return 32.0 * s * (1.0 - s) * (1.0 - 2.0 * s); }

}  // namespace detail

/// Closed-form potential. Stateless after construction; safe for concurrent
/// evaluation.
class Potential {
 public:
  enum class Family { pendulum, pendulum_modulated, twowell_periodized, zero };

  Potential() = default;
  Potential(Family family, double epsilon, double offset)
      : family_(family), epsilon_(epsilon), offset_(offset) {
    if (family_ == Family::pendulum) epsilon_ = 0.0;
    if (epsilon_ < 0.0 || epsilon_ > 0.9)
      throw ConfigError("potential: epsilon must lie in [0, 0.9]");
  }

  Family family() const { return family_; }
  double epsilon() const { return epsilon_; }
  double offset() const { return offset_; }

  std::string name() const {
    switch (family_) {
      case Family::pendulum: return "pendulum";
      case Family::pendulum_modulated: return "pendulum_modulated";
      case Family::twowell_periodized: return "twowell_periodized";
      case Family::zero: return "zero";
    }
    return "?";
  }

  double value(double x1, double u) const {
    switch (family_) {
      case Family::pendulum:
      case Family::pendulum_modulated: {
        double s = std::sin(detail::kPi * u);
        return modulation(x1) * s * s + offset_;
      }
      case Family::twowell_periodized: {
        double s = u - std::floor(u);
        return modulation(x1) * detail::bump_q(s) + offset_;
      }
      case Family::zero:
        return offset_;
    }
    return 0.0;
  }

  double du(double x1, double u) const {
    switch (family_) {
      case Family::pendulum:
      case Family::pendulum_modulated:
        return modulation(x1) * detail::kPi * std::sin(detail::kTwoPi * u);
      case Family::twowell_periodized: {
        double s = u - std::floor(u);
        return modulation(x1) * detail::bump_dq(s);
      }
      case Family::zero:
        return 0.0;
    }
    return 0.0;
  }

  double value(const Point& x, double u) const { return value(x.x1, u); }
  double du(const Point& x, double u) const { return du(x.x1, u); }

 private:
  double modulation(double x1) const {
    return epsilon_ == 0.0 ? 1.0 : 1.0 + epsilon_ * std::cos(detail::kTwoPi * x1);
  }

  Family family_ = Family::pendulum_modulated;
  double epsilon_ = 0.3;
  double offset_ = 0.0;
};

/// Factory keyed by family name. Unknown names are a configuration error.
inline Potential make_potential(const std::string& family, double epsilon = 0.3,
                                double offset = 0.0) {
  if (family == "pendulum") return Potential(Potential::Family::pendulum, 0.0, offset);
  if (family == "pendulum_modulated")
    return Potential(Potential::Family::pendulum_modulated, epsilon, offset);
  if (family == "twowell_periodized")
    return Potential(Potential::Family::twowell_periodized, epsilon, offset);
  if (family == "zero") return Potential(Potential::Family::zero, 0.0, offset);
  throw ConfigError("unknown potential family: " + family);
}

}  // namespace mblab
