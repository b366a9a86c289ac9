#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mblab/minimize.hpp"

using namespace mblab;

namespace {

MinimizeProblem bowl_problem(const std::vector<double>& center) {
  MinimizeProblem p;
  p.value = [center](const std::vector<double>& x) {
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += (x[i] - center[i]) * (x[i] - center[i]);
    return s;
  };
  p.gradient = [center](const std::vector<double>& x, std::vector<double>& g) {
    g.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * (x[i] - center[i]);
  };
  return p;
}

}  // namespace

TEST_CASE("quadratic bowl converges to the center") {
  std::vector<double> center = {1.0, -2.0, 0.5, 3.25};
  MinimizeProblem p = bowl_problem(center);
  MinimizeOptions o;
  o.residual_tol = 1e-12;
  o.step0 = 0.1;
  MinimizeResult r = minimize(p, {0, 0, 0, 0}, o);
  CHECK(r.converged);
  for (size_t i = 0; i < center.size(); ++i)
    CHECK(std::abs(r.x[i] - center[i]) <= 1e-10);
}

TEST_CASE("objective trace never increases") {
  // A stiff anisotropic quadratic plus a bounded wiggle.
  MinimizeProblem p;
  p.value = [](const std::vector<double>& x) {
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
      double w = 1.0 + 50.0 * i;
      s += 0.5 * w * x[i] * x[i] + 0.1 * std::sin(3.0 * x[i]);
    }
    return s;
  };
  p.gradient = [](const std::vector<double>& x, std::vector<double>& g) {
    g.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      double w = 1.0 + 50.0 * i;
      g[i] = w * x[i] + 0.3 * std::cos(3.0 * x[i]);
    }
  };
  MinimizeOptions o;
  o.residual_tol = 1e-8;
  o.step0 = 1e-3;
  MinimizeResult r = minimize(p, {2, -1, 1.5, 0.7, -0.3}, o);
  CHECK(r.converged);
  for (size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] <= r.trace[i - 1] + 1e-14);
}

TEST_CASE("doubling the iteration cap never increases the final objective") {
  MinimizeProblem p = bowl_problem({0.3, 0.3, 0.3});
  MinimizeOptions o;
  o.residual_tol = 0.0;  // unreachable: run out the iteration cap
  o.step0 = 1e-4;
  o.max_iters = 40;
  MinimizeResult a = minimize(p, {5, -5, 5}, o);
  o.max_iters = 80;
  MinimizeResult b = minimize(p, {5, -5, 5}, o);
  CHECK(b.value <= a.value + 1e-12);
}

TEST_CASE("box projection and frozen entries are honored") {
  MinimizeProblem p = bowl_problem({2.0, 2.0, 2.0});
  std::vector<double> lo = {0.0, 0.0, 0.0}, hi = {1.0, 1.0, 5.0};
  p.lower = &lo;
  p.upper = &hi;
  p.frozen = {0, 0, 1};
  MinimizeOptions o;
  o.residual_tol = 1e-10;
  o.step0 = 0.05;
  MinimizeResult r = minimize(p, {0.5, 0.2, 0.25}, o);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0));   // clipped at the bound
  CHECK(r.x[1] == doctest::Approx(1.0));
  CHECK(r.x[2] == 0.25);                   // frozen in place
}

TEST_CASE("metric scaling reproduces the residual stopping rule") {
  MinimizeProblem p = bowl_problem({1.0, 1.0});
  p.metric = {4.0, 0.25};
  MinimizeOptions o;
  o.residual_tol = 1e-9;
  o.step0 = 0.01;
  MinimizeResult r = minimize(p, {0, 0}, o);
  CHECK(r.converged);
  // residual_i = grad_i / metric_i must be below tol at the solution
  CHECK(std::abs(2 * (r.x[0] - 1.0) / 4.0) <= 1e-9);
  CHECK(std::abs(2 * (r.x[1] - 1.0) / 0.25) <= 1e-9);
}

TEST_CASE("seeded continuation reproduces the uninterrupted trajectory") {
  // A nonquadratic objective so the Barzilai-Borwein history matters.
  MinimizeProblem p;
  p.value = [](const std::vector<double>& x) {
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i)
      s += std::cosh(x[i] - 0.3 * static_cast<double>(i)) - 1.0;
    return s;
  };
  p.gradient = [](const std::vector<double>& x, std::vector<double>& g) {
    g.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) g[i] = std::sinh(x[i] - 0.3 * static_cast<double>(i));
  };
  MinimizeOptions o;
  o.residual_tol = 1e-13;
  o.step0 = 0.1;

  MinimizeResult straight = minimize(p, {2, 2, 2, 2}, o);

  MinimizeOptions burst = o;
  burst.budget = 3;
  MinimizeResult part = minimize(p, {2, 2, 2, 2}, burst);
  CHECK(part.hit_budget);
  MinimizeResult resumed = minimize(p, part.x, o, &part.seed);

  CHECK(resumed.converged);
  CHECK(resumed.iterations == straight.iterations);
  CHECK(std::abs(resumed.value - straight.value) <= 1e-10 * (1.0 + std::abs(straight.value)));
  for (size_t i = 0; i < straight.x.size(); ++i) CHECK(resumed.x[i] == straight.x[i]);
}

TEST_CASE("non-finite objectives raise a numerical error") {
  MinimizeProblem p;
  p.value = [](const std::vector<double>& x) { return std::log(x[0]); };
  p.gradient = [](const std::vector<double>& x, std::vector<double>& g) {
    g.assign(x.size(), 1.0 / x[0]);
  };
  MinimizeOptions o;
  CHECK_THROWS_AS(minimize(p, {-1.0}, o), NumericalError);
}
