#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mblab/energy.hpp"

using namespace mblab;

namespace {

GridSpec strip1d(int lo, int hi, int N) {
  GridSpec g;
  g.dim = 1;
  g.tile_lo = lo;
  g.tile_hi = hi;
  g.points_per_unit = N;
  return g;
}

Field torus_field(int N, double (*f)(double)) {
  Field u(torus_grid(1, N));
  for (int k = 0; k < N; ++k) u.at(k) = f(static_cast<double>(k) / N);
  return u;
}

double sine_tenth(double x) { return std::sin(2 * M_PI * x) / 10.0; }

/// Fine-quadrature oracle for the 1-D cell energy of an analytic profile
/// (rectangle rule on a smooth periodic integrand converges spectrally).
double cell_oracle(double (*f)(double), const Potential& pot, int fine = 1 << 15) {
  double h = 1.0 / fine;
  double acc = 0.0;
  for (int k = 0; k < fine; ++k) {
    double x = k * h;
    double up = (f(x + h) - f(x)) / h;  // midpoint-exact to O(h^2), h tiny
    acc += 0.5 * up * up + pot.value(x, f(x));
  }
  return acc * h;
}

}  // namespace

TEST_CASE("cell energy: wells, constants, and the sine oracle") {
  Potential pen = make_potential("pendulum");
  Potential mod = make_potential("pendulum_modulated", 0.3);

  Field zero(torus_grid(1, 64), 0.0);
  CHECK(cell_energy(zero, mod) == doctest::Approx(0.0).epsilon(1e-15));

  Field half(torus_grid(1, 64), 0.5);
  CHECK(cell_energy(half, pen) == doctest::Approx(1.0).epsilon(1e-13));

  double oracle = cell_oracle(sine_tenth, pen);
  double e64 = cell_energy(torus_field(64, sine_tenth), pen) - oracle;
  double e128 = cell_energy(torus_field(128, sine_tenth), pen) - oracle;
  double h = 1.0 / 64;
  CHECK(std::abs(e64) <= 1.0 * h * h);
  CHECK(std::abs(e64 / e128) >= 3.0);  // refine-and-extrapolate: second order
  CHECK(std::abs(e64 / e128) <= 5.0);

  GridSpec strip = strip1d(0, 4, 64);
  Field not_periodic(strip, 0.0);
  CHECK_THROWS_AS(cell_energy(not_periodic, pen), ShapeError);
}

TEST_CASE("cell problem: default family has floor zero with constant minimizer") {
  Potential mod = make_potential("pendulum_modulated", 0.3);
  GridSpec strip = strip1d(-4, 4, 64);
  CellSolution cell = solve_cell_problem(mod, strip);
  CHECK(cell.converged);
  CHECK(std::abs(cell.energy) <= 1e-10);
  for (double v : cell.minimizer.values) CHECK(std::abs(v) <= 1e-8);

  // An additive shift of the potential shifts the floor, not the minimizer.
  Potential shifted = make_potential("pendulum", 0.0, 0.5);
  CellSolution cs = solve_cell_problem(shifted, strip);
  CHECK(cs.energy == doctest::Approx(0.5).epsilon(1e-10));
  for (double v : cs.minimizer.values) CHECK(std::abs(v) <= 1e-8);

  // The integer shift of a minimizer is a minimizer with equal energy.
  Field plus_one = cell.minimizer;
  for (double& v : plus_one.values) v += 1.0;
  CHECK(cell_energy(plus_one, mod) ==
        doctest::Approx(cell_energy(cell.minimizer, mod)).epsilon(1e-12));
}

TEST_CASE("tile energies: states cost nothing, the unit ramp costs one") {
  Potential pen = make_potential("pendulum");
  GridSpec g = strip1d(-2, 2, 64);
  Field v0 = Field::constant(g, 0.0);
  Field w0 = Field::constant(g, 1.0);
  for (int p = -2; p < 2; ++p) {
    CHECK(tile_energy(v0, pen, p, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(tile_energy(w0, pen, p, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
  }
  Field ramp(g);
  for (int k = 0; k < g.x1_nodes(); ++k) ramp.at(k) = g.x1_of(k);
  CHECK(tile_energy(ramp, pen, 0, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(tile_energy(ramp, pen, 2, 0.0), RangeError);
}

TEST_CASE("window sums: single tiles, flats, and nonnegativity") {
  Potential mod = make_potential("pendulum_modulated", 0.3);
  GridSpec g = strip1d(-4, 4, 16);
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> unif(0, 1);

  Field u(g);
  for (double& v : u.values) v = unif(rng);
  for (int p = -4; p < 4; ++p)
    CHECK(window_energy(u, mod, p, p, 0.0) == doctest::Approx(tile_energy(u, mod, p, 0.0)));

  Field v0 = Field::constant(g, 0.0);
  CHECK(window_energy(v0, mod, -4, 3, 0.0) == doctest::Approx(0.0).epsilon(1e-15));

  for (int trial = 0; trial < 10; ++trial) {
    Field r(g);
    for (double& v : r.values) v = unif(rng);
    CHECK(window_energy(r, mod, -4, 3, 0.0) >= -1e-10);
    for (int p = -4; p < 4; ++p) CHECK(tile_energy(r, mod, p, 0.0) >= -1e-10);
  }
  CHECK_THROWS_AS(window_energy(u, mod, 2, 5, 0.0), RangeError);
}

TEST_CASE("exact additivity of tile energies") {
  for (int dim : {1, 2, 3}) {
    Potential mod = make_potential("pendulum_modulated", 0.3);
    GridSpec g = strip1d(-2, 2, 8);
    g.dim = dim;
    std::mt19937 rng(23 + dim);
    std::uniform_real_distribution<double> unif(0, 1);
    Field u(g);
    for (double& v : u.values) v = unif(rng);

    double total = strip_energy(u, mod);
    double sum = 0.0;
    for (int p = -2; p < 2; ++p) sum += tile_energy(u, mod, p, 0.0);
    CHECK(std::abs(total - sum) <= 1e-12 * (1.0 + std::abs(total)));

    double w_split = window_energy(u, mod, -2, -1, 0.0) + window_energy(u, mod, 0, 1, 0.0);
    CHECK(std::abs(w_split - window_energy(u, mod, -2, 1, 0.0)) <= 1e-12);
  }
}

TEST_CASE("ledger windows agree with recomputed window sums") {
  Potential mod = make_potential("pendulum_modulated", 0.3);
  GridSpec g = strip1d(-4, 4, 16);
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> unif(0, 1);
  Field u(g);
  for (double& v : u.values) v = unif(rng);
  EnergyLedger led = build_ledger(u, mod, 0.0);
  for (int p = -4; p < 4; ++p)
    for (int q = p; q < 4; ++q)
      CHECK(std::abs(led.window(p, q) - window_energy(u, mod, p, q, 0.0)) <= 1e-12);
  CHECK(std::abs(led.total - window_energy(u, mod, -4, 3, 0.0)) <= 1e-12);
  CHECK(led.k1bar_est <= 1e-10);  // nonnegative integrand, zero floor
}

TEST_CASE("window sums stay within the ledger bound") {
  // With the empirical floor estimate K, every window sum is at most the
  // strip total plus 2K.
  Potential mod = make_potential("pendulum_modulated", 0.3);
  GridSpec g = strip1d(-4, 4, 16);
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> unif(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Field u(g);
    for (double& v : u.values) v = unif(rng);
    EnergyLedger led = build_ledger(u, mod, 0.0);
    for (int p = -4; p < 4; ++p)
      for (int q = p; q < 4; ++q)
        CHECK(led.window(p, q) <= led.total + 2 * led.k1bar_est + 1e-10);
  }
}

TEST_CASE("gradient matches directional finite differences") {
  Potential mod = make_potential("pendulum_modulated", 0.3);
  GridSpec g = strip1d(-2, 2, 16);
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> unif(0, 1);
  std::normal_distribution<double> gauss(0, 1);

  Field u(g);
  for (double& v : u.values) v = unif(rng);
  EnergyGradient eg;
  assemble_gradient(u, mod, eg);

  const double eps = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> dir(u.values.size());
    double norm = 0.0;
    for (double& d : dir) {
      d = gauss(rng);
      norm += d * d;
    }
    norm = std::sqrt(norm);
    for (double& d : dir) d /= norm;

    Field up = u, dn = u;
    for (size_t i = 0; i < u.values.size(); ++i) {
      up.values[i] += eps * dir[i];
      dn.values[i] -= eps * dir[i];
    }
    double fd = (strip_energy(up, mod) - strip_energy(dn, mod)) / (2 * eps);
    double an = 0.0;
    for (size_t i = 0; i < dir.size(); ++i) an += eg.raw[i] * dir[i];
    CHECK(std::abs(fd - an) <= 1e-6 * (1.0 + std::abs(an)));
  }
}

TEST_CASE("residual vanishes at integer constants and respects the mask") {
  Potential mod = make_potential("pendulum_modulated", 0.3);
  GridSpec g = strip1d(-2, 2, 16);
  Field u = Field::constant(g, 1.0);
  std::vector<std::uint8_t> mask = end_plane_mask(g);
  Field r = residual_field(u, mod, mask);
  for (double v : r.values) CHECK(v == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(r.values[0] == 0.0);

  // The scaled interior residual is the pointwise PDE operator.
  Field q(g);
  for (int k = 0; k < g.x1_nodes(); ++k) {
    double x = g.x1_of(k);
    q.at(k) = 0.3 + 0.1 * std::sin(2 * M_PI * x / 4.0);
  }
  Field rq = residual_field(q, mod, mask);
  double h = g.h();
  for (int k = 1; k < g.x1_nodes() - 1; ++k) {
    double lap = (q.at(k + 1) - 2 * q.at(k) + q.at(k - 1)) / (h * h);
    double expect = -lap + mod.du(g.x1_of(k), q.at(k));
    CHECK(rq.at(k) == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("gluing: identity, face matching, ramp energy, enclosure") {
  Potential pen = make_potential("pendulum");
  GridSpec g = strip1d(-2, 2, 64);
  Field w0 = Field::constant(g, 1.0);
  Field v0 = Field::constant(g, 0.0);

  Field same = glue(w0, w0, 0, GlueSide::left);
  for (size_t i = 0; i < same.values.size(); ++i) CHECK(same.values[i] == w0.values[i]);

  // Blending the upper state into the lower across one tile is the unit ramp.
  Field chi = glue(w0, v0, 0, GlueSide::right);  // v0 left, w0 right
  CHECK(tile_energy(chi, pen, 0, 0.0) == doctest::Approx(1.0).epsilon(1e-12));

  int N = g.points_per_unit;
  int k0 = (0 - g.tile_lo) * N;
  CHECK(chi.at(k0) == v0.at(k0));          // left face matches phi exactly
  CHECK(chi.at(k0 + N) == w0.at(k0 + N));  // right face matches u exactly

  std::mt19937 rng(51);
  std::uniform_real_distribution<double> unif(0, 1);
  Field u(g), phi(g);
  for (double& v : u.values) v = unif(rng);
  for (double& v : phi.values) v = unif(rng);
  Field b = glue(u, phi, 0, GlueSide::left);
  for (int k = k0; k <= k0 + N; ++k) {
    double lo = std::min(u.at(k), phi.at(k));
    double hi = std::max(u.at(k), phi.at(k));
    CHECK(b.at(k) >= lo - 1e-14);
    CHECK(b.at(k) <= hi + 1e-14);
  }
  CHECK_THROWS_AS(glue(u, phi, 2, GlueSide::left), RangeError);
}

TEST_CASE("tile potential bound estimate") {
  Potential pen = make_potential("pendulum");
  GridSpec g = strip1d(-2, 2, 32);
  Field v0 = Field::constant(g, 0.0);
  Field w0 = Field::constant(g, 1.0);

  double est = estimate_tile_potential_bound(pen, g, v0, w0, 0.0, 150, 2024);
  CHECK(est >= 1.0 - 1e-12);  // the constant 1/2 profile contributes exactly one
  CHECK(est <= 1.0 + 1e-9);   // and nothing between the states can exceed it

  // Both bounding states contribute zero.
  double e_v0 = std::abs(tile_energy(v0, pen, 0, 0.0)) + 0.5 * grad_sq_range(v0, v0, 64, 96);
  CHECK(e_v0 == doctest::Approx(0.0));

  // Cross-check of the gluing estimate: the glued tile energy is bounded by
  // the gradient part of the source plus the potential bound.
  Field chi = glue(w0, v0, 0, GlueSide::right);
  int k0 = (0 - g.tile_lo) * g.points_per_unit;
  double grad_part = 0.5 * grad_sq_range(w0, v0, k0, k0 + g.points_per_unit);
  CHECK(tile_energy(chi, pen, 0, 0.0) <= grad_part + est + 1e-9);

  CHECK_THROWS_AS(estimate_tile_potential_bound(pen, g, v0, w0, 0.0, 50), ConfigError);
}
