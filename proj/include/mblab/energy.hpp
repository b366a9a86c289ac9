#pragma once

// Discrete energies and the renormalization machinery: the cell problem on
// the unit torus, renormalized tile energies, window sums, the exact
// quadrature gradient, and the gluing interpolant.
//
// Quadrature: the gradient term uses cell differences (exact at cell
// midpoints), the potential term uses the trapezoid rule in x1 and the
// rectangle rule in the periodic directions. Tiles are exact unions of
// cells, so tile energies partition the strip energy with no overlap and
// window sums are exact at the discrete level.

#include <cmath>
#include <random>
#include <vector>

#include "grid.hpp"
#include "minimize.hpp"
#include "potential.hpp"

namespace mblab {

namespace detail {

/// Energy over the x1 node range [k_lo, k_hi] (node weights halved at the
/// range ends). Not renormalized.
inline double energy_range(const Field& u, const Potential& pot, int k_lo, int k_hi) {
  const GridSpec& g = u.grid;
  const double h = g.h();
  const double hn = std::pow(h, g.dim);
  const double inv_h2 = 1.0 / (h * h);
  const int N = g.points_per_unit;
  double acc = 0.0;
  for (int k = k_lo; k < k_hi; ++k) {  // x1 cells
    int kr = g.x1_periodic ? (k + 1) % g.x1_nodes() : k + 1;
    double cell = 0.0;
    for (int t2 = 0; t2 < g.t_nodes(1); ++t2)
      for (int t3 = 0; t3 < g.t_nodes(2); ++t3) {
        double d = u.at(kr, t2, t3) - u.at(k, t2, t3);
        cell += d * d;
      }
    acc += 0.5 * cell * inv_h2 * hn;
  }
  for (int k = k_lo; k <= k_hi; ++k) {  // node terms
    int kk = g.x1_periodic ? k % g.x1_nodes() : k;
    double w = g.x1_periodic ? (k == k_hi ? 0.0 : 1.0) : trap_w(k, k_lo, k_hi);
    if (w == 0.0) continue;
    double x1 = g.x1_of(kk);
    double plane = 0.0;
    for (int t2 = 0; t2 < g.t_nodes(1); ++t2)
      for (int t3 = 0; t3 < g.t_nodes(2); ++t3) {
        double uv = u.at(kk, t2, t3);
        double node = pot.value(x1, uv);
        if (g.dim >= 2) {
          double d = u.at(kk, (t2 + 1) % N, t3) - u.at(kk, t2, t3);
          node += 0.5 * d * d * inv_h2;
        }
        if (g.dim >= 3) {
          double d = u.at(kk, t2, (t3 + 1) % N) - u.at(kk, t2, t3);
          node += 0.5 * d * d * inv_h2;
        }
        plane += node;
      }
    acc += w * plane * hn;
  }
  return acc;
}

}  // namespace detail

/// Energy of a fully periodic field over one cell of the torus.
inline double cell_energy(const Field& u, const Potential& pot) {
  if (!u.grid.x1_periodic)
    throw ShapeError("cell_energy requires an x1-periodic grid");
  return detail::energy_range(u, pot, 0, u.grid.x1_nodes());
}

/// Raw (not renormalized) energy over the whole strip.
inline double strip_energy(const Field& u, const Potential& pot) {
  if (u.grid.x1_periodic)
    return detail::energy_range(u, pot, 0, u.grid.x1_nodes());
  return detail::energy_range(u, pot, 0, u.grid.x1_nodes() - 1);
}

/// Renormalized tile energy: energy over T_p minus c0.
inline double tile_energy(const Field& u, const Potential& pot, int p, double c0) {
  if (!u.grid.valid_tile(p)) throw RangeError("tile index outside strip");
  if (u.grid.x1_periodic) throw ShapeError("tile_energy is defined on strips");
  int N = u.grid.points_per_unit;
  int k0 = (p - u.grid.tile_lo) * N;
  return detail::energy_range(u, pot, k0, k0 + N) - c0;
}

/// Window sum of renormalized tile energies over tiles p..q inclusive.
inline double window_energy(const Field& u, const Potential& pot, int p, int q, double c0) {
  require_tile_range(u.grid, p, q);
  int N = u.grid.points_per_unit;
  double acc = 0.0;
  for (int t = p; t <= q; ++t) {
    int a = (t - u.grid.tile_lo) * N;
    acc += detail::energy_range(u, pot, a, a + N) - c0;
  }
  return acc;
}

/// Renormalized energy of the whole strip (the discrete stand-in for the
/// infinite-cylinder total).
inline double renormalized_strip_energy(const Field& u, const Potential& pot, double c0) {
  return strip_energy(u, pot) - c0 * u.grid.span();
}

// ---------------------------------------------------------------------------
// Exact quadrature gradient.

/// Raw derivative of the strip (or torus) energy with respect to every nodal
/// value, plus the diagonal quadrature metric. residual = raw/metric
/// approximates -Laplace(u) + F_u(x,u) pointwise.
struct EnergyGradient {
  std::vector<double> raw;
  std::vector<double> metric;
};

inline void assemble_gradient(const Field& u, const Potential& pot, EnergyGradient& out) {
  const GridSpec& g = u.grid;
  const double h = g.h();
  const double hn = std::pow(h, g.dim);
  const double hn_over_h2 = hn / (h * h);
  const int N = g.points_per_unit;
  const int nk = g.x1_nodes();
  const size_t n = u.values.size();
  out.raw.assign(n, 0.0);
  out.metric.assign(n, 0.0);

  for (int k = 0; k < nk; ++k) {
    bool at_lo = !g.x1_periodic && k == 0;
    bool at_hi = !g.x1_periodic && k == nk - 1;
    double w = (at_lo || at_hi) ? 0.5 : 1.0;
    int kl = g.x1_periodic ? (k - 1 + nk) % nk : k - 1;
    int kr = g.x1_periodic ? (k + 1) % nk : k + 1;
    double x1 = g.x1_of(k);
    for (int t2 = 0; t2 < g.t_nodes(1); ++t2)
      for (int t3 = 0; t3 < g.t_nodes(2); ++t3) {
        long idx = g.index(k, t2, t3);
        double uv = u.values[idx];
        double grad = 0.0;
        if (!at_lo) grad += (uv - u.at(kl, t2, t3)) * hn_over_h2;
        if (!at_hi) grad += (uv - u.at(kr, t2, t3)) * hn_over_h2;
        if (g.dim >= 2) {
          grad += w * (2.0 * uv - u.at(k, (t2 + 1) % N, t3) - u.at(k, (t2 - 1 + N) % N, t3)) *
                  hn_over_h2;
        }
        if (g.dim >= 3) {
          grad += w * (2.0 * uv - u.at(k, t2, (t3 + 1) % N) - u.at(k, t2, (t3 - 1 + N) % N)) *
                  hn_over_h2;
        }
        grad += w * hn * pot.du(x1, uv);
        out.raw[idx] = grad;
        out.metric[idx] = w * hn;
      }
  }
}

/// Discrete gradient of the strip energy scaled by inverse quadrature
/// weights: approximates -Laplace(u) + F_u(x,u) at interior nodes; zero on
/// masked (Dirichlet) nodes.
inline Field residual_field(const Field& u, const Potential& pot,
                            const std::vector<std::uint8_t>& frozen = {}) {
  EnergyGradient eg;
  assemble_gradient(u, pot, eg);
  Field r(u.grid, 0.0);
  for (size_t i = 0; i < eg.raw.size(); ++i) {
    if (!frozen.empty() && frozen[i]) continue;
    r.values[i] = eg.raw[i] / eg.metric[i];
  }
  return r;
}

/// Largest gradient-descent step on the scaled (residual) system that stays
/// below the stability bound 2/L, with L estimated from the discrete
/// Laplacian plus the sampled second derivative of the potential.
inline double stable_polish_step(const Potential& pot, const GridSpec& g) {
  double fuu = 0.0;
  const double du = 1e-5;
  for (int sx = 0; sx < 32; ++sx)
    for (int su = 0; su <= 8; ++su) {
      double x = sx / 32.0;
      double u = su / 8.0;
      fuu = std::max(fuu, std::abs((pot.du(x, u + du) - pot.du(x, u - du)) / (2 * du)));
    }
  double h = g.h();
  return 1.8 / (4.0 * g.dim / (h * h) + 1.2 * fuu + 1.0);
}

/// Dirichlet mask holding the two strip end planes fixed.
inline std::vector<std::uint8_t> end_plane_mask(const GridSpec& g) {
  std::vector<std::uint8_t> m(static_cast<size_t>(g.node_count()), 0);
  if (g.x1_periodic) return m;
  int last = g.x1_nodes() - 1;
  for (int t2 = 0; t2 < g.t_nodes(1); ++t2)
    for (int t3 = 0; t3 < g.t_nodes(2); ++t3) {
      m[g.index(0, t2, t3)] = 1;
      m[g.index(last, t2, t3)] = 1;
    }
  return m;
}

/// Max-norm of the PDE residual over interior (non-masked) nodes.
inline double pde_residual_max(const Field& u, const Potential& pot,
                               const std::vector<std::uint8_t>& frozen) {
  Field r = residual_field(u, pot, frozen);
  double m = 0.0;
  for (double v : r.values) m = std::max(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------------------
// Cell problem.

struct CellSolution {
  double energy = 0.0;  // c0
  Field minimizer;      // on the unit torus grid, base-point value in [0,1)
  long iterations = 0;
  bool converged = false;
};

inline GridSpec torus_grid(int dim, int points_per_unit) {
  GridSpec g;
  g.dim = dim;
  g.tile_lo = 0;
  g.tile_hi = 1;
  g.points_per_unit = points_per_unit;
  g.x1_periodic = true;
  return g;
}

struct CellOptions {
  double residual_tol = 0.0;  // 0: use 1e-8 * N
  long max_iters = 200000;
  int random_starts = 3;
  double perturbation = 0.05;
  unsigned seed = 12345;
};

/// Minimizes the cell energy over fully periodic fields, starting from
/// several constants and random perturbations. The minimizer is normalized so
/// its base-point value lies in [0,1). Throws ConvergenceError when no start
/// converges (the best iterate's value rides along in the exception).
inline CellSolution solve_cell_problem(const Potential& pot, const GridSpec& strip_like,
                                       const CellOptions& opts = {}) {
  GridSpec g = torus_grid(strip_like.dim, strip_like.points_per_unit);
  double tol = opts.residual_tol > 0 ? opts.residual_tol : 1e-8 * g.points_per_unit;

  MinimizeProblem prob;
  prob.value = [&](const std::vector<double>& v) {
    Field f;
    f.grid = g;
    f.values = v;
    return cell_energy(f, pot);
  };
  EnergyGradient eg;
  Field scratch(g);
  prob.gradient = [&](const std::vector<double>& v, std::vector<double>& out) {
    scratch.values = v;
    assemble_gradient(scratch, pot, eg);
    out = eg.raw;
  };
  {
    Field tmp(g, 0.0);
    assemble_gradient(tmp, pot, eg);
    prob.metric = eg.metric;
  }

  MinimizeOptions mo;
  mo.residual_tol = tol;
  mo.max_iters = opts.max_iters;
  mo.step0 = 0.1 * g.h() * g.h();
  mo.polish_step0 = stable_polish_step(pot, g);

  std::mt19937 rng(opts.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  CellSolution best;
  bool have_best = false;
  double best_value = 0.0;
  auto consider = [&](const MinimizeResult& r) {
    if (!have_best || r.value < best_value - 1e-12) {
      have_best = true;
      best_value = r.value;
      best.energy = r.value;
      best.minimizer.grid = g;
      best.minimizer.values = r.x;
      best.iterations = r.iterations;
      best.converged = r.converged;
    }
  };

  const double starts[] = {0.0, 0.25, 0.5, 0.75};
  for (double s : starts) {
    std::vector<double> x0(static_cast<size_t>(g.node_count()), s);
    consider(minimize(prob, std::move(x0), mo));
  }
  for (int r = 0; r < opts.random_starts; ++r) {
    double base = starts[r % 4];
    std::vector<double> x0(static_cast<size_t>(g.node_count()));
    for (double& v : x0) v = base + opts.perturbation * unit(rng);
    consider(minimize(prob, std::move(x0), mo));
  }

  if (!best.converged)
    throw ConvergenceError("cell problem did not converge", best_value, best.iterations);

  // Normalize the base-point value into [0,1).
  double shift = std::floor(best.minimizer.values[0]);
  if (shift != 0.0)
    for (double& v : best.minimizer.values) v -= shift;
  return best;
}

// ---------------------------------------------------------------------------
// Ledger, gluing, constants.

/// Per-tile renormalized energies with the constant c0 and the strip total.
struct EnergyLedger {
  double c0 = 0.0;
  int first_tile = 0;
  std::vector<double> tile;  // tile[i] = renormalized energy of T_{first_tile + i}
  double total = 0.0;
  double k1bar_est = 0.0;  // max(0, -min tile entry)

  double window(int p, int q) const {
    double acc = 0.0;
    for (int t = p; t <= q; ++t) acc += tile[static_cast<size_t>(t - first_tile)];
    return acc;
  }
};

inline EnergyLedger build_ledger(const Field& u, const Potential& pot, double c0) {
  EnergyLedger led;
  led.c0 = c0;
  led.first_tile = u.grid.tile_lo;
  led.tile.reserve(static_cast<size_t>(u.grid.span()));
  double mn = 0.0;
  for (int p = u.grid.tile_lo; p < u.grid.tile_hi; ++p) {
    double e = tile_energy(u, pot, p, c0);
    led.tile.push_back(e);
    led.total += e;
    mn = std::min(mn, e);
  }
  led.k1bar_est = std::max(0.0, -mn);
  return led;
}

enum class GlueSide {
  left,   // u kept on x1 <= p, phi beyond p+1
  right,  // phi on x1 <= p, u beyond p+1
};

/// Linear-in-x1 blend of u and phi across tile T_p; equals u on one side and
/// phi on the other, continuous at both tile faces.
inline Field glue(const Field& u, const Field& phi, int p, GlueSide side) {
  detail::require_same_grid(u, phi);
  if (!u.grid.valid_tile(p)) throw RangeError("glue: tile index outside strip");
  const GridSpec& g = u.grid;
  Field out = u;
  int N = g.points_per_unit;
  int k0 = (p - g.tile_lo) * N;
  int nk = g.x1_nodes();
  for (int k = 0; k < nk; ++k) {
    double wu;  // weight of u at this plane
    if (k <= k0) wu = side == GlueSide::left ? 1.0 : 0.0;
    else if (k >= k0 + N) wu = side == GlueSide::left ? 0.0 : 1.0;
    else {
      double t = static_cast<double>(k - k0) / N;  // x1 - p
      wu = side == GlueSide::left ? 1.0 - t : t;
    }
    for (int t2 = 0; t2 < g.t_nodes(1); ++t2)
      for (int t3 = 0; t3 < g.t_nodes(2); ++t3)
        out.at(k, t2, t3) = wu * u.at(k, t2, t3) + (1.0 - wu) * phi.at(k, t2, t3);
  }
  return out;
}

/// Empirical lower estimate of the constant bounding
/// |tile energy - 1/2 ||grad(u - v0)||^2| over sampled u between v0 and w0.
inline double estimate_tile_potential_bound(const Potential& pot, const GridSpec& strip,
                                            const Field& v0, const Field& w0, double c0,
                                            int samples = 200, unsigned seed = 2024) {
  if (samples < 100) throw ConfigError("estimate requires at least 100 samples");
  const GridSpec& g = strip;
  int p = g.tile_lo + g.span() / 2;
  int N = g.points_per_unit;
  int k0 = (p - g.tile_lo) * N;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  auto gap_for = [&](const Field& u) {
    double e = tile_energy(u, pot, p, c0);
    double gpart = 0.5 * grad_sq_range(u, v0, k0, k0 + N);
    return std::abs(e - gpart);
  };

  double best = std::max(gap_for(v0), gap_for(w0));
  const double consts[] = {0.25, 0.5, 0.75};
  for (double c : consts) {
    Field u = v0;
    for (size_t i = 0; i < u.values.size(); ++i)
      u.values[i] = v0.values[i] + c * (w0.values[i] - v0.values[i]);
    best = std::max(best, gap_for(u));
  }
  for (int s = 0; s < samples; ++s) {
    // Smooth random profile between the bounding states.
    double a = unif(rng), b = unif(rng), ph = unif(rng), amp = 0.5 * unif(rng);
    Field u = v0;
    int nk = g.x1_nodes();
    for (int k = 0; k < nk; ++k) {
      double x = g.x1_of(k);
      double t = std::min(1.0, std::max(0.0, a + amp * std::sin(detail::kTwoPi * (b * x + ph))));
      for (int t2 = 0; t2 < g.t_nodes(1); ++t2)
        for (int t3 = 0; t3 < g.t_nodes(2); ++t3) {
          long idx = g.index(k, t2, t3);
          u.values[idx] = v0.values[idx] + t * (w0.values[idx] - v0.values[idx]);
        }
    }
    best = std::max(best, gap_for(u));
  }
  return best;
}

}  // namespace mblab
