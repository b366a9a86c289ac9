#pragma once

// Numerical verification battery: gap conditions, comparison inequalities,
// decay, a-priori gradient bounds, local minimality, and flat-tile margins.
// Every check reports measured margins, never just a boolean.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "energy.hpp"
#include "grid.hpp"
#include "minimize.hpp"
#include "potential.hpp"
#include "solver.hpp"

namespace mblab {

struct CheckResult {
  std::string id;
  bool pass = false;
  bool heuristic = false;
  double tolerance = 0.0;
  std::vector<std::pair<std::string, double>> measured;
  std::string context;
  std::string note;

  void add(const std::string& k, double v) { measured.emplace_back(k, v); }
  double get(const std::string& k) const {
    for (const auto& [kk, vv] : measured)
      if (kk == k) return vv;
    return std::nan("");
  }
};

// ---------------------------------------------------------------------------
// Gap condition for the periodic family: no member between v0 and w0.

struct CellGapOptions {
  double gap_tol = 1e-3;
  int steps = 32;
  CellOptions cell;
  long max_iters = 200000;
};

/// Scans pinned base-point values s in (0,1); each pinned minimum must exceed
/// c0 by gap_tol, certifying that no periodic minimizer lies strictly between
/// the states.
inline CheckResult check_cell_gap(const Potential& pot, const GridSpec& grid,
                                  const CellGapOptions& opts = {}) {
  CheckResult res;
  res.id = "cell_gap";
  res.tolerance = opts.gap_tol;

  CellSolution cell = solve_cell_problem(pot, grid, opts.cell);
  GridSpec tg = torus_grid(grid.dim, grid.points_per_unit);
  double tol = opts.cell.residual_tol > 0 ? opts.cell.residual_tol : 1e-8 * tg.points_per_unit;

  MinimizeProblem prob;
  Field scratch(tg);
  prob.value = [&](const std::vector<double>& v) {
    scratch.values = v;
    return cell_energy(scratch, pot);
  };
  EnergyGradient eg;
  prob.gradient = [&](const std::vector<double>& v, std::vector<double>& out) {
    scratch.values = v;
    assemble_gradient(scratch, pot, eg);
    out = eg.raw;
  };
  assemble_gradient(scratch, pot, eg);
  prob.metric = eg.metric;
  std::vector<std::uint8_t> frozen(static_cast<size_t>(tg.node_count()), 0);
  frozen[0] = 1;  // pin the base node
  prob.frozen = frozen;

  MinimizeOptions mo;
  mo.residual_tol = tol;
  mo.max_iters = opts.max_iters;
  mo.step0 = 0.1 * tg.h() * tg.h();
  mo.polish_step0 = stable_polish_step(pot, tg);

  double min_excess = std::numeric_limits<double>::infinity();
  double worst_s = 0.0;
  for (int ks = 1; ks < opts.steps; ++ks) {
    double s = static_cast<double>(ks) / opts.steps;
    double best = std::numeric_limits<double>::infinity();
    const double bases[] = {s, 0.0, 1.0};
    for (double base : bases) {
      std::vector<double> x0(static_cast<size_t>(tg.node_count()), base);
      x0[0] = s;
      MinimizeResult r = minimize(prob, std::move(x0), mo);
      if (r.converged) best = std::min(best, r.value);
    }
    double excess = best - cell.energy;
    if (excess < min_excess) {
      min_excess = excess;
      worst_s = s;
    }
  }

  res.add("c0", cell.energy);
  res.add("min_pinned_excess", min_excess);
  res.add("worst_s", worst_s);
  res.pass = min_excess > opts.gap_tol;
  return res;
}

// ---------------------------------------------------------------------------
// Heuristic gap condition for the heteroclinic family.

struct HeteroGapOptions {
  double gap_tol = 1e-3;
  double orbit_tol = 1e-3;
  SolveOptions solve;
};

/// HEURISTIC: requires the unit translate to differ from the minimizer on the
/// central tile, and re-minimization from their midpoint to fall back onto
/// the integer-translate orbit rather than a strictly intermediate profile.
inline CheckResult check_heteroclinic_gap(const Potential& pot, const StatePair& states,
                                          const SolveReport& up,
                                          const HeteroGapOptions& opts = {}) {
  CheckResult res;
  res.id = "heteroclinic_gap";
  res.heuristic = true;
  res.tolerance = opts.gap_tol;
  res.note = "HEURISTIC";

  const Field& U = up.minimizer;
  const GridSpec& g = U.grid;
  // Measure at the transition, wherever the solver placed it.
  int c = static_cast<int>(std::floor(detail::mid_crossing(U, states, true)));
  c = std::min(std::max(c, g.tile_lo + 2), g.tile_hi - 3);
  Field tau = translate(U, -1);
  double translate_gap = tile_distance(tau, U, c);

  Field mid = U;
  for (size_t i = 0; i < mid.values.size(); ++i)
    mid.values[i] = 0.5 * (U.values[i] + tau.values[i]);

  SolveOptions so = opts.solve;
  SolveHandle handle;
  handle.active = true;
  handle.x = mid;
  SolveReport remin = solve_heteroclinic(pot, g, HeteroDirection::rise, states, so, &handle);

  double orbit_dist = std::numeric_limits<double>::infinity();
  int best_k = 0;
  for (int k = -3; k <= 3; ++k) {
    Field tU = k == 0 ? U : translate(U, k);
    double d = window_distance(remin.minimizer, tU, c - 1, c + 1);
    if (d < orbit_dist) {
      orbit_dist = d;
      best_k = k;
    }
  }

  res.add("translate_gap", translate_gap);
  res.add("orbit_distance", orbit_dist);
  res.add("orbit_shift", best_k);
  res.pass = translate_gap > opts.gap_tol && orbit_dist <= opts.orbit_tol;
  return res;
}

// ---------------------------------------------------------------------------
// Positivity of the round-trip cost c1(v0,w0) + c1(w0,v0).

inline CheckResult check_roundtrip_positive(double c1_up, double c1_down,
                                            double pos_tol = 1e-3) {
  CheckResult res;
  res.id = "roundtrip_positive";
  res.tolerance = pos_tol;
  res.add("c1_up", c1_up);
  res.add("c1_down", c1_down);
  res.add("sum", c1_up + c1_down);
  res.pass = c1_up + c1_down > pos_tol;
  return res;
}

// ---------------------------------------------------------------------------
// Pinned-tile detour cost exceeds the free heteroclinic minimum.

struct PinnedExcessOptions {
  double pos_tol = 1e-3;
  SolveOptions solve;
};

namespace detail {

/// Minimizes the strip energy with heteroclinic end data subject to the
/// equality pin ||u - phi||_{L2(T_0)} = rho, enforced by radial rescaling of
/// u - phi on T_0 after every step.
inline double pinned_detour_energy(const Potential& pot, const StatePair& states,
                                   const SolveReport& up, bool pin_to_upper, double rho,
                                   const SolveOptions& opts) {
  const GridSpec& g = up.minimizer.grid;
  const Field& phi = pin_to_upper ? states.w0 : states.v0;
  if (!g.valid_tile(0)) throw ConfigError("pinned check requires tile 0 inside the strip");

  // Start from the translate whose tile-0 distance is nearest the target.
  int best_i = g.tile_lo;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int i = g.tile_lo; i < g.tile_hi; ++i) {
    double gap = std::abs(tile_distance(up.minimizer, phi, i) - rho);
    if (gap < best_gap) {
      best_gap = gap;
      best_i = i;
    }
  }
  Field x0 = best_i == 0 ? up.minimizer : translate(up.minimizer, -best_i);

  detail::TileQuad quad = detail::tile_quad(g, 0);
  long plane = g.plane_nodes();
  auto pin_dist_sq = [&](const std::vector<double>& v) {
    double acc = 0.0;
    for (int i = 0; i <= g.points_per_unit; ++i) {
      long base = g.index(quad.k_lo + i);
      double pl = 0.0;
      for (long t = 0; t < plane; ++t) {
        double d = v[base + t] - phi.values[base + t];
        pl += d * d;
      }
      acc += quad.w[static_cast<size_t>(i)] * pl;
    }
    return acc;
  };

  MinimizeProblem prob;
  Field scratch(g);
  prob.value = [&](const std::vector<double>& v) {
    scratch.values = v;
    return strip_energy(scratch, pot);
  };
  EnergyGradient eg;
  prob.gradient = [&](const std::vector<double>& v, std::vector<double>& out) {
    scratch.values = v;
    assemble_gradient(scratch, pot, eg);
    out = eg.raw;
  };
  assemble_gradient(x0, pot, eg);
  prob.metric = eg.metric;
  std::vector<double> metric = eg.metric;
  prob.frozen = end_plane_mask(g);
  prob.lower = &states.v0.values;
  prob.upper = &states.w0.values;
  prob.project = [&](std::vector<double>& v) {
    double cur = std::sqrt(pin_dist_sq(v));
    if (cur < 1e-14) return;  // degenerate; leave to the next steps
    double lam = rho / cur;
    for (int i = 0; i <= g.points_per_unit; ++i) {
      long base = g.index(quad.k_lo + i);
      for (long t = 0; t < plane; ++t)
        v[base + t] = phi.values[base + t] + lam * (v[base + t] - phi.values[base + t]);
    }
  };
  prob.residual_filter = [&](const std::vector<double>& v, std::vector<double>& r) {
    // Remove the component along the pin normal so the stopping rule sees
    // only the tangential residual.
    double rn = 0.0, nn = 0.0;
    std::vector<double> dir(static_cast<size_t>((g.points_per_unit + 1) * plane));
    size_t di = 0;
    for (int i = 0; i <= g.points_per_unit; ++i) {
      long base = g.index(quad.k_lo + i);
      double wq = quad.w[static_cast<size_t>(i)];
      for (long t = 0; t < plane; ++t, ++di) {
        double n = 2.0 * wq * (v[base + t] - phi.values[base + t]) / metric[base + t];
        dir[di] = n;
        rn += r[base + t] * n;
        nn += n * n;
      }
    }
    if (nn <= 0.0) return;
    double f = rn / nn;
    di = 0;
    for (int i = 0; i <= g.points_per_unit; ++i) {
      long base = g.index(quad.k_lo + i);
      for (long t = 0; t < plane; ++t, ++di) r[base + t] -= f * dir[di];
    }
  };

  MinimizeOptions mo;
  mo.residual_tol = opts.tol_for(g) * 10.0;
  mo.max_iters = opts.max_iters;
  mo.step0 = 0.1 * g.h() * g.h();
  mo.polish_step0 = stable_polish_step(pot, g);

  MinimizeResult r = minimize(prob, x0.values, mo);
  scratch.values = r.x;
  return strip_energy(scratch, pot) - states.c0 * g.span();
}

}  // namespace detail

/// Estimates the constrained infimum with the tile-0 norm pinned to
/// rho_minus (distance to v0) and rho_plus (distance to w0); both estimates
/// must exceed c1 by pos_tol.
inline CheckResult check_pinned_excess(const Potential& pot, const StatePair& states,
                                       const SolveReport& up, double rho_minus, double rho_plus,
                                       const PinnedExcessOptions& opts = {}) {
  if (!(rho_minus > 0.0 && rho_minus < states.rho_bar) ||
      !(rho_plus > 0.0 && rho_plus < states.rho_bar))
    throw ConfigError("pinned radii must lie strictly between 0 and the pair distance");
  CheckResult res;
  res.id = "pinned_excess";
  res.tolerance = opts.pos_tol;
  double d_minus = detail::pinned_detour_energy(pot, states, up, false, rho_minus, opts.solve);
  double d_plus = detail::pinned_detour_energy(pot, states, up, true, rho_plus, opts.solve);
  double c1 = up.objective;
  res.add("c1", c1);
  res.add("d_minus", d_minus);
  res.add("d_plus", d_plus);
  res.add("min_excess", std::min(d_minus, d_plus) - c1);
  res.pass = std::min(d_minus, d_plus) > c1 + opts.pos_tol;
  return res;
}

// ---------------------------------------------------------------------------
// Tail decay toward a state.

struct DecayOptions {
  double threshold = 1e-2;
  double ratio_slack = 1.1;
  double floor = 1e-12;
};

enum class Side { left, right };

/// Marches tile distances to the target state from start_tile toward the
/// strip end; distances must stay below the threshold and be nonincreasing
/// within the slack. Also records the discrete W^{1,2} distances over the
/// five-tile windows.
inline CheckResult check_decay(const SolveReport& report, const Field& target, Side side,
                               int start_tile, const DecayOptions& opts = {}) {
  CheckResult res;
  res.id = "tail_decay";
  res.tolerance = opts.threshold;
  const Field& U = report.minimizer;
  const GridSpec& g = U.grid;
  if (!g.valid_tile(start_tile)) throw RangeError("start tile outside strip");

  double max_tail = 0.0, worst_ratio = 0.0, max_w12 = 0.0;
  bool monotone = true;
  double prev = -1.0;
  int i = start_tile;
  int steps = 0;
  while (g.valid_tile(i)) {
    double d = tile_distance(U, target, i);
    max_tail = std::max(max_tail, d);
    if (prev >= 0.0 && prev > opts.floor) {
      double ratio = d / prev;
      worst_ratio = std::max(worst_ratio, ratio);
      if (d > opts.ratio_slack * prev && d > opts.floor) monotone = false;
    }
    if (i - 2 >= g.tile_lo && i + 2 <= g.tile_hi - 1)
      max_w12 = std::max(max_w12, window_w12_distance(U, target, i - 2, i + 2));
    prev = d;
    i += side == Side::right ? 1 : -1;
    ++steps;
  }

  res.add("max_tail_distance", max_tail);
  res.add("worst_ratio", worst_ratio);
  res.add("max_w12_window", max_w12);
  res.add("tiles_checked", steps);
  res.pass = max_tail <= opts.threshold && monotone;
  return res;
}

// ---------------------------------------------------------------------------
// A-priori gradient bound.

struct GradientBoundOptions {
  double cap = 50.0;
  double denom_floor = 1e-8;
};

/// Ratio of the tile gradient seminorm of U - v0 to its L2 norm over the
/// three-tile window, for every interior tile with a nontrivial denominator.
inline CheckResult check_gradient_bound(const SolveReport& report, const Field& v0,
                                        const GradientBoundOptions& opts = {}) {
  CheckResult res;
  res.id = "gradient_bound";
  res.tolerance = opts.cap;
  const Field& U = report.minimizer;
  const GridSpec& g = U.grid;
  double max_ratio = 0.0;
  int eligible = 0;
  int N = g.points_per_unit;
  for (int i = g.tile_lo + 1; i <= g.tile_hi - 2; ++i) {
    double denom = window_distance(U, v0, i - 1, i + 1);
    if (denom <= opts.denom_floor) continue;
    int k0 = (i - g.tile_lo) * N;
    double num = std::sqrt(grad_sq_range(U, v0, k0, k0 + N));
    max_ratio = std::max(max_ratio, num / denom);
    ++eligible;
  }
  res.add("max_ratio", max_ratio);
  res.add("eligible_tiles", eligible);
  res.pass = max_ratio <= opts.cap;
  if (eligible == 0) res.note = "vacuous: no tile above the denominator floor";
  return res;
}

// ---------------------------------------------------------------------------
// Local minimality by frozen-exterior re-minimization.

struct LocalMinOptions {
  int trials = 20;
  double radius = 1.5;  // in units (tiles), at most 2
  double rel_tol = 1e-8;
  unsigned seed = 7777;
  double residual_tol = 0.0;  // 0: 1e-9 * N
  long max_iters = 200000;
};

/// Re-minimizes the energy over random balls with the exterior frozen; every
/// trial must fail to reduce the local energy by more than
/// rel_tol * (1 + |I|).
inline CheckResult check_local_minimality(const Field& U, const Potential& pot,
                                          const LocalMinOptions& opts = {}) {
  CheckResult res;
  res.id = "local_minimality";
  res.tolerance = opts.rel_tol;
  const GridSpec& g = U.grid;
  if (opts.radius > 2.0) throw ConfigError("local minimality: radius is capped at 2 tiles");
  double tol = opts.residual_tol > 0 ? opts.residual_tol : 1e-9 * g.points_per_unit;

  std::mt19937 rng(opts.seed);
  std::uniform_real_distribution<double> ux(g.tile_lo + opts.radius + 0.25,
                                            g.tile_hi - opts.radius - 0.25);
  std::uniform_real_distribution<double> ut(0.0, 1.0);

  Field scratch(g);
  EnergyGradient eg;
  assemble_gradient(U, pot, eg);
  std::vector<double> metric = eg.metric;

  int ran = 0, skipped = 0;
  double max_rel_improvement = 0.0;
  int worst_trial = -1;
  for (int trial = 0; trial < opts.trials; ++trial) {
    double zx = ux(rng);
    double zt2 = ut(rng), zt3 = ut(rng);

    std::vector<std::uint8_t> frozen(U.values.size(), 1);
    int nk = g.x1_nodes();
    int k_min = nk, k_max = -1;
    long free_count = 0;
    for (int k = 0; k < nk; ++k) {
      double dx = g.x1_of(k) - zx;
      if (std::abs(dx) >= opts.radius) continue;
      for (int t2 = 0; t2 < g.t_nodes(1); ++t2)
        for (int t3 = 0; t3 < g.t_nodes(2); ++t3) {
          double d2 = dx * dx;
          if (g.dim >= 2) {
            double dt = std::abs(t2 * g.h() - zt2);
            dt = std::min(dt, 1.0 - dt);
            d2 += dt * dt;
          }
          if (g.dim >= 3) {
            double dt = std::abs(t3 * g.h() - zt3);
            dt = std::min(dt, 1.0 - dt);
            d2 += dt * dt;
          }
          if (d2 < opts.radius * opts.radius) {
            // Interior nodes only: the strip end planes stay Dirichlet.
            if (k == 0 || k == nk - 1) continue;
            frozen[static_cast<size_t>(g.index(k, t2, t3))] = 0;
            k_min = std::min(k_min, k);
            k_max = std::max(k_max, k);
            ++free_count;
          }
        }
    }
    if (free_count == 0) {
      ++skipped;
      continue;
    }
    ++ran;
    int kw_lo = std::max(0, k_min - 1);
    int kw_hi = std::min(nk - 1, k_max + 1);

    scratch.values = U.values;
    double before = detail::energy_range(scratch, pot, kw_lo, kw_hi);

    MinimizeProblem prob;
    prob.value = [&](const std::vector<double>& v) {
      scratch.values = v;
      return strip_energy(scratch, pot);
    };
    prob.gradient = [&](const std::vector<double>& v, std::vector<double>& out) {
      scratch.values = v;
      assemble_gradient(scratch, pot, eg);
      out = eg.raw;
    };
    prob.metric = metric;
    prob.frozen = frozen;

    MinimizeOptions mo;
    mo.residual_tol = tol;
    mo.max_iters = opts.max_iters;
    mo.step0 = 0.1 * g.h() * g.h();
    mo.polish_step0 = stable_polish_step(pot, g);
    MinimizeResult r = minimize(prob, U.values, mo);

    scratch.values = r.x;
    double after = detail::energy_range(scratch, pot, kw_lo, kw_hi);
    double rel = (before - after) / (1.0 + std::abs(before));
    if (rel > max_rel_improvement) {
      max_rel_improvement = rel;
      worst_trial = trial;
    }
  }

  res.add("max_rel_improvement", max_rel_improvement);
  res.add("trials_run", ran);
  res.add("trials_skipped", skipped);
  res.add("worst_trial", worst_trial);
  res.pass = max_rel_improvement <= opts.rel_tol;
  if (ran == 0) {
    res.pass = true;
    res.note = "vacuous: every trial skipped";
  }
  return res;
}

// ---------------------------------------------------------------------------
// Five-tile window proximity inside every constraint region.

/// For each constraint family, finds the best five-tile window centered in
/// the region and measures the L2 distance to the region's target state;
/// every region must contain a window within sigma_tol.
inline CheckResult check_region_proximity(const SolveReport& multi, const TransitionSpec& spec,
                                          const StatePair& states, double sigma_tol = 1e-2) {
  CheckResult res;
  res.id = "region_window_proximity";
  res.tolerance = sigma_tol;
  const Field& U = multi.minimizer;
  const GridSpec& g = U.grid;

  double worst_best = 0.0;
  int worst_index = -1;
  std::vector<TransitionSpec::TileConstraint> cons = spec.tile_constraints();
  for (int family = 0; family < 4 * spec.K; ++family) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : cons) {
      if (c.index != family) continue;
      int i = c.tile;
      if (i - 2 < g.tile_lo || i + 2 > g.tile_hi - 1) continue;
      const Field& phi = c.to_upper ? states.w0 : states.v0;
      best = std::min(best, window_distance(U, phi, i - 2, i + 2));
    }
    if (best > worst_best) {
      worst_best = best;
      worst_index = family;
    }
  }
  res.add("worst_best_window", worst_best);
  res.add("worst_family", worst_index);
  res.pass = worst_best <= sigma_tol;
  return res;
}

// ---------------------------------------------------------------------------
// Flat-tile margins of the 2K-transition minimizer.

/// gamma is one sixth of the round-trip cost; the tile energy of the
/// minimizer and of both one-sided gluings to v0 must stay below it.
inline CheckResult check_flat_margins(const SolveReport& multi, double c1_up, double c1_down,
                                      int tile, const Potential& pot, const StatePair& states) {
  CheckResult res;
  res.id = "flat_margins";
  double gamma = (c1_up + c1_down) / 6.0;
  res.tolerance = gamma;
  const Field& U = multi.minimizer;
  double e_u = std::abs(tile_energy(U, pot, tile, states.c0));
  Field f1 = glue(U, states.v0, tile, GlueSide::left);
  Field f2 = glue(U, states.v0, tile, GlueSide::right);
  double e_f1 = std::abs(tile_energy(f1, pot, tile, states.c0));
  double e_f2 = std::abs(tile_energy(f2, pot, tile, states.c0));
  res.add("gamma", gamma);
  res.add("tile_energy", e_u);
  res.add("glued_left", e_f1);
  res.add("glued_right", e_f2);
  res.pass = e_u < gamma && e_f1 < gamma && e_f2 < gamma;
  return res;
}

}  // namespace mblab
