#pragma once

// The construction pipeline: heteroclinic minimizers between an adjacent
// pair of periodic states, constrained 2K-transition minimizers, and the
// infinite-transition approximation by block replication.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "energy.hpp"
#include "grid.hpp"
#include "minimize.hpp"
#include "potential.hpp"

namespace mblab {

// ---------------------------------------------------------------------------
// Bounding states.

/// The adjacent pair (v0, w0 = v0 + 1) materialized on a strip grid, together
/// with the cell constant and the tile distance between the pair.
struct StatePair {
  Field v0;
  Field w0;
  double c0 = 0.0;
  double rho_bar = 0.0;
};

/// Extends a torus field 1-periodically onto a strip grid with the same
/// resolution.
inline Field materialize_periodic(const Field& torus, const GridSpec& strip) {
  if (torus.grid.dim != strip.dim || torus.grid.points_per_unit != strip.points_per_unit)
    throw ShapeError("periodic extension requires matching resolution");
  Field out(strip);
  int N = strip.points_per_unit;
  int nk = strip.x1_nodes();
  for (int k = 0; k < nk; ++k) {
    int kt = ((k % N) + N) % N;
    for (int t2 = 0; t2 < strip.t_nodes(1); ++t2)
      for (int t3 = 0; t3 < strip.t_nodes(2); ++t3)
        out.at(k, t2, t3) = torus.at(kt, t2, t3);
  }
  return out;
}

inline StatePair prepare_states(const CellSolution& cell, const GridSpec& strip) {
  StatePair s;
  s.c0 = cell.energy;
  s.v0 = materialize_periodic(cell.minimizer, strip);
  s.w0 = s.v0;
  for (double& v : s.w0.values) v += 1.0;
  s.rho_bar = tile_distance(s.w0, s.v0, strip.tile_lo);
  return s;
}

// ---------------------------------------------------------------------------
// Transition spec.

/// Constraint data for a 2K-transition class: marks m, lengths l, radii rho.
struct TransitionSpec {
  int K = 0;
  std::vector<int> m;        // size 4K
  std::vector<int> l;        // size 4K, each >= 1
  std::vector<double> rho;   // size 4K, each in (0, rho_bar)
  int alphabet_size = 1;

  /// One tile-wise L2-ball constraint.
  struct TileConstraint {
    int index;      // which of the 4K constraint families
    int tile;       // tile the ball lives on
    bool to_upper;  // distance measured to w0 (true) or v0 (false)
    double radius;
  };

  void validate(double rho_bar) const {
    if (K < 0) throw ConfigError("spec: K must be nonnegative");
    size_t need = static_cast<size_t>(4 * K);
    if (m.size() != need || l.size() != need || rho.size() != need)
      throw ConfigError("spec: m, l, rho must each have 4K entries");
    for (int v : l)
      if (v < 1) throw ConfigError("spec: every l entry must be >= 1");
    for (double r : rho)
      if (!(r > 0.0 && r < rho_bar))
        throw ConfigError("spec: every rho must lie strictly between 0 and the pair distance");
    std::set<double> distinct(rho.begin(), rho.end());
    if (alphabet_size < 1 || static_cast<int>(distinct.size()) > alphabet_size)
      throw ConfigError("spec: more distinct rho values than alphabet_size allows");
    // Ordering chain with every consecutive pair separated by more than 3.
    for (int j = 0; j < K; ++j) {
      int b = 4 * j;
      std::vector<long> chain = {m[b], m[b + 1],
                                 static_cast<long>(m[b + 1]) + l[b + 1] + l[b + 2], m[b + 2],
                                 m[b + 3]};
      if (j + 1 < K) {
        chain.push_back(static_cast<long>(m[b + 3]) + l[b + 3] + l[b + 4]);
        chain.push_back(m[b + 4]);
      }
      for (size_t i = 0; i + 1 < chain.size(); ++i)
        if (chain[i + 1] - chain[i] <= 3)
          throw ConfigError("spec: ordering chain entries must be separated by more than 3 (block " +
                            std::to_string(j) + ")");
    }
  }

  std::vector<TileConstraint> tile_constraints() const {
    std::vector<TileConstraint> out;
    for (int j = 0; j < K; ++j) {
      int b = 4 * j;
      for (int t = m[b] - l[b]; t <= m[b] - 1; ++t)
        out.push_back({b, t, false, rho[b]});
      for (int t = m[b + 1]; t <= m[b + 1] + l[b + 1] - 1; ++t)
        out.push_back({b + 1, t, true, rho[b + 1]});
      for (int t = m[b + 2] - l[b + 2]; t <= m[b + 2] - 1; ++t)
        out.push_back({b + 2, t, true, rho[b + 2]});
      for (int t = m[b + 3]; t <= m[b + 3] + l[b + 3] - 1; ++t)
        out.push_back({b + 3, t, false, rho[b + 3]});
    }
    return out;
  }

  int first_constrained_tile() const { return m.front() - l.front(); }
  int last_constrained_tile() const { return m.back() + l.back() - 1; }
};

// ---------------------------------------------------------------------------
// Reports and options.

struct ConstraintMargin {
  int constraint = 0;
  int tile = 0;
  double slack = 0.0;  // rho_i - measured distance
};

struct SolveReport {
  std::string kind;  // "hetero_up", "hetero_down", "multi"
  Field minimizer;
  double objective = 0.0;  // renormalized strip energy (c1 or b_{m,l})
  std::vector<ConstraintMargin> margins;
  double pde_residual = 0.0;
  long iterations = 0;
  bool converged = false;
  bool hit_budget = false;
  bool strictly_inactive = true;  // margin audit outcome (vacuous without constraints)
  double c0 = 0.0;
  double residual_tol = 0.0;
  std::vector<double> trace;  // downsampled objective trace
};

struct SolveOptions {
  double residual_tol = 0.0;  // 0: use 1e-8 * N
  long max_iters = 400000;
  long budget = 0;  // 0 = run to convergence; otherwise stop for checkpointing
  // Logistic rate of the initial profile. Gentler than the true decay so the
  // guess (and the converged iterate's tails) stay strictly inside the state
  // interval at double precision across desk-scale strips.
  double guess_rate = 1.5;
  double penalty_mu0 = 10.0;
  double penalty_growth = 10.0;
  int penalty_rounds = 8;
  double feas_tol = 1e-9;
  double margin_factor = 1e-4;  // strict-inactivity threshold on rho_bar
  bool check_admissibility = true;
  double admissibility_margin = 1e-3;
  int pad = 10;

  double tol_for(const GridSpec& g) const {
    return residual_tol > 0 ? residual_tol : 1e-8 * g.points_per_unit;
  }
};

/// Continuation state for budgeted (checkpointed) solves.
struct SolveHandle {
  bool active = false;
  Field x;
  MinimizeSeed seed;
  int round = 0;        // penalty round for multitransition solves
  long iters_total = 0; // iterations across completed rounds
};

namespace detail {

inline std::vector<double> downsample(const std::vector<double>& t, size_t cap = 1000) {
  if (t.size() <= cap) return t;
  std::vector<double> out;
  size_t stride = (t.size() + cap - 1) / cap;
  for (size_t i = 0; i < t.size(); i += stride) out.push_back(t[i]);
  if (out.empty() || out.back() != t.back()) out.push_back(t.back());
  return out;
}

inline double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Heteroclinic solve.

enum class HeteroDirection { rise, fall };  // rise: v0 at the left end, w0 at the right

/// Minimizes the renormalized strip energy over the order interval [v0, w0]
/// with Dirichlet planes matching the asymptotic states. The iterate is
/// clipped back into [v0, w0] after every step.
inline SolveReport solve_heteroclinic(const Potential& pot, const GridSpec& grid,
                                      HeteroDirection dir, const StatePair& states,
                                      const SolveOptions& opts = {},
                                      SolveHandle* handle = nullptr) {
  grid.validate();
  if (grid.span() < 8)
    throw ConfigError("heteroclinic solve needs a strip of at least 8 tiles");
  if (states.v0.grid != grid) throw ShapeError("states live on a different grid");

  const double tol = opts.tol_for(grid);
  std::vector<std::uint8_t> frozen = end_plane_mask(grid);

  Field x0(grid);
  if (handle && handle->active) {
    x0 = handle->x;
  } else {
    // Transition placement: gaps to the lower state survive into the
    // denormal range, but gaps to the upper state vanish below ~1e-16, so
    // the near-w0 tail must be short enough that 0.5*exp(-lambda*depth)
    // stays representable. lambda is the fastest linearized decay rate at
    // the states.
    double curv = 0.0;
    const double du = 1e-5;
    for (int s = 0; s < 32; ++s) {
      double x = s / 32.0;
      curv = std::max(curv, (pot.du(x, 1.0 + du) - pot.du(x, 1.0 - du)) / (2 * du));
      curv = std::max(curv, (pot.du(x, du) - pot.du(x, -du)) / (2 * du));
    }
    double mid = 0.5 * (grid.tile_lo + grid.tile_hi);
    double xc = mid;
    if (curv > 0.25) {
      double depth = 34.0 / std::sqrt(curv);
      if (dir == HeteroDirection::rise) xc = std::max(mid, grid.tile_hi - depth);
      else xc = std::min(mid, grid.tile_lo + depth);
    }
    // Keep the guess off lattice-symmetric phases: a symmetric start can
    // converge onto the unstable symmetric critical point when the
    // x1-modulation pins interface positions.
    xc += 0.1337;
    int nk = grid.x1_nodes();
    for (int k = 0; k < nk; ++k) {
      double t = opts.guess_rate * (grid.x1_of(k) - xc);
      double s = dir == HeteroDirection::rise ? detail::logistic(t) : detail::logistic(-t);
      for (int t2 = 0; t2 < grid.t_nodes(1); ++t2)
        for (int t3 = 0; t3 < grid.t_nodes(2); ++t3) {
          long i = grid.index(k, t2, t3);
          x0.values[i] = states.v0.values[i] + s * (states.w0.values[i] - states.v0.values[i]);
        }
    }
  }
  {
    // Pin the end planes to the asymptotic states (also for warm starts).
    int last = grid.x1_nodes() - 1;
    const Field& left = dir == HeteroDirection::rise ? states.v0 : states.w0;
    const Field& right = dir == HeteroDirection::rise ? states.w0 : states.v0;
    for (int t2 = 0; t2 < grid.t_nodes(1); ++t2)
      for (int t3 = 0; t3 < grid.t_nodes(2); ++t3) {
        x0.values[grid.index(0, t2, t3)] = left.at(0, t2, t3);
        x0.values[grid.index(last, t2, t3)] = right.at(last, t2, t3);
      }
  }

  MinimizeProblem prob;
  Field scratch(grid);
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
  {
    assemble_gradient(x0, pot, eg);
    prob.metric = eg.metric;
  }
  prob.frozen = frozen;
  prob.lower = &states.v0.values;
  prob.upper = &states.w0.values;

  MinimizeOptions mo;
  mo.residual_tol = tol;
  mo.max_iters = opts.max_iters;
  mo.budget = opts.budget;
  mo.step0 = 0.1 * grid.h() * grid.h();
  mo.polish_step0 = stable_polish_step(pot, grid);

  MinimizeResult r = minimize(prob, x0.values, mo,
                              handle && handle->active ? &handle->seed : nullptr);

  SolveReport rep;
  rep.kind = dir == HeteroDirection::rise ? "hetero_up" : "hetero_down";
  rep.minimizer.grid = grid;
  rep.minimizer.values = r.x;
  rep.minimizer.valid_lo = grid.tile_lo;
  rep.minimizer.valid_hi = grid.tile_hi;
  rep.c0 = states.c0;
  rep.objective = renormalized_strip_energy(rep.minimizer, pot, states.c0);
  rep.iterations = r.iterations;
  rep.converged = r.converged;
  rep.hit_budget = r.hit_budget;
  rep.residual_tol = tol;
  rep.pde_residual = pde_residual_max(rep.minimizer, pot, frozen);
  rep.trace = detail::downsample(r.trace);

  if (handle) {
    handle->active = r.hit_budget;
    if (r.hit_budget) {
      handle->x = rep.minimizer;
      handle->seed = r.seed;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Initial guess for the multitransition solve.

namespace detail {

/// x1 position (plane average) where the profile crosses the mid level
/// between the states.
inline double mid_crossing(const Field& u, const StatePair& st, bool rising) {
  const GridSpec& g = u.grid;
  int nk = g.x1_nodes();
  long plane = g.plane_nodes();
  auto avg = [&](int k) {
    double s = 0.0;
    long base = g.index(k);
    for (long t = 0; t < plane; ++t)
      s += (u.values[base + t] - st.v0.values[base + t]) /
           (st.w0.values[base + t] - st.v0.values[base + t]);
    return s / static_cast<double>(plane);
  };
  double prev = avg(0);
  for (int k = 1; k < nk; ++k) {
    double cur = avg(k);
    bool crossed = rising ? (prev < 0.5 && cur >= 0.5) : (prev > 0.5 && cur <= 0.5);
    if (crossed) {
      double f = (0.5 - prev) / (cur - prev);
      return g.x1_of(k - 1) + f * g.h();
    }
    prev = cur;
  }
  return 0.5 * (g.tile_lo + g.tile_hi);
}

}  // namespace detail

/// Piecewise initial guess: flats on the constrained regions, the central
/// two-tile core of the corresponding heteroclinic in each transition gap,
/// one-tile linear blends between core and flats. Feasible by construction
/// (every constraint tile is an exact flat).
inline Field build_initial_guess(const GridSpec& grid, const TransitionSpec& spec,
                                 const StatePair& states, const SolveReport& up,
                                 const SolveReport& down) {
  if (spec.K == 0) return states.v0;
  Field out = states.v0;
  const int N = grid.points_per_unit;
  const int nk = grid.x1_nodes();
  long plane = grid.plane_nodes();

  struct Insert {
    double center;        // x1 of the transition midpoint
    const Field* profile; // heteroclinic report field
    const Field* flat_lo; // state left of the blend
    const Field* flat_hi; // state right of the blend
    int shift_nodes;      // profile node offset
  };
  std::vector<Insert> inserts;
  double up_cross = detail::mid_crossing(up.minimizer, states, true);
  double down_cross = detail::mid_crossing(down.minimizer, states, false);
  for (int j = 0; j < spec.K; ++j) {
    int b = 4 * j;
    double cu = 0.5 * (spec.m[b] + spec.m[b + 1]);
    double cd = 0.5 * (spec.m[b + 2] + spec.m[b + 3]);
    if (cu - 2.0 < spec.m[b] || cu + 2.0 > spec.m[b + 1] || cd - 2.0 < spec.m[b + 2] ||
        cd + 2.0 > spec.m[b + 3])
      throw ConfigError("spec: transition gaps are too narrow for the guess layout");
    if (cu - 2.0 < grid.tile_lo || cd + 2.0 > grid.tile_hi)
      throw ConfigError("spec: transition region falls outside the strip");
    Insert iu{cu, &up.minimizer, &states.v0, &states.w0, 0};
    iu.shift_nodes = static_cast<int>(std::lround((cu - up_cross) * N));
    Insert id{cd, &down.minimizer, &states.w0, &states.v0, 0};
    id.shift_nodes = static_cast<int>(std::lround((cd - down_cross) * N));
    inserts.push_back(iu);
    inserts.push_back(id);
  }

  // Flat value between transitions alternates v0, w0, v0, ...
  for (int k = 0; k < nk; ++k) {
    double x = grid.x1_of(k);
    const Field* flat = &states.v0;
    const Insert* active = nullptr;
    for (const Insert& in : inserts) {
      if (x >= in.center - 2.0 && x <= in.center + 2.0) {
        active = &in;
        break;
      }
      if (x > in.center) flat = in.flat_hi;
    }
    long base = grid.index(k);
    if (!active) {
      for (long t = 0; t < plane; ++t) out.values[base + t] = flat->values[base + t];
      continue;
    }
    const GridSpec& pg = active->profile->grid;
    int kp = k + (grid.tile_lo - pg.tile_lo) * N - active->shift_nodes;
    kp = std::min(std::max(kp, 0), pg.x1_nodes() - 1);
    long pbase = pg.index(kp);
    double d = x - active->center;
    double wp;  // weight of the profile
    if (d <= -1.0) wp = std::min(1.0, 2.0 + d);        // left blend on [c-2, c-1]
    else if (d >= 1.0) wp = std::min(1.0, 2.0 - d);    // right blend on [c+1, c+2]
    else wp = 1.0;                                     // core
    const Field* outer = d < 0 ? active->flat_lo : active->flat_hi;
    for (long t = 0; t < plane; ++t)
      out.values[base + t] =
          wp * active->profile->values[pbase + t] + (1.0 - wp) * outer->values[base + t];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Constrained 2K-transition solve.

namespace detail {

struct TileQuad {
  int k_lo = 0;  // first x1 node plane of the tile
  std::vector<double> w;  // per-plane trapezoid weight times h^n
};

inline TileQuad tile_quad(const GridSpec& g, int tile) {
  TileQuad q;
  int N = g.points_per_unit;
  q.k_lo = (tile - g.tile_lo) * N;
  q.w.resize(static_cast<size_t>(N) + 1);
  double hn = std::pow(g.h(), g.dim);
  for (int i = 0; i <= N; ++i) q.w[static_cast<size_t>(i)] = (i == 0 || i == N) ? 0.5 * hn : hn;
  return q;
}

}  // namespace detail

/// Checks the chosen radii against the tile distances sampled from the
/// heteroclinic minimizers (the margin surrogate for the admissibility of
/// each rho). Throws ConfigError on a violation.
inline void check_rho_admissibility(const TransitionSpec& spec, const StatePair& het_states,
                                    const SolveReport& up, const SolveReport& down,
                                    double margin) {
  auto samples = [&](const Field& u, const Field& phi) {
    std::vector<double> s;
    for (int i = u.grid.tile_lo; i < u.grid.tile_hi; ++i)
      s.push_back(tile_distance(u, phi, i));
    return s;
  };
  std::vector<double> up_v = samples(up.minimizer, het_states.v0);
  std::vector<double> up_w = samples(up.minimizer, het_states.w0);
  std::vector<double> dn_w = samples(down.minimizer, het_states.w0);
  std::vector<double> dn_v = samples(down.minimizer, het_states.v0);
  auto check = [&](double rho, const std::vector<double>& forbidden, int index) {
    for (double f : forbidden)
      if (std::abs(rho - f) <= margin)
        throw ConfigError("spec: rho[" + std::to_string(index) + "]=" + std::to_string(rho) +
                          " is within the admissibility margin of a sampled forbidden value");
  };
  for (int j = 0; j < spec.K; ++j) {
    int b = 4 * j;
    check(spec.rho[b], up_v, b);
    check(spec.rho[b + 1], up_w, b + 1);
    check(spec.rho[b + 2], dn_w, b + 2);
    check(spec.rho[b + 3], dn_v, b + 3);
  }
}

/// Minimizes the renormalized strip energy subject to the 4K tile-wise
/// L2-ball constraint families via a quadratic-hinge penalty with increasing
/// weight, then audits that every constraint is strictly inactive.
inline SolveReport solve_multitransition(const Potential& pot, const GridSpec& grid,
                                         const TransitionSpec& spec, const StatePair& states,
                                         const SolveReport& up, const SolveReport& down,
                                         const SolveOptions& opts = {},
                                         SolveHandle* handle = nullptr,
                                         const Field* warm_start = nullptr) {
  grid.validate();
  if (states.v0.grid != grid) throw ShapeError("states live on a different grid");
  spec.validate(states.rho_bar);
  if (spec.K > 0) {
    if (spec.first_constrained_tile() - grid.tile_lo < opts.pad ||
        grid.tile_hi - (spec.last_constrained_tile() + 1) < opts.pad)
      throw ConfigError("strip must extend at least " + std::to_string(opts.pad) +
                        " tiles beyond the outermost constraint regions");
    if (opts.check_admissibility) {
      StatePair het_states;  // states rebuilt on the heteroclinic grid
      het_states.c0 = states.c0;
      het_states.rho_bar = states.rho_bar;
      // v0 is 1-periodic, so a direct periodic rebuild on the hetero grid works.
      GridSpec hg = up.minimizer.grid;
      Field torus(torus_grid(hg.dim, hg.points_per_unit));
      for (size_t i = 0; i < torus.values.size(); ++i) torus.values[i] = states.v0.values[i];
      het_states.v0 = materialize_periodic(torus, hg);
      het_states.w0 = het_states.v0;
      for (double& v : het_states.w0.values) v += 1.0;
      check_rho_admissibility(spec, het_states, up, down, opts.admissibility_margin);
    }
  }

  const double tol = opts.tol_for(grid);
  std::vector<std::uint8_t> frozen = end_plane_mask(grid);

  // Precompute constraint quadratures.
  std::vector<TransitionSpec::TileConstraint> cons = spec.tile_constraints();
  for (const auto& c : cons)
    if (!grid.valid_tile(c.tile))
      throw ConfigError("constraint tile " + std::to_string(c.tile) + " outside the strip");
  std::vector<detail::TileQuad> quads;
  quads.reserve(cons.size());
  for (const auto& c : cons) quads.push_back(detail::tile_quad(grid, c.tile));

  auto dist_sq = [&](const std::vector<double>& v, size_t ci) {
    const auto& c = cons[ci];
    const auto& q = quads[ci];
    const Field& phi = c.to_upper ? states.w0 : states.v0;
    const GridSpec& g = grid;
    long plane = g.plane_nodes();
    double acc = 0.0;
    for (int i = 0; i <= g.points_per_unit; ++i) {
      long base = g.index(q.k_lo + i);
      double pl = 0.0;
      for (long t = 0; t < plane; ++t) {
        double d = v[base + t] - phi.values[base + t];
        pl += d * d;
      }
      acc += q.w[static_cast<size_t>(i)] * pl;
    }
    return acc;
  };

  double mu = opts.penalty_mu0;
  int round = 0;
  if (handle && handle->active) {
    round = handle->round;
    for (int r = 0; r < round; ++r) mu *= opts.penalty_growth;
  }

  Field x0 = (handle && handle->active) ? handle->x
             : (warm_start ? *warm_start : build_initial_guess(grid, spec, states, up, down));

  Field scratch(grid);
  EnergyGradient eg;
  assemble_gradient(x0, pot, eg);
  std::vector<double> metric = eg.metric;

  long total_iters = handle && handle->active ? handle->iters_total : 0;
  std::vector<double> trace;
  bool budget_hit = false;
  MinimizeResult r;
  r.x = x0.values;

  for (; round < opts.penalty_rounds; ++round) {
    MinimizeProblem prob;
    prob.value = [&](const std::vector<double>& v) {
      scratch.values = v;
      double e = strip_energy(scratch, pot);
      for (size_t ci = 0; ci < cons.size(); ++ci) {
        double over = dist_sq(v, ci) - cons[ci].radius * cons[ci].radius;
        if (over > 0.0) e += 0.5 * mu * over * over;
      }
      return e;
    };
    prob.gradient = [&](const std::vector<double>& v, std::vector<double>& out) {
      scratch.values = v;
      assemble_gradient(scratch, pot, eg);
      out = eg.raw;
      for (size_t ci = 0; ci < cons.size(); ++ci) {
        double over = dist_sq(v, ci) - cons[ci].radius * cons[ci].radius;
        if (over <= 0.0) continue;
        const auto& c = cons[ci];
        const auto& q = quads[ci];
        const Field& phi = c.to_upper ? states.w0 : states.v0;
        long plane = grid.plane_nodes();
        double f = mu * over * 2.0;
        for (int i = 0; i <= grid.points_per_unit; ++i) {
          long base = grid.index(q.k_lo + i);
          double wq = q.w[static_cast<size_t>(i)];
          for (long t = 0; t < plane; ++t)
            out[base + t] += f * wq * (v[base + t] - phi.values[base + t]);
        }
      }
    };
    prob.metric = metric;
    prob.frozen = frozen;
    prob.lower = &states.v0.values;
    prob.upper = &states.w0.values;

    MinimizeOptions mo;
    mo.residual_tol = tol;
    mo.max_iters = opts.max_iters;
    mo.step0 = 0.1 * grid.h() * grid.h();
    mo.polish_step0 = stable_polish_step(pot, grid);
    mo.budget = opts.budget;

    MinimizeSeed* seed = (handle && handle->active && round == handle->round)
                             ? &handle->seed
                             : nullptr;
    long entry = seed ? seed->iterations_done : 0;
    r = minimize(prob, r.x, mo, seed);
    trace.insert(trace.end(), r.trace.begin(), r.trace.end());
    total_iters += r.iterations - entry;
    if (r.hit_budget) {
      budget_hit = true;
      break;
    }

    bool feasible = true;
    for (size_t ci = 0; ci < cons.size(); ++ci) {
      double d = std::sqrt(dist_sq(r.x, ci));
      if (d - cons[ci].radius > opts.feas_tol) {
        feasible = false;
        break;
      }
    }
    if (feasible) break;
    mu *= opts.penalty_growth;
    if (round + 1 >= opts.penalty_rounds)
      throw InfeasibleError("constraints still violated after the final penalty round");
  }

  SolveReport rep;
  rep.kind = "multi";
  rep.minimizer.grid = grid;
  rep.minimizer.values = r.x;
  rep.minimizer.valid_lo = grid.tile_lo;
  rep.minimizer.valid_hi = grid.tile_hi;
  rep.c0 = states.c0;
  rep.objective = renormalized_strip_energy(rep.minimizer, pot, states.c0);
  rep.iterations = total_iters;
  rep.converged = r.converged && !budget_hit;
  rep.hit_budget = budget_hit;
  rep.residual_tol = tol;
  rep.pde_residual = pde_residual_max(rep.minimizer, pot, frozen);
  rep.trace = detail::downsample(trace);

  rep.margins.reserve(cons.size());
  double strict_threshold = opts.margin_factor * states.rho_bar;
  for (size_t ci = 0; ci < cons.size(); ++ci) {
    double d = std::sqrt(dist_sq(r.x, ci));
    ConstraintMargin mgn{cons[ci].index, cons[ci].tile, cons[ci].radius - d};
    rep.margins.push_back(mgn);
    if (mgn.slack <= strict_threshold) rep.strictly_inactive = false;
  }

  if (handle) {
    handle->active = budget_hit;
    if (budget_hit) {
      handle->x = rep.minimizer;
      handle->seed = r.seed;
      handle->round = round;
      handle->iters_total = total_iters;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Infinite-transition approximation.

enum class InfiniteMode { right, left, bilateral };

struct InfiniteOptions {
  InfiniteMode mode = InfiniteMode::bilateral;
  std::vector<int> k_list = {1, 2, 3};
  int window_lo = 0;
  int window_hi = -1;  // window_hi < window_lo means: choose automatically
  double tol_shrink = 0.1;
  SolveOptions solve;
};

struct InfiniteRow {
  int K = 0;
  bool has_diff = false;
  double cauchy_diff = 0.0;
  double window_dist_v0 = 0.0;
};

struct InfiniteResult {
  std::vector<SolveReport> reports;
  std::vector<TransitionSpec> specs;
  std::vector<GridSpec> grids;
  std::vector<InfiniteRow> table;
  int window_lo = 0;
  int window_hi = 0;
};

namespace detail {

/// L2 norm of (a - b) over the tile window [wlo, whi]; the fields may live on
/// different strips sharing resolution, the window must lie inside both.
inline double window_diff(const Field& a, const Field& b, int wlo, int whi) {
  if (a.grid.dim != b.grid.dim || a.grid.points_per_unit != b.grid.points_per_unit)
    throw ShapeError("window_diff: resolution mismatch");
  require_tile_range(a.grid, wlo, whi);
  require_tile_range(b.grid, wlo, whi);
  const GridSpec& g = a.grid;
  int N = g.points_per_unit;
  int ka = (wlo - a.grid.tile_lo) * N;
  int kb = (wlo - b.grid.tile_lo) * N;
  int nodes = (whi - wlo + 1) * N;
  double hn = std::pow(g.h(), g.dim);
  long plane = g.plane_nodes();
  double acc = 0.0;
  for (int i = 0; i <= nodes; ++i) {
    double w = (i == 0 || i == nodes) ? 0.5 : 1.0;
    long abase = a.grid.index(ka + i);
    long bbase = b.grid.index(kb + i);
    double pl = 0.0;
    for (long t = 0; t < plane; ++t) {
      double d = a.values[abase + t] - b.values[bbase + t];
      pl += d * d;
    }
    acc += w * pl * hn;
  }
  return std::sqrt(acc);
}

}  // namespace detail

/// Replicates the base block pattern count times in the given mode. The
/// replication offset keeps every inter-block separation above 3.
inline TransitionSpec replicate_spec(const TransitionSpec& base, InfiniteMode mode, int count) {
  if (base.K < 1) throw ConfigError("replication needs a base block with K >= 1");
  long span = base.m.back() - base.m.front();
  long period = span + base.l.back() + base.l.front() + 4;
  std::vector<long> offsets;
  if (mode == InfiniteMode::right) {
    for (int i = 0; i < count; ++i) offsets.push_back(i * period);
  } else if (mode == InfiniteMode::left) {
    for (int i = 0; i < count; ++i) offsets.push_back(-static_cast<long>(i) * period);
  } else {
    for (int i = 0; i < count; ++i) {
      long mag = (i + 1) / 2;
      offsets.push_back(i % 2 == 1 ? mag * period : -mag * period);
    }
  }
  std::sort(offsets.begin(), offsets.end());
  TransitionSpec out;
  out.K = base.K * count;
  out.alphabet_size = base.alphabet_size;
  for (long off : offsets)
    for (int i = 0; i < 4 * base.K; ++i) {
      out.m.push_back(static_cast<int>(base.m[static_cast<size_t>(i)] + off));
      out.l.push_back(base.l[static_cast<size_t>(i)]);
      out.rho.push_back(base.rho[static_cast<size_t>(i)]);
    }
  return out;
}

/// Solves the replicated problem for each K in k_list (warm-starting each
/// solve from the previous solution and tightening the residual tolerance),
/// and records the Cauchy differences over the fixed window.
inline InfiniteResult approximate_infinite(
    const Potential& pot, const GridSpec& base_grid, const TransitionSpec& base_spec,
    const CellSolution& cell, const SolveReport& up, const SolveReport& down,
    const InfiniteOptions& iopts,
    const std::function<void(int, const SolveReport&, const TransitionSpec&, const GridSpec&)>&
        on_report = nullptr,
    int start_index = 0, const Field* resume_prev = nullptr) {
  if (base_spec.K < 1) throw ConfigError("infinite mode needs a base block with K >= 1");
  {
    std::set<double> distinct(base_spec.rho.begin(), base_spec.rho.end());
    if (static_cast<int>(distinct.size()) != base_spec.alphabet_size)
      throw ConfigError("infinite mode requires exactly alphabet_size distinct rho values");
  }
  for (size_t i = 0; i + 1 < iopts.k_list.size(); ++i)
    if (iopts.k_list[i + 1] <= iopts.k_list[i])
      throw ConfigError("K list must be strictly increasing");

  int pad_left = base_spec.first_constrained_tile() - base_grid.tile_lo;
  int pad_right = base_grid.tile_hi - (base_spec.last_constrained_tile() + 1);
  if (pad_left < 1 || pad_right < 1)
    throw ConfigError("base grid does not contain the base block with padding");

  // Window selection and validation.
  int wlo = iopts.window_lo, whi = iopts.window_hi;
  if (whi < wlo) {
    if (iopts.mode == InfiniteMode::bilateral) {
      int mid = (base_spec.first_constrained_tile() + base_spec.last_constrained_tile()) / 2;
      wlo = mid - 2;
      whi = mid + 2;
    } else if (iopts.mode == InfiniteMode::right) {
      wlo = base_grid.tile_lo + 1;
      whi = wlo + 4;
    } else {
      whi = base_grid.tile_hi - 2;
      wlo = whi - 4;
    }
  }

  InfiniteResult res;
  res.window_lo = wlo;
  res.window_hi = whi;

  const Field* prev = resume_prev;
  Field prev_store;
  for (size_t idx = 0; idx < iopts.k_list.size(); ++idx) {
    int count = iopts.k_list[static_cast<size_t>(idx)];
    TransitionSpec spec = replicate_spec(base_spec, iopts.mode, count);
    GridSpec grid = base_grid;
    grid.tile_lo = spec.first_constrained_tile() - pad_left;
    grid.tile_hi = spec.last_constrained_tile() + 1 + pad_right;

    // The window must not overlap any added block; in the one-sided modes it
    // must sit strictly left (resp. right) of every block.
    for (int j = 0; j < count; ++j) {
      int flo = spec.m[static_cast<size_t>(4 * base_spec.K * j)] -
                spec.l[static_cast<size_t>(4 * base_spec.K * j)];
      int fhi = spec.m[static_cast<size_t>(4 * base_spec.K * (j + 1) - 1)] +
                spec.l[static_cast<size_t>(4 * base_spec.K * (j + 1) - 1)] - 1;
      bool is_base = flo == base_spec.first_constrained_tile();
      bool overlaps = !(whi < flo || wlo > fhi);
      if (overlaps && (!is_base || iopts.mode != InfiniteMode::bilateral))
        throw ConfigError("window overlaps a transition block");
      if (iopts.mode == InfiniteMode::right && whi >= flo)
        throw ConfigError("right mode requires the window left of every block");
      if (iopts.mode == InfiniteMode::left && wlo <= fhi)
        throw ConfigError("left mode requires the window right of every block");
    }

    StatePair states = prepare_states(cell, grid);
    SolveOptions so = iopts.solve;
    so.residual_tol = so.tol_for(grid) * std::pow(iopts.tol_shrink, static_cast<double>(idx));

    if (static_cast<int>(idx) < start_index) continue;  // phases already done are re-driven by caller

    // Each K is solved from its own deterministic guess; successive solves
    // then differ on the window by their tolerance-dominated convergence
    // error, which the tightening schedule makes strictly decreasing.
    SolveReport rep = solve_multitransition(pot, grid, spec, states, up, down, so);

    InfiniteRow row;
    row.K = count;
    row.window_dist_v0 = window_distance(rep.minimizer, states.v0, wlo, whi);
    if (!res.reports.empty()) {
      row.has_diff = true;
      row.cauchy_diff = detail::window_diff(rep.minimizer, res.reports.back().minimizer, wlo, whi);
    } else if (prev && start_index > 0) {
      row.has_diff = true;
      row.cauchy_diff = detail::window_diff(rep.minimizer, *prev, wlo, whi);
    }
    res.table.push_back(row);
    if (on_report) on_report(static_cast<int>(idx), rep, spec, grid);
    prev_store = rep.minimizer;
    prev = &prev_store;
    res.reports.push_back(std::move(rep));
    res.specs.push_back(spec);
    res.grids.push_back(grid);
  }
  return res;
}

}  // namespace mblab
