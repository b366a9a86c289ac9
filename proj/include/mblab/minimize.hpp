#pragma once

// Shared first-order optimizer: projected gradient descent with a
// Barzilai-Borwein trial step and monotone backtracking (sufficient
// decrease). The descent direction is the metric-scaled gradient, so for
// energy objectives it is the pointwise PDE residual and the stopping rule
// bounds that residual directly.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "errors.hpp"

namespace mblab {

struct MinimizeProblem {
  /// Objective value.
  std::function<double(const std::vector<double>&)> value;
  /// Exact derivative of the objective with respect to each entry.
  std::function<void(const std::vector<double>&, std::vector<double>&)> gradient;
  /// Node quadrature weights; the residual is gradient/metric. Empty = all 1.
  std::vector<double> metric;
  /// Entries held fixed (Dirichlet nodes). Empty = none.
  std::vector<std::uint8_t> frozen;
  /// Optional box bounds applied after every step (and used by the projected
  /// residual stopping rule).
  const std::vector<double>* lower = nullptr;
  const std::vector<double>* upper = nullptr;
  /// Optional custom projection applied after the box clamp.
  std::function<void(std::vector<double>&)> project;
  /// Optional filter applied to the residual before the stopping norm
  /// (used to remove constraint-normal components).
  std::function<void(const std::vector<double>&, std::vector<double>&)> residual_filter;
};

struct MinimizeOptions {
  double residual_tol = 1e-6;
  long max_iters = 500000;
  /// Stop after this many iterations in this call even if not converged
  /// (0 = no budget). Used for checkpointed runs.
  long budget = 0;
  double step0 = 1e-3;
  double step_min = 1e-15;
  double step_max = 1e4;
  double armijo = 1e-4;
  int max_backtracks = 60;
  /// Fixed step for the endgame polish phase; callers that know the problem
  /// stiffness should set it below the stability bound. 0 derives a step
  /// from the Barzilai-Borwein history.
  double polish_step0 = 0.0;
};

/// State needed to continue a run exactly where it stopped.
struct MinimizeSeed {
  std::vector<double> x_prev;
  std::vector<double> g_prev;
  double step = 0.0;
  long iterations_done = 0;
  bool has_prev = false;
  // Endgame state: fixed-step residual polish after the objective has gone
  // flat to double precision.
  bool polishing = false;
  double polish_step = 0.0;
};

struct MinimizeResult {
  std::vector<double> x;
  double value = 0.0;
  double residual_norm = 0.0;
  long iterations = 0;  // cumulative, including seeded iterations
  bool converged = false;
  bool hit_budget = false;
  std::vector<double> trace;  // objective per accepted iteration (this call)
  MinimizeSeed seed;          // state for resuming
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

inline MinimizeResult minimize(const MinimizeProblem& prob, std::vector<double> x0,
                               const MinimizeOptions& opts,
                               const MinimizeSeed* seed = nullptr) {
  const size_t n = x0.size();
  const bool boxed = prob.lower != nullptr && prob.upper != nullptr;
  auto frozen = [&](size_t i) { return !prob.frozen.empty() && prob.frozen[i]; };
  auto metric_of = [&](size_t i) { return prob.metric.empty() ? 1.0 : prob.metric[i]; };

  auto apply_projection = [&](std::vector<double>& x) {
    if (boxed)
      for (size_t i = 0; i < n; ++i)
        x[i] = std::min(std::max(x[i], (*prob.lower)[i]), (*prob.upper)[i]);
    if (prob.project) prob.project(x);
  };

  std::vector<double> x = std::move(x0);
  apply_projection(x);

  std::vector<double> g(n), r(n), xt(n);
  MinimizeResult res;
  res.trace.reserve(256);

  double f = prob.value(x);
  if (!std::isfinite(f)) throw NumericalError("objective is not finite at the start point");
  prob.gradient(x, g);
  res.trace.push_back(f);

  double step = opts.step0;
  std::vector<double> x_prev, g_prev;
  bool has_prev = false;
  long done_before = 0;
  bool polishing = false;
  double polish_step = 0.0;
  if (seed && seed->has_prev) {
    x_prev = seed->x_prev;
    g_prev = seed->g_prev;
    step = seed->step;
    has_prev = true;
  }
  if (seed) {
    done_before = seed->iterations_done;
    polishing = seed->polishing;
    polish_step = seed->polish_step;
  }

  auto residual_and_norm = [&](const std::vector<double>& xc, const std::vector<double>& gc,
                               std::vector<double>& rc) {
    for (size_t i = 0; i < n; ++i) rc[i] = frozen(i) ? 0.0 : gc[i] / metric_of(i);
    if (prob.residual_filter) prob.residual_filter(xc, rc);
    double nrm = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double ri = rc[i];
      if (boxed) {
        // At an active bound only the inward part counts.
        if (xc[i] <= (*prob.lower)[i] && ri > 0.0) ri = 0.0;
        if (xc[i] >= (*prob.upper)[i] && ri < 0.0) ri = 0.0;
      }
      nrm = std::max(nrm, std::abs(ri));
    }
    return nrm;
  };

  long it = 0;
  int stalled = 0;
  double last_accepted_step = opts.step0;
  double bb_floor = std::numeric_limits<double>::infinity();
  double polish_ref = std::numeric_limits<double>::infinity();

  auto advance = [&](double used_step) {
    for (size_t i = 0; i < n; ++i) xt[i] = frozen(i) ? x[i] : x[i] - used_step * r[i];
    apply_projection(xt);
  };
  auto commit = [&](double ft) {
    x_prev.swap(x);
    g_prev.swap(g);
    x.swap(xt);
    xt.resize(n);
    g.assign(n, 0.0);
    prob.gradient(x, g);
    has_prev = true;
    f = ft;
    res.trace.push_back(f);
  };
  auto enter_polish = [&] {
    polishing = true;
    if (opts.polish_step0 > 0.0) {
      polish_step = opts.polish_step0;
    } else {
      double base = std::min(bb_floor, last_accepted_step);
      if (!std::isfinite(base)) base = step;
      polish_step = 0.5 * base;
    }
    polish_ref = res.residual_norm;
  };

  for (; it < opts.max_iters - done_before; ++it) {
    res.residual_norm = residual_and_norm(x, g, r);
    if (res.residual_norm <= opts.residual_tol) {
      res.converged = true;
      break;
    }
    if (opts.budget > 0 && it >= opts.budget) {
      res.hit_budget = true;
      break;
    }
    if (!polishing && stalled >= 50) enter_polish();

    if (polishing) {
      // Fixed-step descent on the scaled gradient: makes residual progress
      // after the objective has gone flat to double precision. The step is
      // stability-bounded, so the residual contracts; the halving guard only
      // fires if the caller's bound was too optimistic.
      if (res.residual_norm > 100.0 * polish_ref) {
        polish_step *= 0.5;
        polish_ref = res.residual_norm;
      }
      polish_ref = std::min(polish_ref, res.residual_norm);
      if (polish_step < opts.step_min) break;
      advance(polish_step);
      x_prev.swap(x);
      g_prev.swap(g);
      x.swap(xt);
      xt.resize(n);
      g.assign(n, 0.0);
      prob.gradient(x, g);
      has_prev = true;
      continue;
    }

    // Barzilai-Borwein trial step from the last accepted pair.
    if (has_prev) {
      double ss = 0.0, sy = 0.0;
      for (size_t i = 0; i < n; ++i) {
        double s = x[i] - x_prev[i];
        double y = g[i] - g_prev[i];
        ss += s * s;
        sy += s * y;
      }
      if (sy > 0.0 && ss > 0.0) {
        step = ss / sy;
        bb_floor = std::min(bb_floor, step);
      } else {
        step = std::min(step * 2.0, opts.step_max);
      }
    }
    step = std::min(std::max(step, opts.step_min), opts.step_max);

    double ft = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
      advance(step);
      ft = prob.value(xt);
      if (!std::isfinite(ft)) throw NumericalError("objective became non-finite");
      double decrement = 0.0;
      for (size_t i = 0; i < n; ++i) decrement += g[i] * (x[i] - xt[i]);
      if (ft <= f - opts.armijo * std::max(decrement, 0.0) &&
          (decrement > 0.0 ? true : ft < f)) {
        accepted = true;
        break;
      }
      step *= 0.5;
      if (step < opts.step_min) break;
    }
    if (!accepted) {
      // Objective comparisons have hit the precision floor; fall back to the
      // fixed-step endgame.
      enter_polish();
      if (polish_step < opts.step_min) {
        res.converged = res.residual_norm <= 10.0 * opts.residual_tol;
        break;
      }
      continue;
    }
    last_accepted_step = step;

    if (f - ft <= 8.0 * 2.220446049250313e-16 * (1.0 + std::abs(f))) ++stalled;
    else stalled = 0;

    commit(ft);
  }
  if (it >= opts.max_iters - done_before && !res.converged) {
    res.residual_norm = residual_and_norm(x, g, r);
    res.converged = res.residual_norm <= opts.residual_tol;
  }

  if (polishing) {
    f = prob.value(x);
    res.trace.push_back(f);
  }
  res.value = f;
  res.iterations = done_before + it;
  res.seed.has_prev = has_prev;
  if (has_prev) {
    res.seed.x_prev = x_prev;
    res.seed.g_prev = g_prev;
  }
  res.seed.step = step;
  res.seed.iterations_done = res.iterations;
  res.seed.polishing = polishing;
  res.seed.polish_step = polish_step;
  res.x = std::move(x);
  return res;
}

}  // namespace mblab
