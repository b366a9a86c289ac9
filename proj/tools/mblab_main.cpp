// mblab command-line front end: cell / hetero / multi / infinite / verify /
// report / resume. One command is one process; artifacts land in the run
// directory and carry the config hash.

#include <cstdio>
#include <cstdlib>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mblab/artifacts.hpp"
#include "mblab/config.hpp"
#include "mblab/energy.hpp"
#include "mblab/solver.hpp"
#include "mblab/verify.hpp"

namespace {

using namespace mblab;

/// Raised when an iteration budget runs out mid-solve; the checkpoint is
/// already on disk.
struct IncompleteRun : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Budget {
  bool limited = false;
  long remaining = 0;

  long chunk(long checkpoint_every) const {
    long c = checkpoint_every > 0 ? checkpoint_every : 2000;
    if (limited) c = std::min(c, remaining);
    return c;
  }
};

struct Ctx {
  RunConfig cfg;
  RunDir rd;
  Potential pot;
  Budget budget;

  Ctx(RunConfig c, const std::string& out)
      : cfg(std::move(c)), rd(out, config_hash(cfg)), pot(cfg.potential()) {
    budget.limited = cfg.budget_iters > 0;
    budget.remaining = cfg.budget_iters;
    std::ofstream cf(rd.path("config.txt"), std::ios::trunc);
    cf << canonical_config_text(cfg);
  }
};

void print_json_error(const std::string& kind, const std::string& message) {
  jsonw::Writer w;
  w.begin_object();
  w.kv("error", kind);
  w.kv("message", message);
  w.end_object();
  std::cerr << w.str() << std::endl;
}

CellSolution run_cell(Ctx& ctx) {
  CellOptions co;
  co.seed = ctx.cfg.seed;
  if (ctx.cfg.gtol > 0) co.residual_tol = ctx.cfg.gtol;
  CellSolution cell = solve_cell_problem(ctx.pot, ctx.cfg.grid(), co);
  return cell;
}

/// Runs (or resumes, or loads) one heteroclinic phase with chunked
/// checkpointing.
SolveReport drive_hetero(Ctx& ctx, const std::string& phase, HeteroDirection dir,
                         const GridSpec& grid, const StatePair& states) {
  if (ctx.rd.has(phase + ".json") && !ctx.rd.has(phase + ".ckpt.json"))
    return load_report(ctx.rd, phase);

  SolveHandle h;
  load_checkpoint(ctx.rd, phase, ctx.pot, h);
  SolveOptions so = ctx.cfg.solve_options();
  while (true) {
    long before = h.active ? h.seed.iterations_done : 0;
    if (ctx.budget.limited && ctx.budget.remaining <= 0) {
      if (h.active) save_checkpoint(ctx.rd, phase, h);
      throw IncompleteRun("iteration budget exhausted in phase " + phase);
    }
    so.budget = ctx.budget.chunk(ctx.cfg.checkpoint_every);
    SolveReport rep = solve_heteroclinic(ctx.pot, grid, dir, states, so, &h);
    long used = (rep.hit_budget ? h.seed.iterations_done : rep.iterations) - before;
    if (ctx.budget.limited) ctx.budget.remaining -= used;
    if (!rep.hit_budget) {
      clear_checkpoint(ctx.rd, phase);
      store_report(ctx.rd, phase, rep);
      if (!rep.converged)
        throw ConvergenceError(phase + " did not converge", rep.objective, rep.iterations);
      return rep;
    }
    save_checkpoint(ctx.rd, phase, h);
  }
}

SolveReport drive_multi(Ctx& ctx, const std::string& phase, const GridSpec& grid,
                        const TransitionSpec& spec, const StatePair& states,
                        const SolveReport& up, const SolveReport& down,
                        const Field* warm = nullptr, double tol_override = 0.0) {
  if (ctx.rd.has(phase + ".json") && !ctx.rd.has(phase + ".ckpt.json"))
    return load_report(ctx.rd, phase);

  SolveHandle h;
  load_checkpoint(ctx.rd, phase, ctx.pot, h);
  SolveOptions so = ctx.cfg.solve_options();
  if (tol_override > 0) so.residual_tol = tol_override;
  while (true) {
    long before = h.active ? h.iters_total : 0;
    if (ctx.budget.limited && ctx.budget.remaining <= 0) {
      if (h.active) save_checkpoint(ctx.rd, phase, h);
      throw IncompleteRun("iteration budget exhausted in phase " + phase);
    }
    so.budget = ctx.budget.chunk(ctx.cfg.checkpoint_every);
    SolveReport rep = solve_multitransition(ctx.pot, grid, spec, states, up, down, so, &h, warm);
    long used = (rep.hit_budget ? h.iters_total : rep.iterations) - before;
    if (ctx.budget.limited) ctx.budget.remaining -= used;
    if (!rep.hit_budget) {
      clear_checkpoint(ctx.rd, phase);
      store_report(ctx.rd, phase, rep);
      if (!rep.converged)
        throw ConvergenceError(phase + " did not converge", rep.objective, rep.iterations);
      return rep;
    }
    save_checkpoint(ctx.rd, phase, h);
  }
}

int cmd_cell(Ctx& ctx) {
  write_state(ctx.rd, "cell");
  CellSolution cell = run_cell(ctx);
  dump_field(cell.minimizer, ctx.rd.path("cell_minimizer"), ctx.rd.config_hash);
  jsonw::Writer w;
  w.begin_object();
  w.kv("c0", cell.energy);
  w.kv("iterations", cell.iterations);
  w.kv("converged", cell.converged);
  w.kv("config_hash", ctx.rd.config_hash);
  w.end_object();
  std::ofstream out(ctx.rd.path("cell.json"), std::ios::trunc);
  out << w.str() << "\n";
  std::printf("c0 = %.12g (%ld iterations)\n", cell.energy, cell.iterations);
  return 0;
}

int cmd_hetero(Ctx& ctx) {
  write_state(ctx.rd, "hetero");
  CellSolution cell = run_cell(ctx);
  GridSpec hg = ctx.cfg.hetero_grid();
  StatePair states = prepare_states(cell, hg);
  SolveReport up = drive_hetero(ctx, "hetero_up", HeteroDirection::rise, hg, states);
  SolveReport down = drive_hetero(ctx, "hetero_down", HeteroDirection::fall, hg, states);
  std::printf("c1(v0,w0) = %.12g   c1(w0,v0) = %.12g   sum = %.12g\n", up.objective,
              down.objective, up.objective + down.objective);
  return 0;
}

int cmd_multi(Ctx& ctx) {
  write_state(ctx.rd, "multi");
  CellSolution cell = run_cell(ctx);
  GridSpec hg = ctx.cfg.hetero_grid();
  StatePair het_states = prepare_states(cell, hg);
  SolveReport up = drive_hetero(ctx, "hetero_up", HeteroDirection::rise, hg, het_states);
  SolveReport down = drive_hetero(ctx, "hetero_down", HeteroDirection::fall, hg, het_states);

  GridSpec grid = ctx.cfg.grid();
  StatePair states = prepare_states(cell, grid);
  TransitionSpec spec = ctx.cfg.spec();
  SolveReport multi = drive_multi(ctx, "multi", grid, spec, states, up, down);

  EnergyLedger led = build_ledger(multi.minimizer, ctx.pot, states.c0);
  write_ledger(led, ctx.rd, "multi_ledger");

  double min_slack = std::numeric_limits<double>::infinity();
  for (const auto& m : multi.margins) min_slack = std::min(min_slack, m.slack);
  std::printf("b = %.12g   min_margin = %.6g   pde_residual = %.3g   strictly_inactive = %s\n",
              multi.objective, min_slack, multi.pde_residual,
              multi.strictly_inactive ? "yes" : "no");
  return 0;
}

int cmd_infinite(Ctx& ctx) {
  write_state(ctx.rd, "infinite");
  CellSolution cell = run_cell(ctx);
  GridSpec hg = ctx.cfg.hetero_grid();
  StatePair het_states = prepare_states(cell, hg);
  SolveReport up = drive_hetero(ctx, "hetero_up", HeteroDirection::rise, hg, het_states);
  SolveReport down = drive_hetero(ctx, "hetero_down", HeteroDirection::fall, hg, het_states);

  InfiniteOptions io = ctx.cfg.infinite_options();

  // Phase-level resume: completed K solves are reloaded, the sweep restarts
  // after the last one.
  int start_index = 0;
  Field prev;
  const Field* prev_ptr = nullptr;
  for (size_t i = 0; i < io.k_list.size(); ++i) {
    std::string phase = "infinite_k" + std::to_string(io.k_list[i]);
    if (ctx.rd.has(phase + ".json") && !ctx.rd.has(phase + ".ckpt.json")) {
      prev = load_field(ctx.rd.path(phase));
      prev_ptr = &prev;
      start_index = static_cast<int>(i) + 1;
    } else {
      break;
    }
  }

  auto on_report = [&](int idx, const SolveReport& rep, const TransitionSpec&, const GridSpec&) {
    std::string phase = "infinite_k" + std::to_string(io.k_list[static_cast<size_t>(idx)]);
    store_report(ctx.rd, phase, rep);
  };

  InfiniteResult res = approximate_infinite(ctx.pot, ctx.cfg.grid(), ctx.cfg.spec(), cell, up,
                                            down, io, on_report, start_index, prev_ptr);

  // Rebuild the full table when resuming from stored phases.
  if (start_index > 0) {
    InfiniteResult full;
    full.window_lo = res.window_lo;
    full.window_hi = res.window_hi;
    const Field* last = nullptr;
    Field hold_a, hold_b;
    for (size_t i = 0; i < io.k_list.size(); ++i) {
      std::string phase = "infinite_k" + std::to_string(io.k_list[i]);
      hold_b = load_field(ctx.rd.path(phase));
      GridSpec gi = hold_b.grid;
      CellSolution c2 = cell;
      StatePair sp = prepare_states(c2, gi);
      InfiniteRow row;
      row.K = io.k_list[i];
      row.window_dist_v0 = window_distance(hold_b, sp.v0, res.window_lo, res.window_hi);
      if (last) {
        row.has_diff = true;
        row.cauchy_diff = detail::window_diff(hold_b, *last, res.window_lo, res.window_hi);
      }
      full.table.push_back(row);
      hold_a = hold_b;
      last = &hold_a;
    }
    res.table = full.table;
  }

  write_cauchy_csv(res.table, ctx.rd, "cauchy");
  write_infinite_json(res, ctx.rd, "infinite");

  for (const auto& row : res.table) {
    if (row.has_diff)
      std::printf("K = %d   cauchy_diff = %.6g   window_dist_v0 = %.6g\n", row.K,
                  row.cauchy_diff, row.window_dist_v0);
    else
      std::printf("K = %d   window_dist_v0 = %.6g\n", row.K, row.window_dist_v0);
  }
  return 0;
}

int cmd_verify(Ctx& ctx) {
  if (!ctx.rd.has("hetero_up.json") || !ctx.rd.has("hetero_down.json"))
    throw ConfigError("verify needs stored hetero_up/hetero_down reports in the run directory");

  CellSolution cell = run_cell(ctx);
  GridSpec hg = ctx.cfg.hetero_grid();
  StatePair het_states = prepare_states(cell, hg);
  SolveReport up = load_report(ctx.rd, "hetero_up");
  SolveReport down = load_report(ctx.rd, "hetero_down");
  TransitionSpec spec = ctx.cfg.spec();

  std::vector<std::function<CheckResult()>> jobs;
  jobs.push_back([&] { return check_cell_gap(ctx.pot, ctx.cfg.grid()); });
  jobs.push_back([&] {
    HeteroGapOptions hgo;
    hgo.solve = ctx.cfg.solve_options();
    return check_heteroclinic_gap(ctx.pot, het_states, up, hgo);
  });
  jobs.push_back([&] { return check_roundtrip_positive(up.objective, down.objective); });
  if (spec.K > 0)
    jobs.push_back([&] {
      PinnedExcessOptions po;
      po.solve = ctx.cfg.solve_options();
      return check_pinned_excess(ctx.pot, het_states, up, spec.rho[0], spec.rho[1], po);
    });

  SolveReport multi;
  StatePair multi_states;
  bool have_multi = ctx.rd.has("multi.json");
  if (have_multi) {
    multi = load_report(ctx.rd, "multi");
    multi_states = prepare_states(cell, multi.minimizer.grid);
    jobs.push_back([&] {
      return check_decay(multi, multi_states.v0, Side::right,
                         spec.last_constrained_tile() + ctx.cfg.pad);
    });
    jobs.push_back([&] {
      return check_decay(multi, multi_states.v0, Side::left,
                         spec.first_constrained_tile() - ctx.cfg.pad);
    });
    jobs.push_back([&] { return check_gradient_bound(multi, multi_states.v0); });
    jobs.push_back([&] { return check_region_proximity(multi, spec, multi_states); });
    jobs.push_back([&] { return check_local_minimality(multi.minimizer, ctx.pot); });
    jobs.push_back([&] {
      return check_flat_margins(multi, up.objective, down.objective,
                                spec.first_constrained_tile() - 1, ctx.pot, multi_states);
    });
  }

  std::vector<CheckResult> results(jobs.size());
  int threads = ctx.cfg.threads;
  if (const char* env = std::getenv("MBLAB_THREADS"); env && ctx.cfg.threads <= 1)
    threads = std::max(1, std::atoi(env));
  if (threads > 1) {
    std::vector<std::future<CheckResult>> futs;
    futs.reserve(jobs.size());
    for (auto& j : jobs) futs.push_back(std::async(std::launch::async, j));
    for (size_t i = 0; i < futs.size(); ++i) results[i] = futs[i].get();
  } else {
    for (size_t i = 0; i < jobs.size(); ++i) results[i] = jobs[i]();
  }
  for (auto& r : results) r.context = ctx.rd.config_hash;

  write_check_results(results, ctx.rd.path("verify.json"));
  bool hard_fail = false;
  for (const auto& r : results) {
    std::printf("[%s]%s %s", r.pass ? "PASS" : "FAIL", r.heuristic ? " (heuristic)" : "",
                r.id.c_str());
    for (const auto& [k, v] : r.measured) std::printf("  %s=%.6g", k.c_str(), v);
    std::printf("\n");
    if (!r.pass && !r.heuristic) hard_fail = true;
  }
  if (hard_fail) {
    print_json_error("verification", "one or more non-heuristic checks failed");
    return 3;
  }
  return 0;
}

int cmd_report(Ctx& ctx) {
  int written = 0;
  const char* names[] = {"cell_minimizer", "hetero_up", "hetero_down", "multi"};
  double c0 = 0.0;
  if (ctx.rd.has("hetero_up.json")) {
    SolveReport hdr;
    read_report_header(ctx.rd.path("hetero_up.json"), hdr);
    c0 = hdr.c0;
  }
  for (const char* name : names) {
    if (!ctx.rd.has(std::string(name) + ".f64")) continue;
    Field f = load_field(ctx.rd.path(name));
    if (f.grid.dim == 1) {
      write_profile_svg(f, ctx.rd.path(std::string(name) + ".svg"), name, ctx.rd.config_hash);
      ++written;
    }
    if (!f.grid.x1_periodic) {
      EnergyLedger led = build_ledger(f, ctx.pot, c0);
      write_ledger(led, ctx.rd, std::string(name) + "_ledger");
      ++written;
    }
  }
  for (int k : ctx.cfg.k_list) {
    std::string name = "infinite_k" + std::to_string(k);
    if (!ctx.rd.has(name + ".f64")) continue;
    Field f = load_field(ctx.rd.path(name));
    if (f.grid.dim == 1) {
      write_profile_svg(f, ctx.rd.path(name + ".svg"), name, ctx.rd.config_hash);
      ++written;
    }
  }
  std::printf("report: wrote %d artifacts in %s\n", written, ctx.rd.dir.string().c_str());
  return 0;
}

int dispatch(const std::string& command, Ctx& ctx) {
  if (command == "cell") return cmd_cell(ctx);
  if (command == "hetero") return cmd_hetero(ctx);
  if (command == "multi") return cmd_multi(ctx);
  if (command == "infinite") return cmd_infinite(ctx);
  if (command == "verify") return cmd_verify(ctx);
  if (command == "report") return cmd_report(ctx);
  throw ConfigError("unknown command: " + command);
}

int cmd_resume(const std::string& run_dir) {
  fs::path cfg_path = fs::path(run_dir) / "config.txt";
  fs::path state_path = fs::path(run_dir) / "state.json";
  if (!fs::exists(cfg_path) || !fs::exists(state_path))
    throw ConfigError("run directory has no config.txt/state.json to resume from");
  std::ifstream cf(cfg_path);
  std::stringstream ss;
  ss << cf.rdbuf();
  RunConfig cfg = parse_config_text(ss.str());
  std::string command, stored_hash;
  {
    RunDir probe(run_dir);
    if (!read_state(probe, command, stored_hash)) throw ConfigError("unreadable state.json");
  }
  if (config_hash(cfg) != stored_hash)
    throw ConfigError("config hash mismatch: run directory was produced by a different config");
  cfg.budget_iters = 0;  // resume runs to completion
  Ctx ctx(cfg, run_dir);
  return dispatch(command, ctx);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mblab: transition-layer solutions of periodic Allen-Cahn equations on cylinders"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume_dir;
  std::vector<std::string> overrides;
  int threads = 0;
  long seed = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (flat key = value)");
    sub->add_option("--set", overrides, "override, key=value (repeatable)");
    sub->add_option("--out", out_dir, "output run directory");
    sub->add_option("--threads", threads, "worker threads (env MBLAB_THREADS as fallback)");
    sub->add_option("--seed", seed, "random seed override");
  };

  const char* cmds[] = {"cell", "hetero", "multi", "infinite", "verify", "report"};
  for (const char* c : cmds) add_common(app.add_subcommand(c));
  CLI::App* resume = app.add_subcommand("resume", "continue an interrupted run");
  resume->add_option("run_dir", resume_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (resume->parsed()) return cmd_resume(resume_dir);

    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config_file(config_path);
    for (const std::string& ov : overrides) {
      size_t eq = ov.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + ov);
      apply_config_entry(cfg, ov.substr(0, eq), ov.substr(eq + 1));
    }
    if (threads > 0) cfg.threads = threads;
    else if (const char* env = std::getenv("MBLAB_THREADS")) cfg.threads = std::max(1, std::atoi(env));
    if (seed >= 0) cfg.seed = static_cast<unsigned>(seed);

    std::string command = app.get_subcommands().front()->get_name();
    std::string dir = !out_dir.empty() ? out_dir : cfg.out_dir;
    Ctx ctx(cfg, dir);
    return dispatch(command, ctx);
  } catch (const ConfigError& e) {
    print_json_error("config", e.what());
    return 1;
  } catch (const ShapeError& e) {
    print_json_error("config", e.what());
    return 1;
  } catch (const RangeError& e) {
    print_json_error("config", e.what());
    return 1;
  } catch (const IncompleteRun& e) {
    print_json_error("incomplete", e.what());
    return 2;
  } catch (const ConvergenceError& e) {
    print_json_error("convergence", e.what());
    return 2;
  } catch (const InfeasibleError& e) {
    print_json_error("infeasible", e.what());
    return 2;
  } catch (const NumericalError& e) {
    print_json_error("numerical", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_json_error("internal", e.what());
    return 2;
  }
}
