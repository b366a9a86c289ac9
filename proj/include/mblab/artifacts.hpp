#pragma once

// Run-directory artifacts: report JSON (deterministic, 17 significant
// digits), energy ledgers, Cauchy tables, SVG profile plots, field loading,
// and chunked solver checkpoints for resume.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "energy.hpp"
#include "grid.hpp"
#include "jsonw.hpp"
#include "solver.hpp"
#include "verify.hpp"

namespace mblab {

namespace fs = std::filesystem;

struct RunDir {
  fs::path dir;
  std::string config_hash;

  explicit RunDir(const std::string& path, const std::string& hash = "")
      : dir(path), config_hash(hash) {
    fs::create_directories(dir);
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }
  bool has(const std::string& name) const { return fs::exists(dir / name); }
};

// ---------------------------------------------------------------------------
// Field loading (dump_field lives with the grid module).

inline Field load_field(const std::string& base) {
  std::ifstream meta(base + ".meta.json");
  if (!meta) throw ConfigError("missing field sidecar: " + base + ".meta.json");
  nlohmann::json j = nlohmann::json::parse(meta);
  GridSpec g;
  g.dim = j.at("n").get<int>();
  g.tile_lo = j.at("a").get<int>();
  g.tile_hi = j.at("b").get<int>();
  g.points_per_unit = j.at("N").get<int>();
  g.x1_periodic = j.value("x1_periodic", false);
  Field f(g);
  f.valid_lo = j.value("valid_lo", g.tile_lo);
  f.valid_hi = j.value("valid_hi", g.tile_hi);
  std::ifstream bin(base + ".f64", std::ios::binary);
  if (!bin) throw ConfigError("missing field dump: " + base + ".f64");
  bin.read(reinterpret_cast<char*>(f.values.data()),
           static_cast<std::streamsize>(f.values.size() * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(f.values.size() * sizeof(double)))
    throw ConfigError("field dump truncated: " + base + ".f64");
  if (!detail::host_little_endian()) detail::byteswap64(f.values);
  f.check_finite();
  return f;
}

// ---------------------------------------------------------------------------
// Report serialization.

inline void write_report_json(const SolveReport& rep, const std::string& path,
                              const std::string& config_hash) {
  jsonw::Writer w;
  w.begin_object();
  w.kv("kind", rep.kind);
  w.kv("config_hash", config_hash);
  w.kv("objective", rep.objective);
  w.kv("c0", rep.c0);
  w.kv("pde_residual", rep.pde_residual);
  w.kv("residual_tol", rep.residual_tol);
  w.kv("iterations", rep.iterations);
  w.kv("converged", rep.converged);
  w.kv("hit_budget", rep.hit_budget);
  w.kv("strictly_inactive", rep.strictly_inactive);
  w.key("grid");
  w.begin_object();
  w.kv("n", rep.minimizer.grid.dim);
  w.kv("a", rep.minimizer.grid.tile_lo);
  w.kv("b", rep.minimizer.grid.tile_hi);
  w.kv("N", rep.minimizer.grid.points_per_unit);
  w.end_object();
  w.key("margins");
  w.begin_array();
  for (const auto& m : rep.margins) {
    w.begin_object();
    w.kv("constraint", m.constraint);
    w.kv("tile", m.tile);
    w.kv("slack", m.slack);
    w.end_object();
  }
  w.end_array();
  w.key("trace");
  w.begin_array();
  for (double v : rep.trace) w.value(v);
  w.end_array();
  w.end_object();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << w.str() << "\n";
}

inline void read_report_header(const std::string& path, SolveReport& rep,
                               std::string* hash = nullptr) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing report: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  rep.kind = j.value("kind", "");
  rep.objective = j.at("objective").get<double>();
  rep.c0 = j.value("c0", 0.0);
  rep.pde_residual = j.value("pde_residual", 0.0);
  rep.residual_tol = j.value("residual_tol", 0.0);
  rep.iterations = j.value("iterations", 0L);
  rep.converged = j.value("converged", false);
  rep.hit_budget = j.value("hit_budget", false);
  rep.strictly_inactive = j.value("strictly_inactive", true);
  rep.margins.clear();
  for (const auto& m : j.value("margins", nlohmann::json::array()))
    rep.margins.push_back({m.at("constraint").get<int>(), m.at("tile").get<int>(),
                           m.at("slack").get<double>()});
  if (hash) *hash = j.value("config_hash", "");
}

/// Full stored report: header JSON plus the field dump next to it.
inline SolveReport load_report(const RunDir& rd, const std::string& name) {
  SolveReport rep;
  read_report_header(rd.path(name + ".json"), rep);
  rep.minimizer = load_field(rd.path(name));
  return rep;
}

inline void store_report(const RunDir& rd, const std::string& name, const SolveReport& rep) {
  write_report_json(rep, rd.path(name + ".json"), rd.config_hash);
  dump_field(rep.minimizer, rd.path(name), rd.config_hash);
  if (rep.minimizer.grid.dim == 1)
    dump_field_csv(rep.minimizer, rd.path(name + ".csv"), rd.config_hash);
}

// ---------------------------------------------------------------------------
// Ledger and Cauchy-table exports.

inline void write_ledger(const EnergyLedger& led, const RunDir& rd, const std::string& stem) {
  {
    std::ofstream csv(rd.path(stem + ".csv"), std::ios::trunc);
    csv << "# config_hash=" << rd.config_hash << "\n";
    csv << "p,J1p\n";
    char buf[64];
    for (size_t i = 0; i < led.tile.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g\n", led.first_tile + static_cast<int>(i),
                    led.tile[i]);
      csv << buf;
    }
  }
  jsonw::Writer w;
  w.begin_object();
  w.kv("c0", led.c0);
  w.kv("total", led.total);
  w.kv("K1bar_est", led.k1bar_est);
  w.kv("config_hash", rd.config_hash);
  w.end_object();
  std::ofstream js(rd.path(stem + ".json"), std::ios::trunc);
  js << w.str() << "\n";
}

inline void write_cauchy_csv(const std::vector<InfiniteRow>& table, const RunDir& rd,
                             const std::string& stem) {
  std::ofstream csv(rd.path(stem + ".csv"), std::ios::trunc);
  csv << "# config_hash=" << rd.config_hash << "\n";
  csv << "K,diff\n";
  char buf[64];
  for (const auto& row : table) {
    if (!row.has_diff) continue;
    std::snprintf(buf, sizeof(buf), "%d,%.17g\n", row.K, row.cauchy_diff);
    csv << buf;
  }
}

inline void write_infinite_json(const InfiniteResult& res, const RunDir& rd,
                                const std::string& stem) {
  jsonw::Writer w;
  w.begin_object();
  w.kv("config_hash", rd.config_hash);
  w.kv("window_lo", res.window_lo);
  w.kv("window_hi", res.window_hi);
  w.key("rows");
  w.begin_array();
  for (const auto& row : res.table) {
    w.begin_object();
    w.kv("K", row.K);
    if (row.has_diff) w.kv("cauchy_diff", row.cauchy_diff);
    w.kv("window_dist_v0", row.window_dist_v0);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  std::ofstream js(rd.path(stem + ".json"), std::ios::trunc);
  js << w.str() << "\n";
}

inline void write_check_results(const std::vector<CheckResult>& checks, const std::string& path) {
  jsonw::Writer w;
  w.begin_array();
  for (const auto& c : checks) {
    w.begin_object();
    w.kv("id", c.id);
    w.kv("pass", c.pass);
    w.kv("heuristic", c.heuristic);
    w.kv("tolerance", c.tolerance);
    w.key("measured");
    w.begin_object();
    for (const auto& [k, v] : c.measured) w.kv(k, v);
    w.end_object();
    w.kv("context", c.context);
    w.kv("note", c.note);
    w.end_object();
  }
  w.end_array();
  std::ofstream out(path, std::ios::trunc);
  out << w.str() << "\n";
}

// ---------------------------------------------------------------------------
// SVG profile plot for 1-D fields.

inline void write_profile_svg(const Field& u, const std::string& path,
                              const std::string& title, const std::string& config_hash) {
  if (u.grid.dim != 1) return;
  const int W = 900, H = 300, ML = 50, MR = 15, MT = 25, MB = 35;
  double ymin = u.values[0], ymax = u.values[0];
  for (double v : u.values) {
    ymin = std::min(ymin, v);
    ymax = std::max(ymax, v);
  }
  if (ymax - ymin < 1e-12) {
    ymax += 0.5;
    ymin -= 0.5;
  }
  double x0 = u.grid.tile_lo, x1 = u.grid.tile_hi;
  auto px = [&](double x) { return ML + (x - x0) / (x1 - x0) * (W - ML - MR); };
  auto py = [&](double y) { return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB); };

  std::ostringstream s;
  s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  s << "<rect width='100%' height='100%' fill='white'/>\n";
  s << "<text x='" << ML << "' y='16' font-size='13' font-family='monospace'>" << title
    << " [" << config_hash << "]</text>\n";
  s << "<line x1='" << px(x0) << "' y1='" << py(ymin) << "' x2='" << px(x1) << "' y2='"
    << py(ymin) << "' stroke='black'/>\n";
  s << "<line x1='" << px(x0) << "' y1='" << py(ymin) << "' x2='" << px(x0) << "' y2='"
    << py(ymax) << "' stroke='black'/>\n";
  char lab[64];
  std::snprintf(lab, sizeof(lab), "%g", ymin);
  s << "<text x='4' y='" << py(ymin) << "' font-size='11'>" << lab << "</text>\n";
  std::snprintf(lab, sizeof(lab), "%g", ymax);
  s << "<text x='4' y='" << py(ymax) + 10 << "' font-size='11'>" << lab << "</text>\n";
  std::snprintf(lab, sizeof(lab), "%g", x0);
  s << "<text x='" << px(x0) << "' y='" << H - 12 << "' font-size='11'>" << lab << "</text>\n";
  std::snprintf(lab, sizeof(lab), "%g", x1);
  s << "<text x='" << px(x1) - 20 << "' y='" << H - 12 << "' font-size='11'>" << lab
    << "</text>\n";
  s << "<polyline fill='none' stroke='steelblue' stroke-width='1.2' points='";
  for (int k = 0; k < u.grid.x1_nodes(); ++k) {
    s << px(u.grid.x1_of(k)) << "," << py(u.at(k)) << " ";
  }
  s << "'/>\n</svg>\n";
  std::ofstream out(path, std::ios::trunc);
  out << s.str();
}

// ---------------------------------------------------------------------------
// Checkpoints.

struct Checkpoint {
  std::string phase;
  long iterations = 0;
  double step = 0.0;
  int round = 0;
  long iters_total = 0;
  bool has_prev = false;
};

inline void save_checkpoint(const RunDir& rd, const std::string& phase, const SolveHandle& h) {
  jsonw::Writer w;
  w.begin_object();
  w.kv("phase", phase);
  w.kv("config_hash", rd.config_hash);
  w.kv("iterations", h.seed.iterations_done);
  w.kv("step", h.seed.step);
  w.kv("round", h.round);
  w.kv("iters_total", h.iters_total);
  w.kv("has_prev", h.seed.has_prev);
  w.end_object();
  dump_field(h.x, rd.path(phase + ".ckpt_x"), rd.config_hash);
  if (h.seed.has_prev) {
    Field prev = h.x;
    prev.values = h.seed.x_prev;
    dump_field(prev, rd.path(phase + ".ckpt_xprev"), rd.config_hash);
  }
  std::ofstream out(rd.path(phase + ".ckpt.json"), std::ios::trunc);
  out << w.str() << "\n";
}

/// Loads a checkpoint and rebuilds the optimizer seed (the gradient at the
/// previous iterate is recomputed, which is deterministic).
inline bool load_checkpoint(const RunDir& rd, const std::string& phase, const Potential& pot,
                            SolveHandle& h) {
  if (!rd.has(phase + ".ckpt.json")) return false;
  std::ifstream in(rd.path(phase + ".ckpt.json"));
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("config_hash", "") != rd.config_hash)
    throw ConfigError("checkpoint was produced by a different config");
  h.active = true;
  h.x = load_field(rd.path(phase + ".ckpt_x"));
  h.round = j.value("round", 0);
  h.iters_total = j.value("iters_total", 0L);
  h.seed.iterations_done = j.value("iterations", 0L);
  h.seed.step = j.value("step", 0.0);
  h.seed.has_prev = j.value("has_prev", false);
  if (h.seed.has_prev) {
    Field prev = load_field(rd.path(phase + ".ckpt_xprev"));
    h.seed.x_prev = prev.values;
    EnergyGradient eg;
    assemble_gradient(prev, pot, eg);
    h.seed.g_prev = eg.raw;
  }
  return true;
}

inline void clear_checkpoint(const RunDir& rd, const std::string& phase) {
  for (const char* suffix : {".ckpt.json", ".ckpt_x.f64", ".ckpt_x.meta.json",
                             ".ckpt_xprev.f64", ".ckpt_xprev.meta.json"}) {
    fs::path p = rd.dir / (phase + std::string(suffix));
    if (fs::exists(p)) fs::remove(p);
  }
}

// ---------------------------------------------------------------------------
// Run state.

inline void write_state(const RunDir& rd, const std::string& command) {
  jsonw::Writer w;
  w.begin_object();
  w.kv("command", command);
  w.kv("config_hash", rd.config_hash);
  w.end_object();
  std::ofstream out(rd.path("state.json"), std::ios::trunc);
  out << w.str() << "\n";
}

inline bool read_state(const RunDir& rd, std::string& command, std::string& hash) {
  if (!rd.has("state.json")) return false;
  std::ifstream in(rd.path("state.json"));
  nlohmann::json j = nlohmann::json::parse(in);
  command = j.value("command", "");
  hash = j.value("config_hash", "");
  return true;
}

}  // namespace mblab
