#pragma once

// Flat key-value run configuration with dotted sections. Unknown keys are
// rejected with the offending key and line in the diagnostic. The resolved
// configuration has a canonical serialization whose FNV-1a hash names every
// artifact a run produces.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "potential.hpp"
#include "solver.hpp"

namespace mblab {

struct RunConfig {
  // potential
  std::string family = "pendulum_modulated";
  double epsilon = 0.3;
  double offset = 0.0;
  // grid
  int n = 1;
  int N = 64;
  int tile_lo = -20;
  int tile_hi = 20;
  int hetero_lo = -20;
  int hetero_hi = 20;
  // spec
  int K = 1;
  std::vector<int> m = {0, 12, 30, 42};
  std::vector<int> l = {4, 4, 4, 4};
  std::vector<double> rho = {0.1, 0.1, 0.1, 0.1};
  int alphabet_size = 1;
  // solver
  double gtol = 0.0;  // 0: auto 1e-8 * N
  long max_iters = 400000;
  long budget_iters = 0;
  long checkpoint_every = 2000;
  double penalty_mu0 = 10.0;
  double penalty_growth = 10.0;
  int penalty_rounds = 8;
  double feas_tol = 1e-9;
  bool admissibility = true;
  int pad = 10;
  unsigned seed = 12345;
  // infinite
  std::string mode = "bilateral";
  std::vector<int> k_list = {1, 2, 3};
  int window_lo = 0;
  int window_hi = -1;  // window_hi < window_lo: automatic
  double tol_shrink = 0.1;
  // output
  std::string out_dir = "mblab_out";
  int threads = 1;

  Potential potential() const { return make_potential(family, epsilon, offset); }

  GridSpec grid() const {
    GridSpec g;
    g.dim = n;
    g.points_per_unit = N;
    g.tile_lo = tile_lo;
    g.tile_hi = tile_hi;
    g.validate();
    return g;
  }

  GridSpec hetero_grid() const {
    GridSpec g;
    g.dim = n;
    g.points_per_unit = N;
    g.tile_lo = hetero_lo;
    g.tile_hi = hetero_hi;
    g.validate();
    return g;
  }

  TransitionSpec spec() const {
    TransitionSpec s;
    s.K = K;
    s.m = m;
    s.l = l;
    s.rho = rho;
    s.alphabet_size = alphabet_size;
    return s;
  }

  SolveOptions solve_options() const {
    SolveOptions o;
    o.residual_tol = gtol;
    o.max_iters = max_iters;
    o.penalty_mu0 = penalty_mu0;
    o.penalty_growth = penalty_growth;
    o.penalty_rounds = penalty_rounds;
    o.feas_tol = feas_tol;
    o.check_admissibility = admissibility;
    o.pad = pad;
    return o;
  }

  InfiniteOptions infinite_options() const {
    InfiniteOptions o;
    if (mode == "right") o.mode = InfiniteMode::right;
    else if (mode == "left") o.mode = InfiniteMode::left;
    else if (mode == "bilateral") o.mode = InfiniteMode::bilateral;
    else throw ConfigError("infinite.mode must be right, left or bilateral");
    o.k_list = k_list;
    o.window_lo = window_lo;
    o.window_hi = window_hi;
    o.tol_shrink = tol_shrink;
    o.solve = solve_options();
    return o;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;  // "key =" declares an empty list
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else cur += c;
  }
  out.push_back(trim(cur));
  return out;
}

template <typename T>
T parse_number(const std::string& v, const std::string& key);

template <>
inline double parse_number<double>(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a real number");
  }
}

template <>
inline long parse_number<long>(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse '" + v + "' as an integer");
  }
}

template <>
inline int parse_number<int>(const std::string& v, const std::string& key) {
  return static_cast<int>(parse_number<long>(v, key));
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a boolean");
}

}  // namespace detail

/// Applies one key=value pair onto the typed config; unknown keys are
/// rejected with the key name.
inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  using detail::split_list;
  auto ints = [&](const std::string& v) {
    std::vector<int> out;
    for (const std::string& p : split_list(v)) out.push_back(parse_number<int>(p, key));
    return out;
  };
  auto reals = [&](const std::string& v) {
    std::vector<double> out;
    for (const std::string& p : split_list(v)) out.push_back(parse_number<double>(p, key));
    return out;
  };

  if (key == "potential.family") c.family = value;
  else if (key == "potential.epsilon") c.epsilon = parse_number<double>(value, key);
  else if (key == "potential.offset") c.offset = parse_number<double>(value, key);
  else if (key == "grid.n") c.n = parse_number<int>(value, key);
  else if (key == "grid.N") c.N = parse_number<int>(value, key);
  else if (key == "grid.tile_lo") c.tile_lo = parse_number<int>(value, key);
  else if (key == "grid.tile_hi") c.tile_hi = parse_number<int>(value, key);
  else if (key == "grid.hetero_lo") c.hetero_lo = parse_number<int>(value, key);
  else if (key == "grid.hetero_hi") c.hetero_hi = parse_number<int>(value, key);
  else if (key == "spec.K") c.K = parse_number<int>(value, key);
  else if (key == "spec.m") c.m = ints(value);
  else if (key == "spec.l") c.l = ints(value);
  else if (key == "spec.rho") c.rho = reals(value);
  else if (key == "spec.alphabet_size") c.alphabet_size = parse_number<int>(value, key);
  else if (key == "solver.gtol") c.gtol = parse_number<double>(value, key);
  else if (key == "solver.max_iters") c.max_iters = parse_number<long>(value, key);
  else if (key == "solver.budget_iters") c.budget_iters = parse_number<long>(value, key);
  else if (key == "solver.checkpoint_every") c.checkpoint_every = parse_number<long>(value, key);
  else if (key == "solver.penalty_mu0") c.penalty_mu0 = parse_number<double>(value, key);
  else if (key == "solver.penalty_growth") c.penalty_growth = parse_number<double>(value, key);
  else if (key == "solver.penalty_rounds") c.penalty_rounds = parse_number<int>(value, key);
  else if (key == "solver.feas_tol") c.feas_tol = parse_number<double>(value, key);
  else if (key == "solver.admissibility") c.admissibility = parse_bool(value, key);
  else if (key == "solver.pad") c.pad = parse_number<int>(value, key);
  else if (key == "solver.seed") c.seed = static_cast<unsigned>(parse_number<long>(value, key));
  else if (key == "infinite.mode") c.mode = value;
  else if (key == "infinite.k_list") c.k_list = ints(value);
  else if (key == "infinite.window_lo") c.window_lo = parse_number<int>(value, key);
  else if (key == "infinite.window_hi") c.window_hi = parse_number<int>(value, key);
  else if (key == "infinite.tol_shrink") c.tol_shrink = parse_number<double>(value, key);
  else if (key == "output.dir") c.out_dir = value;
  else if (key == "output.threads") c.threads = parse_number<int>(value, key);
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Parses the flat key=value text ('#' comments, blank lines allowed).
inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(t.substr(0, eq));
    std::string value = detail::trim(t.substr(eq + 1));
    try {
      apply_config_entry(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

namespace detail {

inline std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Canonical serialization (sorted keys, 17 significant digits); hashing this
/// text names the run.
inline std::string canonical_config_text(const RunConfig& c) {
  std::map<std::string, std::string> kv;
  kv["potential.family"] = c.family;
  kv["potential.epsilon"] = detail::fmt_real(c.epsilon);
  kv["potential.offset"] = detail::fmt_real(c.offset);
  kv["grid.n"] = std::to_string(c.n);
  kv["grid.N"] = std::to_string(c.N);
  kv["grid.tile_lo"] = std::to_string(c.tile_lo);
  kv["grid.tile_hi"] = std::to_string(c.tile_hi);
  kv["grid.hetero_lo"] = std::to_string(c.hetero_lo);
  kv["grid.hetero_hi"] = std::to_string(c.hetero_hi);
  kv["spec.K"] = std::to_string(c.K);
  {
    std::string s;
    for (size_t i = 0; i < c.m.size(); ++i) s += (i ? "," : "") + std::to_string(c.m[i]);
    kv["spec.m"] = s;
    s.clear();
    for (size_t i = 0; i < c.l.size(); ++i) s += (i ? "," : "") + std::to_string(c.l[i]);
    kv["spec.l"] = s;
    s.clear();
    for (size_t i = 0; i < c.rho.size(); ++i) s += (i ? "," : "") + detail::fmt_real(c.rho[i]);
    kv["spec.rho"] = s;
    s.clear();
    for (size_t i = 0; i < c.k_list.size(); ++i) s += (i ? "," : "") + std::to_string(c.k_list[i]);
    kv["infinite.k_list"] = s;
  }
  kv["spec.alphabet_size"] = std::to_string(c.alphabet_size);
  kv["solver.gtol"] = detail::fmt_real(c.gtol);
  kv["solver.max_iters"] = std::to_string(c.max_iters);
  // budget_iters and checkpoint_every control interruption, not the
  // experiment; they stay out of the hash so resumed runs keep their name.
  kv["solver.penalty_mu0"] = detail::fmt_real(c.penalty_mu0);
  kv["solver.penalty_growth"] = detail::fmt_real(c.penalty_growth);
  kv["solver.penalty_rounds"] = std::to_string(c.penalty_rounds);
  kv["solver.feas_tol"] = detail::fmt_real(c.feas_tol);
  kv["solver.admissibility"] = c.admissibility ? "true" : "false";
  kv["solver.pad"] = std::to_string(c.pad);
  kv["solver.seed"] = std::to_string(c.seed);
  kv["infinite.mode"] = c.mode;
  kv["infinite.window_lo"] = std::to_string(c.window_lo);
  kv["infinite.window_hi"] = std::to_string(c.window_hi);
  kv["infinite.tol_shrink"] = detail::fmt_real(c.tol_shrink);

  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

/// FNV-1a 64-bit hash, hex-encoded.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const RunConfig& c) { return fnv1a_hex(canonical_config_text(c)); }

}  // namespace mblab
