#pragma once

// Discretization of the cylinder R x T^{n-1}: uniform tensor grids on a
// truncated strip [a,b] x T^{n-1}, unit tiles T_i = [i,i+1] x T^{n-1},
// integer translations, tile norms, refinement, and field dumps.
//
// Layout: uniform spacing h = 1/N in every direction. The x1 axis carries
// (b-a)*N + 1 nodes including both strip ends (or (b-a)*N wrapping nodes for
// x1-periodic grids used by the cell problem). Each transverse direction
// carries exactly N periodic nodes. Values are stored x1-major.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "jsonw.hpp"

namespace mblab {

struct GridSpec {
  int dim = 1;             // n, 1..3
  int tile_lo = 0;         // a
  int tile_hi = 4;         // b
  int points_per_unit = 8; // N
  bool x1_periodic = false;

  double h() const { return 1.0 / points_per_unit; }
  int span() const { return tile_hi - tile_lo; }

  /// Number of x1 node planes.
  int x1_nodes() const {
    return span() * points_per_unit + (x1_periodic ? 0 : 1);
  }
  /// Nodes per transverse direction (1 when the direction is absent).
  int t_nodes(int d) const { return d < dim ? points_per_unit : 1; }
  /// Nodes in one x1 plane.
  long plane_nodes() const {
    long p = 1;
    for (int d = 1; d < dim; ++d) p *= points_per_unit;
    return p;
  }
  long node_count() const { return static_cast<long>(x1_nodes()) * plane_nodes(); }

  double x1_of(int k) const { return tile_lo + k * h(); }

  long index(int k, int t2 = 0, int t3 = 0) const {
    return (static_cast<long>(k) * t_nodes(1) + t2) * t_nodes(2) + t3;
  }

  bool valid_tile(int i) const { return i >= tile_lo && i <= tile_hi - 1; }

  void validate() const {
    if (dim < 1 || dim > 3) throw ConfigError("grid: dim must be 1, 2 or 3");
    if (points_per_unit < 8) throw ConfigError("grid: points_per_unit must be >= 8");
    int min_span = x1_periodic ? 1 : 4;
    if (span() < min_span)
      throw ConfigError("grid: strip must cover at least " + std::to_string(min_span) + " tiles");
  }

  bool operator==(const GridSpec& o) const {
    return dim == o.dim && tile_lo == o.tile_lo && tile_hi == o.tile_hi &&
           points_per_unit == o.points_per_unit && x1_periodic == o.x1_periodic;
  }
  bool operator!=(const GridSpec& o) const { return !(*this == o); }
};

/// Discretized real-valued function on a grid. Values are immutable from the
/// caller's point of view once constructed; read-only evaluation is safe from
/// multiple threads.
struct Field {
  GridSpec grid;
  std::vector<double> values;
  // Effective domain in tiles after translation padding; the full strip by default.
  int valid_lo = 0;
  int valid_hi = 0;

  Field() = default;
  explicit Field(const GridSpec& g, double fill = 0.0)
      : grid(g), values(static_cast<size_t>(g.node_count()), fill),
        valid_lo(g.tile_lo), valid_hi(g.tile_hi) {
    grid.validate();
  }

  static Field constant(const GridSpec& g, double v) { return Field(g, v); }

  double& at(int k, int t2 = 0, int t3 = 0) { return values[grid.index(k, t2, t3)]; }
  double at(int k, int t2 = 0, int t3 = 0) const { return values[grid.index(k, t2, t3)]; }

  void check_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) throw NumericalError("field contains a non-finite value");
  }
};

/// Lightweight read-only view over the nodes of one tile; shares storage with
/// the viewed field.
struct FieldView {
  const Field* field = nullptr;
  int tile = 0;
  int k_lo = 0;  // first x1 node plane of the tile
  int k_hi = 0;  // last x1 node plane (inclusive); on x1-periodic grids wraps

  double at(int k_local, int t2 = 0, int t3 = 0) const {
    int k = k_lo + k_local;
    if (field->grid.x1_periodic) k %= field->grid.x1_nodes();
    return field->at(k, t2, t3);
  }
  int x1_node_count() const { return k_hi - k_lo + 1; }

  Field materialize() const {
    GridSpec g = field->grid;
    g.tile_lo = tile;
    g.tile_hi = tile + 1;
    g.x1_periodic = true;  // single-tile strips are only representable periodic
    Field out(g);
    int nk = g.x1_nodes();
    for (int k = 0; k < nk; ++k)
      for (int t2 = 0; t2 < g.t_nodes(1); ++t2)
        for (int t3 = 0; t3 < g.t_nodes(2); ++t3)
          out.at(k, t2, t3) = at(k, t2, t3);
    return out;
  }
};

inline FieldView tile_view(const Field& u, int i) {
  if (!u.grid.valid_tile(i))
    throw RangeError("tile index " + std::to_string(i) + " outside strip [" +
                     std::to_string(u.grid.tile_lo) + "," + std::to_string(u.grid.tile_hi) + ")");
  FieldView v;
  v.field = &u;
  v.tile = i;
  v.k_lo = (i - u.grid.tile_lo) * u.grid.points_per_unit;
  v.k_hi = v.k_lo + u.grid.points_per_unit;
  return v;
}

/// Integer translation along x1: returns u(x - j e1) on the same strip.
/// Outside the overlap [a+j, b+j] ∩ [a,b] the field is padded by replicating
/// the nearest boundary tile 1-periodically; valid_lo/valid_hi record the
/// effective domain.
inline Field translate(const Field& u, int j) {
  const GridSpec& g = u.grid;
  if (std::abs(j) >= g.span())
    throw RangeError("translation by " + std::to_string(j) + " exceeds strip length");
  Field out(g);
  int N = g.points_per_unit;
  int nk = g.x1_nodes();
  int shift = j * N;
  for (int k = 0; k < nk; ++k) {
    int src = k - shift;
    if (g.x1_periodic) {
      src = ((src % nk) + nk) % nk;
    } else if (src < 0) {
      // replicate the first tile periodically
      src = ((src % N) + N) % N;
    } else if (src >= nk) {
      int last0 = nk - 1 - N;  // first node of the last tile
      src = last0 + ((src - last0) % N);
    }
    size_t dst_base = static_cast<size_t>(g.index(k));
    size_t src_base = static_cast<size_t>(g.index(src));
    size_t plane = static_cast<size_t>(g.plane_nodes());
    std::copy_n(u.values.begin() + src_base, plane, out.values.begin() + dst_base);
  }
  out.valid_lo = std::max(g.tile_lo, g.tile_lo + j);
  out.valid_hi = std::min(g.tile_hi, g.tile_hi + j);
  return out;
}

namespace detail {

inline void require_same_grid(const Field& u, const Field& v) {
  if (u.grid != v.grid) throw ShapeError("fields live on different grids");
}

/// Trapezoid weight in x1 for node plane k within [k_lo, k_hi].
inline double trap_w(int k, int k_lo, int k_hi) {
  return (k == k_lo || k == k_hi) ? 0.5 : 1.0;
}

}  // namespace detail

/// Squared L2 distance over the x1 node range [k_lo, k_hi] (trapezoid in x1,
/// rectangle transverse).
inline double l2_sq_range(const Field& u, const Field& phi, int k_lo, int k_hi) {
  detail::require_same_grid(u, phi);
  const GridSpec& g = u.grid;
  double hn = std::pow(g.h(), g.dim);
  double acc = 0.0;
  for (int k = k_lo; k <= k_hi; ++k) {
    double w = detail::trap_w(k, k_lo, k_hi);
    double plane = 0.0;
    for (int t2 = 0; t2 < g.t_nodes(1); ++t2)
      for (int t3 = 0; t3 < g.t_nodes(2); ++t3) {
        double d = u.at(k, t2, t3) - phi.at(k, t2, t3);
        plane += d * d;
      }
    acc += w * plane;
  }
  return acc * hn;
}

/// Squared H1 seminorm of (u - phi) over the x1 node range: cell differences
/// along x1, forward periodic differences transverse (trapezoid weight in x1).
inline double grad_sq_range(const Field& u, const Field& phi, int k_lo, int k_hi) {
  detail::require_same_grid(u, phi);
  const GridSpec& g = u.grid;
  double h = g.h();
  double hn = std::pow(h, g.dim);
  double inv_h2 = 1.0 / (h * h);
  int N = g.points_per_unit;
  double acc = 0.0;
  auto dval = [&](int k, int t2, int t3) { return u.at(k, t2, t3) - phi.at(k, t2, t3); };
  for (int k = k_lo; k < k_hi; ++k) {  // x1 cells
    for (int t2 = 0; t2 < g.t_nodes(1); ++t2)
      for (int t3 = 0; t3 < g.t_nodes(2); ++t3) {
        double d = dval(k + 1, t2, t3) - dval(k, t2, t3);
        acc += d * d * inv_h2 * hn;
      }
  }
  for (int k = k_lo; k <= k_hi; ++k) {  // transverse edges
    double w = detail::trap_w(k, k_lo, k_hi);
    for (int t2 = 0; t2 < g.t_nodes(1); ++t2)
      for (int t3 = 0; t3 < g.t_nodes(2); ++t3) {
        if (g.dim >= 2) {
          double d = dval(k, (t2 + 1) % N, t3) - dval(k, t2, t3);
          acc += w * d * d * inv_h2 * hn;
        }
        if (g.dim >= 3) {
          double d = dval(k, t2, (t3 + 1) % N) - dval(k, t2, t3);
          acc += w * d * d * inv_h2 * hn;
        }
      }
  }
  return acc;
}

inline void require_tile_range(const GridSpec& g, int p, int q) {
  if (p > q || p < g.tile_lo || q > g.tile_hi - 1)
    throw RangeError("tile range [" + std::to_string(p) + "," + std::to_string(q) + "] outside strip");
}

/// Trapezoid-rule L2 norm of u - phi over tile T_i. Houses the tile distances
/// rho_-, rho_+ and the pair distance rho_bar.
inline double tile_distance(const Field& u, const Field& phi, int i) {
  if (!u.grid.valid_tile(i)) throw RangeError("tile index outside strip");
  int N = u.grid.points_per_unit;
  int k0 = (i - u.grid.tile_lo) * N;
  return std::sqrt(l2_sq_range(u, phi, k0, k0 + N));
}

/// L2 distance over the tile window [p..q] (q inclusive, in tiles).
inline double window_distance(const Field& u, const Field& phi, int p, int q) {
  require_tile_range(u.grid, p, q);
  int N = u.grid.points_per_unit;
  int k0 = (p - u.grid.tile_lo) * N;
  int k1 = (q + 1 - u.grid.tile_lo) * N;
  return std::sqrt(l2_sq_range(u, phi, k0, k1));
}

/// Discrete W^{1,2} distance over the tile window [p..q].
inline double window_w12_distance(const Field& u, const Field& phi, int p, int q) {
  require_tile_range(u.grid, p, q);
  int N = u.grid.points_per_unit;
  int k0 = (p - u.grid.tile_lo) * N;
  int k1 = (q + 1 - u.grid.tile_lo) * N;
  return std::sqrt(l2_sq_range(u, phi, k0, k1) + grad_sq_range(u, phi, k0, k1));
}

/// Linear interpolation onto a grid with factor-times finer spacing.
inline Field refine(const Field& u, int factor) {
  if (factor < 2) throw ConfigError("refine: factor must be >= 2");
  const GridSpec& g = u.grid;
  GridSpec fine = g;
  fine.points_per_unit = g.points_per_unit * factor;
  Field out(fine);

  int nk_f = fine.x1_nodes();
  int nk_c = g.x1_nodes();
  auto coarse_clamped = [&](int k) { return std::min(std::max(k, 0), nk_c - 1); };

  for (int k = 0; k < nk_f; ++k) {
    int kc = k / factor;
    int kr = k % factor;
    double fx = static_cast<double>(kr) / factor;
    int kc1 = g.x1_periodic ? (kc + 1) % nk_c : coarse_clamped(kc + 1);
    for (int t2 = 0; t2 < fine.t_nodes(1); ++t2) {
      int c2 = t2 / factor, r2 = t2 % factor;
      double fy = static_cast<double>(r2) / factor;
      int c2n = g.dim >= 2 ? (c2 + 1) % g.points_per_unit : 0;
      for (int t3 = 0; t3 < fine.t_nodes(2); ++t3) {
        int c3 = t3 / factor, r3 = t3 % factor;
        double fz = static_cast<double>(r3) / factor;
        int c3n = g.dim >= 3 ? (c3 + 1) % g.points_per_unit : 0;
        double acc = 0.0;
        for (int bx = 0; bx < 2; ++bx)
          for (int by = 0; by < (g.dim >= 2 ? 2 : 1); ++by)
            for (int bz = 0; bz < (g.dim >= 3 ? 2 : 1); ++bz) {
              double w = (bx ? fx : 1 - fx);
              if (g.dim >= 2) w *= (by ? fy : 1 - fy);
              if (g.dim >= 3) w *= (bz ? fz : 1 - fz);
              acc += w * u.at(bx ? kc1 : kc, by ? c2n : c2, bz ? c3n : c3);
            }
        out.at(k, t2, t3) = acc;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Field dumps: flat little-endian float64 binary + JSON sidecar, CSV for n=1.

namespace detail {

inline bool host_little_endian() {
  const uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

inline void byteswap64(std::vector<double>& v) {
  for (double& d : v) {
    unsigned char* p = reinterpret_cast<unsigned char*>(&d);
    std::swap(p[0], p[7]);
    std::swap(p[1], p[6]);
    std::swap(p[2], p[5]);
    std::swap(p[3], p[4]);
  }
}

}  // namespace detail

/// Writes <base>.f64 (flat little-endian doubles, x1-major) and
/// <base>.meta.json. config_hash is recorded when nonempty.
inline void dump_field(const Field& u, const std::string& base, const std::string& config_hash = "") {
  {
    std::ofstream bin(base + ".f64", std::ios::binary | std::ios::trunc);
    if (!bin) throw ConfigError("cannot write " + base + ".f64");
    if (detail::host_little_endian()) {
      bin.write(reinterpret_cast<const char*>(u.values.data()),
                static_cast<std::streamsize>(u.values.size() * sizeof(double)));
    } else {
      std::vector<double> tmp = u.values;
      detail::byteswap64(tmp);
      bin.write(reinterpret_cast<const char*>(tmp.data()),
                static_cast<std::streamsize>(tmp.size() * sizeof(double)));
    }
  }
  jsonw::Writer w;
  w.begin_object();
  w.kv("n", u.grid.dim);
  w.kv("a", u.grid.tile_lo);
  w.kv("b", u.grid.tile_hi);
  w.kv("N", u.grid.points_per_unit);
  w.key("shape");
  w.begin_array();
  w.value(u.grid.x1_nodes());
  for (int d = 1; d < u.grid.dim; ++d) w.value(u.grid.points_per_unit);
  w.end_array();
  w.kv("ordering", "x1-major");
  w.kv("x1_periodic", u.grid.x1_periodic);
  w.kv("valid_lo", u.valid_lo);
  w.kv("valid_hi", u.valid_hi);
  if (!config_hash.empty()) w.kv("config_hash", config_hash);
  w.end_object();
  std::ofstream meta(base + ".meta.json", std::ios::trunc);
  if (!meta) throw ConfigError("cannot write " + base + ".meta.json");
  meta << w.str() << "\n";
}

/// CSV dump (x coordinate and value per row) for 1-D fields.
inline void dump_field_csv(const Field& u, const std::string& path, const std::string& config_hash = "") {
  if (u.grid.dim != 1) throw ShapeError("CSV dump is defined for n=1 fields only");
  std::ofstream csv(path, std::ios::trunc);
  if (!csv) throw ConfigError("cannot write " + path);
  if (!config_hash.empty()) csv << "# config_hash=" << config_hash << "\n";
  csv << "x1,value\n";
  char buf[64];
  for (int k = 0; k < u.grid.x1_nodes(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", u.grid.x1_of(k), u.at(k));
    csv << buf;
  }
}

}  // namespace mblab
