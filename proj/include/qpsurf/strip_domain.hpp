#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qpsurf/error.hpp"

namespace qpsurf {

/// Half-width of the admissible band around even integers for a strip of
/// half-height ell: 1 - sqrt(1 - ell^2).
inline double eta_of_ell(double ell) {
  if (!(ell > 0.0 && ell < 1.0)) {
    throw std::domain_error("eta_of_ell: ell must lie in (0, 1), got " + std::to_string(ell));
  }
  return 1.0 - std::sqrt(1.0 - ell * ell);
}

inline bool is_integer(double x, double tol = 1e-9) { return std::abs(x - std::round(x)) <= tol; }

/// Geometry of the truncated strip [x_min, x_max] x [-ell, ell].
struct StripConfig {
  double ell = 0.6;
  double eta = 0.2;   // always eta_of_ell(ell)
  double eta0 = 0.15; // working half-width of the singularity boxes
  double x_min = -4.0;
  double x_max = 4.0;
  double grid_h = 1.0 / 40.0;

  /// Builds a config with eta derived from ell; eta0 defaults to 0.75 eta.
  static StripConfig make(double ell, double grid_h, std::pair<double, double> window,
                          std::optional<double> eta0 = std::nullopt) {
    StripConfig c;
    c.ell = ell;
    c.eta = eta_of_ell(ell);
    c.eta0 = eta0.value_or(0.75 * c.eta);
    c.grid_h = grid_h;
    c.x_min = window.first;
    c.x_max = window.second;
    c.validate();
    return c;
  }

  /// Lattice nodes per unit length.
  long per_unit() const { return std::lround(1.0 / grid_h); }
  long half_height_cells() const { return std::lround(ell / grid_h); }

  void validate() const {
    if (!(ell > 0.0 && ell < 1.0)) throw ConfigError("ell must lie in (0, 1)");
    if (std::abs(eta - eta_of_ell(ell)) > 1e-15) throw ConfigError("eta is not 1 - sqrt(1 - ell^2)");
    if (!(eta0 > 0.0 && eta0 < eta)) {
      std::ostringstream os;
      os << "eta0 must lie in (0, eta=" << eta << "), got " << eta0;
      throw ConfigError(os.str());
    }
    if (!(grid_h > 0.0)) throw ConfigError("grid_h must be positive");
    if (!is_integer(1.0 / grid_h)) throw ConfigError("1/grid_h must be an integer");
    if (!is_integer(ell / grid_h, 1e-7)) {
      std::ostringstream os;
      os << "ell/grid_h must be an integer (ell=" << ell << ", grid_h=" << grid_h << ")";
      throw ConfigError(os.str());
    }
    if (!(x_max > x_min)) throw ConfigError("x_window must satisfy x_min < x_max");
    if (!is_integer(x_min / 2.0) || !is_integer(x_max / 2.0)) {
      throw ConfigError("x_window ends must be even integers");
    }
  }
};

/// Singular abscissae q on the axis together with the even-integer anchors 2p.
struct SingularSet {
  std::vector<double> q;
  std::vector<long> p;

  std::size_t size() const { return q.size(); }
  bool empty() const { return q.empty(); }

  /// Places every singularity at its anchor, q = 2p.
  static SingularSet centered(const std::vector<long>& p) {
    SingularSet s;
    s.p = p;
    for (long pi : p) s.q.push_back(2.0 * static_cast<double>(pi));
    s.validate_order();
    return s;
  }

  /// Anchors are the nearest even integers.
  static SingularSet from_q(const std::vector<double>& q) {
    SingularSet s;
    s.q = q;
    for (double qi : q) s.p.push_back(std::lround(qi / 2.0));
    s.validate_order();
    return s;
  }

  static SingularSet with_offsets(const std::vector<long>& p, const std::vector<double>& r) {
    if (p.size() != r.size()) throw ConfigError("p and offsets differ in length");
    SingularSet s;
    s.p = p;
    for (std::size_t i = 0; i < p.size(); ++i) s.q.push_back(2.0 * static_cast<double>(p[i]) + r[i]);
    s.validate_order();
    return s;
  }

  double offset(std::size_t i) const { return q[i] - 2.0 * static_cast<double>(p[i]); }

  void validate_order() const {
    if (q.size() != p.size()) throw ConfigError("SingularSet: q and p differ in length");
    for (std::size_t i = 1; i < q.size(); ++i) {
      if (!(q[i - 1] < q[i]) || !(p[i - 1] < p[i])) {
        throw ConfigError("SingularSet: q and p must be strictly increasing");
      }
    }
  }

  /// |q(i) - 2 p(i)| <= eta0 for all i.
  bool inside_box(double eta0) const {
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (std::abs(offset(i)) > eta0 + 1e-12) return false;
    }
    return true;
  }
};

/// Truncation window [2 min p - 4, 2 max p + 4]; [-4, 4] for the empty set.
inline std::pair<double, double> default_window(const std::vector<long>& p) {
  if (p.empty()) return {-4.0, 4.0};
  auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  return {2.0 * static_cast<double>(*lo) - 4.0, 2.0 * static_cast<double>(*hi) + 4.0};
}

/// Tent function on a horizontal boundary line: distance to the nearest even integer.
inline double phi_on_line(double x) {
  const double even = 2.0 * std::round(x / 2.0);
  return std::abs(x - even);
}

/// Boundary data phi at (x, y) with y = +-ell.
inline double phi_eval(const StripConfig& cfg, double x, double y) {
  if (std::abs(std::abs(y) - cfg.ell) > 1e-12) {
    std::ostringstream os;
    os << "phi_eval: point (" << x << ", " << y << ") is not on y = +-" << cfg.ell;
    throw std::invalid_argument(os.str());
  }
  return phi_on_line(x);
}

struct AdmissibilityVerdict {
  bool admissible = true;
  std::optional<std::size_t> violating_index;
  long odd_vertex = 0;          // k of the offending vertex a+_k (odd)
  double vertex_distance = 0.0; // |q - a+_k|
  /// dist(q, nearest odd integer) - sqrt(1 - ell^2), minimised over S.
  /// Positive iff admissible.
  double odd_margin = 0.0;
};

/// Every q must satisfy |q - a+_{2k+1}| > 1 for all k.
inline AdmissibilityVerdict check_admissible(const StripConfig& cfg, const SingularSet& S) {
  AdmissibilityVerdict v;
  const double root = std::sqrt(std::max(0.0, 1.0 - cfg.ell * cfg.ell));
  v.odd_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < S.q.size(); ++i) {
    const double q = S.q[i];
    const double odd = 2.0 * std::floor(q / 2.0) + 1.0;  // nearest odd integer
    const double d_odd = std::abs(q - odd);
    const double vertex_dist = std::hypot(d_odd, cfg.ell);
    const double margin = d_odd - root;
    if (margin < v.odd_margin) v.odd_margin = margin;
    if (!(vertex_dist > 1.0) && v.admissible) {
      v.admissible = false;
      v.violating_index = i;
      v.odd_vertex = std::lround(odd);
      v.vertex_distance = vertex_dist;
    }
  }
  return v;
}

/// A prescribed value at a point of the box boundary or of the singular set.
struct BoundarySample {
  double x = 0.0;
  double y = 0.0;
  double value = 0.0;
};

struct LipschitzVerdict {
  bool admissible = true;
  std::optional<std::pair<std::size_t, std::size_t>> violating_pair;
  double excess = 0.0;  // |dphi| - |p - p'| of the first violation
};

namespace detail {

inline int box_sides(const BoundarySample& s, double x_min, double x_max, double ell) {
  constexpr double tol = 1e-12;
  int mask = 0;
  if (std::abs(s.y - ell) <= tol) mask |= 1;
  if (std::abs(s.y + ell) <= tol) mask |= 2;
  if (std::abs(s.x - x_min) <= tol) mask |= 4;
  if (std::abs(s.x - x_max) <= tol) mask |= 8;
  return mask;
}

}  // namespace detail

/// Pairwise 1-Lipschitz test on the convex box [x_min, x_max] x [-ell, ell];
/// equality is tolerated only when the segment lies on one side of the box.
inline LipschitzVerdict check_lipschitz_condition(const std::vector<BoundarySample>& samples,
                                                  double x_min, double x_max, double ell) {
  constexpr double tol = 1e-12;
  LipschitzVerdict v;
  std::vector<int> sides(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    sides[i] = detail::box_sides(samples[i], x_min, x_max, ell);
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const auto& a = samples[i];
      const auto& b = samples[j];
      const double dist = std::hypot(a.x - b.x, a.y - b.y);
      if (dist == 0.0) continue;
      const double dv = std::abs(a.value - b.value);
      const bool on_boundary = (sides[i] & sides[j]) != 0;
      const bool bad = on_boundary ? (dv > dist + tol) : (dv >= dist - tol);
      if (bad) {
        v.admissible = false;
        v.violating_pair = std::make_pair(i, j);
        v.excess = dv - dist;
        return v;
      }
    }
  }
  return v;
}

/// Boundary data of the truncated problem: phi on the horizontal edges, 0 on
/// the vertical edges and at the singular points, sampled every `spacing`.
inline std::vector<BoundarySample> truncated_boundary_data(const StripConfig& cfg, const SingularSet& S,
                                                           double spacing) {
  std::vector<BoundarySample> out;
  const long nx = std::lround((cfg.x_max - cfg.x_min) / spacing);
  for (long i = 0; i <= nx; ++i) {
    const double x = cfg.x_min + static_cast<double>(i) * spacing;
    const bool end = (i == 0 || i == nx);
    out.push_back({x, cfg.ell, end ? 0.0 : phi_on_line(x)});
    out.push_back({x, -cfg.ell, end ? 0.0 : phi_on_line(x)});
  }
  const long ny = std::lround(2.0 * cfg.ell / spacing);
  for (long j = 1; j < ny; ++j) {
    const double y = -cfg.ell + 2.0 * cfg.ell * static_cast<double>(j) / static_cast<double>(ny);
    out.push_back({cfg.x_min, y, 0.0});
    out.push_back({cfg.x_max, y, 0.0});
  }
  for (double q : S.q) out.push_back({q, 0.0, 0.0});
  return out;
}

}  // namespace qpsurf
