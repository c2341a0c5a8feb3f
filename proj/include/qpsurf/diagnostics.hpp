#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "qpsurf/conjugation.hpp"
#include "qpsurf/error.hpp"
#include "qpsurf/grid.hpp"
#include "qpsurf/surface_builder.hpp"

namespace qpsurf {

struct RidgeOptions {
  double ridge_eps = 0.05;        // a cell is marked when |grad v| > 1 - ridge_eps
  double exclusion_radius = 0.2;  // disks around singular nodes and vertices that are skipped
  double boundary_band = 0.2;     // strip along y = +-ell that is skipped
  int min_cells = 3;              // smaller clusters are not reported
};

struct RidgeSegment {
  Vec2 a;
  Vec2 b;
  int cells = 0;
  double max_gradient = 0.0;
  double length() const { return std::hypot(b.x - a.x, b.y - a.y); }
};

namespace detail {

inline Vec2 cell_center(const Grid& g, int ci, int cj) {
  const auto c = g.cell_corners(ci, cj);
  return 0.25 * (c[0] + c[1] + c[2] + c[3]);
}

/// Singular nodes (x, 0) and the vertices (k, +-ell) inside the window.
inline std::vector<Vec2> special_points(const Grid& g) {
  std::vector<Vec2> out;
  for (double q : g.S.q) out.push_back({q, 0.0});
  for (long k = static_cast<long>(std::ceil(g.cfg.x_min)); k <= static_cast<long>(std::floor(g.cfg.x_max)); ++k) {
    out.push_back({static_cast<double>(k), g.cfg.ell});
    out.push_back({static_cast<double>(k), -g.cfg.ell});
  }
  return out;
}

inline double distance_to(const std::vector<Vec2>& pts, Vec2 p) {
  double d = std::numeric_limits<double>::infinity();
  for (const Vec2& s : pts) d = std::min(d, std::hypot(p.x - s.x, p.y - s.y));
  return d;
}

}  // namespace detail

/// Cells where the largest |grad v| over the fields exceeds 1 - ridge_eps,
/// away from the special points and the boundary band, grouped into
/// 8-connected clusters. Each cluster is fitted by its principal axis; the
/// segment spans the extreme projections of its cell centers.
inline std::vector<RidgeSegment> divergence_ridges(const std::vector<ScalarField>& fields, const RidgeOptions& opt = {}) {
  if (fields.empty()) return {};
  const Grid& g0 = *fields.front().grid;
  for (const auto& f : fields) {
    const Grid& g = *f.grid;
    if (g.nx != g0.nx || g.ny != g0.ny || g.h() != g0.h() || g.cfg.x_min != g0.cfg.x_min) {
      throw ConfigError("divergence_ridges: fields do not share the grid geometry");
    }
  }
  const int ncx = g0.nx - 1, ncy = g0.ny - 1;
  std::vector<double> peak(static_cast<std::size_t>(ncx) * ncy, 0.0);
  std::vector<unsigned char> mark(peak.size(), 0);
  for (const auto& f : fields) {
    const Grid& g = *f.grid;
    const auto special = detail::special_points(g);
    for (int cj = 0; cj < ncy; ++cj) {
      for (int ci = 0; ci < ncx; ++ci) {
        const Vec2 c = detail::cell_center(g, ci, cj);
        if (detail::distance_to(special, c) < opt.exclusion_radius) continue;
        if (g.cfg.ell - std::abs(c.y) < opt.boundary_band) continue;
        const double n = std::sqrt(norm2(f.cell_gradient(ci, cj)));
        const auto k = static_cast<std::size_t>(g.cell(ci, cj));
        peak[k] = std::max(peak[k], n);
        if (n > 1.0 - opt.ridge_eps) mark[k] = 1;
      }
    }
  }
  std::vector<RidgeSegment> out;
  std::vector<unsigned char> seen(mark.size(), 0);
  for (int s = 0; s < static_cast<int>(mark.size()); ++s) {
    if (!mark[s] || seen[s]) continue;
    std::vector<int> stack{s}, members;
    seen[s] = 1;
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      members.push_back(c);
      const int ci = c % ncx, cj = c / ncx;
      for (int dj = -1; dj <= 1; ++dj) {
        for (int di = -1; di <= 1; ++di) {
          const int a = ci + di, b = cj + dj;
          if (a < 0 || b < 0 || a >= ncx || b >= ncy) continue;
          const int d = g0.cell(a, b);
          if (mark[d] && !seen[d]) {
            seen[d] = 1;
            stack.push_back(d);
          }
        }
      }
    }
    if (static_cast<int>(members.size()) < opt.min_cells) continue;
    Eigen::MatrixX2d P(members.size(), 2);
    RidgeSegment seg;
    seg.cells = static_cast<int>(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      const Vec2 c = detail::cell_center(g0, members[k] % ncx, members[k] / ncx);
      P(static_cast<Eigen::Index>(k), 0) = c.x;
      P(static_cast<Eigen::Index>(k), 1) = c.y;
      seg.max_gradient = std::max(seg.max_gradient, peak[members[k]]);
    }
    const Eigen::RowVector2d mean = P.colwise().mean();
    const Eigen::MatrixX2d D = P.rowwise() - mean;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(D.transpose() * D);
    const Eigen::Vector2d dir = es.eigenvectors().col(1);
    const Eigen::VectorXd t = D * dir;
    const double t0 = t.minCoeff(), t1 = t.maxCoeff();
    seg.a = {mean(0) + t0 * dir(0), mean(1) + t0 * dir(1)};
    seg.b = {mean(0) + t1 * dir(0), mean(1) + t1 * dir(1)};
    out.push_back(seg);
  }
  return out;
}

/// True when the segment lies along the line from `from` to `to`: its
/// direction is within angle_tol (radians) of to - from and its endpoints
/// are within dist_tol of that line.
inline bool ridge_points_along(const RidgeSegment& s, Vec2 from, Vec2 to, double angle_tol = 0.35,
                               double dist_tol = 0.1) {
  const Vec2 d{to.x - from.x, to.y - from.y};
  const double len = std::hypot(d.x, d.y);
  if (len == 0.0 || s.length() == 0.0) return false;
  const Vec2 e{s.b.x - s.a.x, s.b.y - s.a.y};
  const double c = std::abs(d.x * e.x + d.y * e.y) / (len * s.length());
  if (std::acos(std::min(1.0, c)) > angle_tol) return false;
  auto off = [&](Vec2 p) { return std::abs(d.x * (p.y - from.y) - d.y * (p.x - from.x)) / len; };
  return off(s.a) <= dist_tol && off(s.b) <= dist_tol;
}

enum class FluxTag { plus_infinity, minus_infinity, finite };

inline const char* flux_tag_name(FluxTag t) {
  switch (t) {
    case FluxTag::plus_infinity: return "u->+inf";
    case FluxTag::minus_infinity: return "u->-inf";
    case FluxTag::finite: return "finite";
  }
  return "finite";
}

struct FluxReport {
  double x0 = 0.0;
  double x1 = 0.0;
  double y = 0.0;
  double length = 0.0;  // |T|
  double flux = 0.0;    // integral of dv along the edge, boundary orientation
  FluxTag tag = FluxTag::finite;
};

/// Integral of dv along the horizontal grid segment from x0 to x1 on the
/// row at height y, with the counter-clockwise boundary orientation
/// (right to left on y = +ell, left to right elsewhere). Tagged +inf or -inf
/// when within flux_tol |T| of +|T| or -|T|.
inline FluxReport boundary_flux_classify(const ScalarField& field, double x0, double x1, double y,
                                         double flux_tol = 0.02) {
  const Grid& g = *field.grid;
  if (x1 < x0) std::swap(x0, x1);
  const double h = g.h();
  const double jy = (y - g.lattice_y(0)) / h;
  auto on_lattice = [](double s) { return std::abs(s - std::round(s)) <= 1e-9; };
  const double ix0 = x0 * static_cast<double>(g.n_per_unit) - static_cast<double>(g.i_offset);
  const double ix1 = x1 * static_cast<double>(g.n_per_unit) - static_cast<double>(g.i_offset);
  if (!on_lattice(jy) || !on_lattice(ix0) || !on_lattice(ix1)) {
    throw ConfigError("boundary_flux_classify: edge is not grid-aligned");
  }
  const int j = static_cast<int>(std::lround(jy));
  const int i0 = static_cast<int>(std::lround(ix0)), i1 = static_cast<int>(std::lround(ix1));
  if (j < 0 || j >= g.ny || i0 < 0 || i1 >= g.nx || i0 == i1) {
    throw ConfigError("boundary_flux_classify: edge is outside the grid");
  }
  FluxReport r;
  r.x0 = x0;
  r.x1 = x1;
  r.y = y;
  r.length = x1 - x0;
  double s = 0.0;
  for (int i = i0; i < i1; ++i) s += field.at(i + 1, j) - field.at(i, j);
  r.flux = (j == g.ny - 1) ? -s : s;
  if (std::abs(r.flux - r.length) <= flux_tol * r.length) r.tag = FluxTag::plus_infinity;
  else if (std::abs(r.flux + r.length) <= flux_tol * r.length) r.tag = FluxTag::minus_infinity;
  return r;
}

/// Every edge (k, k + 1) of the top boundary inside the window.
inline std::vector<FluxReport> top_boundary_fluxes(const ScalarField& field, double flux_tol = 0.02) {
  const Grid& g = *field.grid;
  std::vector<FluxReport> out;
  for (long k = static_cast<long>(std::ceil(g.cfg.x_min)); k + 1 <= static_cast<long>(std::floor(g.cfg.x_max)); ++k) {
    out.push_back(boundary_flux_classify(field, static_cast<double>(k), static_cast<double>(k + 1), g.cfg.ell, flux_tol));
  }
  return out;
}

/// Tag the top edge (k, k + 1) should carry: +inf for odd k, -inf for even k.
inline FluxTag expected_top_tag(long k) {
  return (k % 2 != 0) ? FluxTag::plus_infinity : FluxTag::minus_infinity;
}

/// |grad u| = |grad v| / sqrt(1 - |grad v|^2); infinite at |grad v| >= 1.
inline double conjugate_gradient_norm(Vec2 g) {
  const double n2 = norm2(g);
  if (n2 >= 1.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(n2 / (1.0 - n2));
}

struct GradientFloor {
  double delta = 0.0;         // largest radius k h with |grad u| >= C on every cell inside it
  double box_radius = 0.0;    // largest radius scanned
  double min_inside = 0.0;    // smallest |grad u| over the cells inside delta
};

/// Largest grid radius delta = k h such that every cell whose center lies
/// in D(center, delta) has |grad u| >= C. The center must be a singular node
/// or a vertex (k, +-ell) of the window, within h / 2. The scan stops at the
/// box radius min(ell, distance to the window ends).
inline GradientFloor gradient_floor_check(const ScalarField& field, Vec2 center, double C) {
  const Grid& g = *field.grid;
  const double h = g.h();
  bool special = false;
  for (const Vec2& s : detail::special_points(g)) {
    if (std::hypot(s.x - center.x, s.y - center.y) <= 0.5 * h) {
      center = s;
      special = true;
    }
  }
  if (!special) {
    std::ostringstream os;
    os << "gradient_floor_check: (" << center.x << ", " << center.y << ") is not a singular node or a vertex";
    throw ConfigError(os.str());
  }
  GradientFloor r;
  r.box_radius = std::min({g.cfg.ell, center.x - g.cfg.x_min, g.cfg.x_max - center.x});
  const int kmax = static_cast<int>(std::floor(r.box_radius / h + 1e-9));
  // First radius at which some cell fails.
  double fail = std::numeric_limits<double>::infinity();
  double min_ok = std::numeric_limits<double>::infinity();
  for (int cj = 0; cj < g.ny - 1; ++cj) {
    for (int ci = 0; ci < g.nx - 1; ++ci) {
      const Vec2 c = detail::cell_center(g, ci, cj);
      const double d = std::hypot(c.x - center.x, c.y - center.y);
      if (d > r.box_radius) continue;
      const double n = conjugate_gradient_norm(field.cell_gradient(ci, cj));
      if (n < C) fail = std::min(fail, d);
    }
  }
  for (int k = kmax; k >= 0; --k) {
    if (k * h < fail) {
      r.delta = k * h;
      break;
    }
  }
  for (int cj = 0; cj < g.ny - 1; ++cj) {
    for (int ci = 0; ci < g.nx - 1; ++ci) {
      const Vec2 c = detail::cell_center(g, ci, cj);
      if (std::hypot(c.x - center.x, c.y - center.y) <= r.delta) {
        min_ok = std::min(min_ok, conjugate_gradient_norm(field.cell_gradient(ci, cj)));
      }
    }
  }
  r.min_inside = r.delta > 0.0 ? min_ok : 0.0;
  return r;
}

struct CurvatureCell {
  Vec2 at;
  double grad_v = 0.0;        // |grad v| at the cell center
  double grad_u_fit = 0.0;    // |grad u| from the fitted u values
  double grad_u_direct = 0.0; // |grad u| from grad v through the W substitution
  double K = 0.0;             // Gauss curvature of the graph of u
  double distance = 0.0;      // to the nearest special point
};

struct CurvatureField {
  std::vector<CurvatureCell> cells;
  double probe_distance = 0.0;  // delta / 2
  double max_abs_K = 0.0;       // over cells at least probe_distance from special points
  /// max |grad_u_fit - grad_u_direct| / max(1, grad_u_direct) over the same cells
  double max_gradient_gap = 0.0;
};

/// Gauss curvature K = (u_xx u_yy - u_xy^2) / (1 + |grad u|^2)^2 of the
/// graph of u on the upper half. u is the dual primitive of dPhi; at each
/// cell a quadratic is fitted by least squares to u at the 3 x 3 block of
/// cell centers around it. Cells with a pinned corner, or whose block
/// touches one, are skipped. The maximum is taken over cells at distance at
/// least delta / 2 from every singular node and vertex.
inline CurvatureField curvature_field(const ConjugateForms& forms, const DualPotential& u, double delta) {
  const Grid& g = forms.grid();
  const int a = g.axis_row;
  CurvatureField out;
  out.probe_distance = 0.5 * delta;
  const auto special = detail::special_points(g);
  auto touches_pinned = [&](int ci, int cj) {
    for (int n : g.cell_nodes(ci, cj)) {
      if (forms.field.pinned(n)) return true;
    }
    return false;
  };
  for (int r = 1; r + 1 < u.ncy; ++r) {
    for (int ci = 1; ci + 1 < u.ncx; ++ci) {
      bool skip = false;
      for (int dr = -1; dr <= 1 && !skip; ++dr) {
        for (int di = -1; di <= 1 && !skip; ++di) skip = touches_pinned(ci + di, a + r + dr);
      }
      if (skip) continue;
      const Vec2 c0 = u.position(ci, r);
      Eigen::Matrix<double, 9, 6> A;
      Eigen::Matrix<double, 9, 1> b;
      int row = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int di = -1; di <= 1; ++di, ++row) {
          const Vec2 p = u.position(ci + di, r + dr);
          const double dx = p.x - c0.x, dy = p.y - c0.y;
          A.row(row) << 1.0, dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy;
          b(row) = u.at(ci + di, r + dr);
        }
      }
      const Eigen::Matrix<double, 6, 1> c = A.colPivHouseholderQr().solve(b);
      const double gx = c(1), gy = c(2), uxx = c(3), uxy = c(4), uyy = c(5);
      CurvatureCell cell;
      cell.at = c0;
      const Vec2 gv = forms.grad[g.cell(ci, a + r)];
      cell.grad_v = std::sqrt(norm2(gv));
      cell.grad_u_fit = std::hypot(gx, gy);
      cell.grad_u_direct = conjugate_gradient_norm(gv);
      const double s = 1.0 + gx * gx + gy * gy;
      cell.K = (uxx * uyy - uxy * uxy) / (s * s);
      cell.distance = detail::distance_to(special, c0);
      if (cell.distance >= out.probe_distance) {
        out.max_abs_K = std::max(out.max_abs_K, std::abs(cell.K));
        const double gap = std::abs(cell.grad_u_fit - cell.grad_u_direct) / std::max(1.0, cell.grad_u_direct);
        out.max_gradient_gap = std::max(out.max_gradient_gap, gap);
      }
      out.cells.push_back(cell);
    }
  }
  return out;
}

inline void write_curvature_csv(const CurvatureField& f, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw MeshError("cannot open " + path);
  os.precision(17);
  os << "x,y,grad_v,K\n";
  for (const auto& c : f.cells) os << c.at.x << ',' << c.at.y << ',' << c.grad_v << ',' << c.K << '\n';
}

inline void write_ridges_csv(const std::vector<RidgeSegment>& r, const RidgeOptions& opt, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw MeshError("cannot open " + path);
  os.precision(17);
  os << "# ridge_eps=" << opt.ridge_eps << " exclusion_radius=" << opt.exclusion_radius
     << " boundary_band=" << opt.boundary_band << '\n';
  os << "x0,y0,x1,y1,cells,max_grad_v\n";
  for (const auto& s : r) os << s.a.x << ',' << s.a.y << ',' << s.b.x << ',' << s.b.y << ',' << s.cells << ',' << s.max_gradient << '\n';
}

inline void write_flux_csv(const std::vector<FluxReport>& f, double flux_tol, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw MeshError("cannot open " + path);
  os.precision(17);
  os << "# flux_tol=" << flux_tol << '\n';
  os << "x0,x1,y,length,flux,tag\n";
  for (const auto& r : f) os << r.x0 << ',' << r.x1 << ',' << r.y << ',' << r.length << ',' << r.flux << ',' << flux_tag_name(r.tag) << '\n';
}

}  // namespace qpsurf
