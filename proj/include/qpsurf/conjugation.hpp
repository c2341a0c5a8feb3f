#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qpsurf/error.hpp"
#include "qpsurf/grid.hpp"
#include "qpsurf/maximal_solver.hpp"

namespace qpsurf {

enum class Form { dphi, dx1, dx2, dx3 };

/// W = sqrt(1 - |g|^2).
inline double lorentz_factor(Vec2 g) { return std::sqrt(1.0 - norm2(g)); }

/// Integrand of a form for a constant gradient g of v along the vector d.
/// dX3 is dv itself.
inline double form_integrand(Form f, Vec2 g, Vec2 d) {
  if (f == Form::dx3) return dot(g, d);
  const double W = lorentz_factor(g);
  switch (f) {
    case Form::dphi: return (g.y * d.x - g.x * d.y) / W;
    case Form::dx1: return (-g.x * g.y * d.x + (1.0 - g.y * g.y) * d.y) / W;
    case Form::dx2: return (-(1.0 - g.x * g.x) * d.x + g.x * g.y * d.y) / W;
    case Form::dx3: break;
  }
  return 0.0;
}

/// Gradient of the conjugate function: u_x = v_y/W, u_y = -v_x/W.
inline Vec2 conjugate_gradient(Vec2 g) {
  const double W = lorentz_factor(g);
  return {g.y / W, -g.x / W};
}

/// The same integrands written in terms of the gradient of u.
inline double form_integrand_from_u(Form f, Vec2 gu, Vec2 d) {
  const double s = std::sqrt(1.0 + norm2(gu));
  switch (f) {
    case Form::dx1: return (gu.x * gu.y * d.x + (1.0 + gu.y * gu.y) * d.y) / s;
    case Form::dx2: return (-(1.0 + gu.x * gu.x) * d.x - gu.x * gu.y * d.y) / s;
    case Form::dphi: return dot(gu, d);
    case Form::dx3: break;
  }
  throw std::invalid_argument("form_integrand_from_u: dX3 is not a function of grad u");
}

/// Node of the grid as a (column, row) pair.
using NodeIndex = std::pair<int, int>;

namespace detail {

/// Derivatives of the cell energy -A W + (kappa/2) H^2 with respect to the
/// x and y positions of the four corners (configurational forces). They sum
/// to zero over the corners, like the dE/dv contributions, and play the same
/// role for dX1 and dX2 that those play for dPhi.
inline std::array<std::array<double, 4>, 2> translation_kernels(const CellStencil& st,
                                                                 const std::array<double, 4>& lv) {
  const auto& sg = st.center;
  const Vec2 g = sg.apply(lv);
  const double iw = 1.0 / lorentz_factor(g);
  const double hg = kHourglassWeight * st.hourglass_amplitude(lv);
  std::array<std::array<double, 4>, 2> c{};
  for (int k = 0; k < 4; ++k) {
    const double nx = sg.dx[k], ny = sg.dy[k];
    c[0][k] = -st.area * ((1.0 - g.y * g.y) * nx + g.x * g.y * ny) * iw - hg * st.hourglass[k] * g.x;
    c[1][k] = -st.area * (g.x * g.y * nx + (1.0 - g.x * g.x) * ny) * iw - hg * st.hourglass[k] * g.y;
  }
  return c;
}

/// Half-edge values S, E, N, W of a cell from per-corner kernel values.
inline std::array<double, 4> half_edges_from_kernel(const std::array<double, 4>& c) {
  std::array<double, 4> a{};
  a[0] = 0.25 * (2.0 * c[1] + c[2] - c[0]);
  a[1] = a[0] - c[1];
  a[2] = a[1] - c[2];
  a[3] = a[0] + c[0];
  return a;
}

}  // namespace detail

/// Discrete 1-forms of a solved field.
///
/// Dual half-edges run from a cell center to the midpoint of one of its
/// sides (S, E, N, W). dPhi is built from the cell's contributions to the
/// discrete Euler-Lagrange equation, so the dPhi loop around a set of nodes
/// equals the sum of their weak residuals. dX1 and dX2 are built the same
/// way from the derivatives of the cell energy with respect to the corner
/// positions, so their loops equal the summed configurational forces of the
/// enclosed nodes. dX3 is dv, taken from nodal values.
struct ConjugateForms {
  ScalarField field;
  std::vector<std::array<double, 4>> dphi;  // per cell, sides S, E, N, W
  std::vector<std::array<double, 4>> dx1;
  std::vector<std::array<double, 4>> dx2;
  std::vector<Vec2> grad;                   // cell-center gradient of v
  std::vector<unsigned char> lightlike;     // cells too close to |grad v| = 1
  double source_residual = 0.0;

  const Grid& grid() const { return *field.grid; }
  double h() const { return field.h(); }

  /// Closedness bound of dPhi loops enclosing only free nodes.
  double closedness_bound() const { return 4.0 * source_residual * h(); }

  Vec2 center(int ci, int cj) const {
    const auto c = grid().cell_corners(ci, cj);
    return 0.25 * (c[0] + c[1] + c[2] + c[3]);
  }

  Vec2 half_edge_vector(int ci, int cj, int side) const {
    const auto c = grid().cell_corners(ci, cj);
    return 0.5 * (c[side] + c[(side + 1) % 4]) - center(ci, cj);
  }

  /// Integral of a form from the center of a cell to one side midpoint.
  double half_edge(Form f, int ci, int cj, int side) const {
    const int cell = grid().cell(ci, cj);
    switch (f) {
      case Form::dphi: return dphi[cell][side];
      case Form::dx1: return dx1[cell][side];
      case Form::dx2: return dx2[cell][side];
      case Form::dx3: break;
    }
    const auto v = field.cell_values(ci, cj);
    const double mean = 0.25 * (v[0] + v[1] + v[2] + v[3]);
    return 0.5 * (v[side] + v[(side + 1) % 4]) - mean;
  }

  /// Dual edge from the center of cell (ci, cj) to the center of its
  /// neighbour across `side`.
  double dual_step(Form f, int ci, int cj, int side) const {
    static constexpr int di[4] = {0, 1, 0, -1}, dj[4] = {-1, 0, 1, 0};
    return half_edge(f, ci, cj, side) - half_edge(f, ci + di[side], cj + dj[side], (side + 2) % 4);
  }

  /// Part of the dual loop around corner k that lies in cell (ci, cj),
  /// counter-clockwise about the corner.
  double dual_piece(Form f, int ci, int cj, int corner) const {
    return half_edge(f, ci, cj, (corner + 3) % 4) - half_edge(f, ci, cj, corner);
  }

  /// Counter-clockwise dual loop around the node block [i0,i1] x [j0,j1].
  double dual_loop(Form f, int i0, int i1, int j0, int j1) const {
    const Grid& g = grid();
    if (i0 < 1 || j0 < 1 || i1 > g.nx - 2 || j1 > g.ny - 2 || i0 > i1 || j0 > j1) {
      throw std::out_of_range("dual_loop: node block must be interior");
    }
    // Sum of the loops around each node; interior half-edges cancel.
    double s = 0.0;
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        s += dual_piece(f, i, j, 0) + dual_piece(f, i - 1, j, 1) + dual_piece(f, i - 1, j - 1, 2) +
             dual_piece(f, i, j - 1, 3);
      }
    }
    return s;
  }

  /// Dual loop around the axis node (ic, axis) of half-width m cells: it
  /// encloses the nodes within m - 1 of the center.
  double centered_loop(Form f, int ic, int m) const {
    const int a = grid().axis_row;
    return dual_loop(f, ic - (m - 1), ic + (m - 1), a - (m - 1), a + (m - 1));
  }

  /// Upper half of centered_loop: from the axis midpoint right of the node
  /// block, over the top, to the axis midpoint left of it. Uses only cells
  /// above the axis.
  double upper_half_loop(Form f, int ic, int m) const {
    const Grid& g = grid();
    const int a = g.axis_row;
    if (ic - m < 0 || ic + m > g.nx - 1 || a + m > g.ny - 1) throw std::out_of_range("upper_half_loop: leaves the box");
    const int right = ic + m - 1, left = ic - m, top = a + m - 1;
    double s = -half_edge(f, right, a, 0);
    for (int cj = a; cj < top; ++cj) s += dual_step(f, right, cj, 2);
    for (int ci = right; ci > left; --ci) s += dual_step(f, ci, top, 3);
    for (int cj = top; cj > a; --cj) s += dual_step(f, left, cj, 0);
    return s + half_edge(f, left, a, 0);
  }
};

inline ConjugateForms build_forms(const ScalarField& field) {
  const Grid& g = *field.grid;
  ConjugateForms F;
  F.field = field;
  F.source_residual = field.residual_norm;
  const int nc = g.ncells();
  F.dphi.resize(nc);
  F.dx1.resize(nc);
  F.dx2.resize(nc);
  F.grad.resize(nc);
  F.lightlike.assign(nc, 0);
  const double flag2 = (1.0 - 0.5 * field.eps_cap) * (1.0 - 0.5 * field.eps_cap);
  for (int cj = 0; cj < g.ny - 1; ++cj) {
    for (int ci = 0; ci < g.nx - 1; ++ci) {
      const int cell = g.cell(ci, cj);
      const auto& st = g.cells[cell];
      const auto lv = field.cell_values(ci, cj);
      const Vec2 gv = st.gradient(lv);
      F.grad[cell] = gv;
      if (!(norm2(gv) < 1.0)) throw LightlikeError("build_forms: lightlike cell");
      if (field.eps_cap > 0.0 && !(norm2(gv) < flag2)) F.lightlike[cell] = 1;
      F.dphi[cell] = detail::half_edges_from_kernel(detail::cell_kernel(st, lv).c);
      const auto t = detail::translation_kernels(st, lv);
      F.dx1[cell] = detail::half_edges_from_kernel(t[0]);
      F.dx2[cell] = detail::half_edges_from_kernel(t[1]);
    }
  }
  return F;
}

/// Multi-valuation of u around singularity i: the dPhi loop around the
/// block of nodes within m - 1 of the singular node (default m = 4).
inline double handle_size(const ConjugateForms& F, std::size_t i, int m = 4) {
  const Grid& g = F.grid();
  if (i >= g.singular_columns.size()) throw std::out_of_range("handle_size: singularity index");
  const int col = g.singular_columns[i];
  for (std::size_t k = 0; k < g.singular_columns.size(); ++k) {
    if (k != i && std::abs(g.singular_columns[k] - col) < 2 * m) {
      throw PeriodError("handle_size: loop overlaps the exclusion zone of another singularity");
    }
  }
  return F.centered_loop(Form::dphi, col, m);
}

/// Primitive of a dual form on the closed upper half: values at the centers
/// of the cells above the axis and at the midpoints of the axis edges.
struct DualPotential {
  std::shared_ptr<const Grid> grid;
  Form form = Form::dphi;
  int ncx = 0;
  int ncy = 0;  // rows of cells above the axis
  std::vector<double> center;  // ncx * ncy, row-major from the axis up
  std::vector<double> axis;    // ncx, midpoints of the axis edges
  std::pair<int, int> base{0, 0};
  int trunk = 0;

  double at(int ci, int r) const { return center[r * ncx + ci]; }
  /// Physical position of the center of cell (ci, axis_row + r).
  Vec2 position(int ci, int r) const {
    const auto c = grid->cell_corners(ci, grid->axis_row + r);
    return 0.25 * (c[0] + c[1] + c[2] + c[3]);
  }
};

/// Integrates a dual form over the upper half from the center of cell
/// (ci, r), r counted from the axis: to the trunk row, along it, then up and
/// down every column. A loop between two such paths encloses only nodes on
/// one side of the trunk, so a node whose dual loop is not closed affects
/// only the cells between it and the nearer boundary. trunk < 0 selects the
/// middle row.
inline DualPotential integrate_dual(const ConjugateForms& F, Form f, std::pair<int, int> base = {0, 0},
                                    int trunk = -1) {
  const Grid& g = F.grid();
  DualPotential u;
  u.grid = F.field.grid;
  u.form = f;
  u.ncx = g.nx - 1;
  u.ncy = g.ny - 1 - g.axis_row;
  if (base.first < 0 || base.first >= u.ncx || base.second < 0 || base.second >= u.ncy) {
    throw std::out_of_range("integrate_dual: base must be a cell of the upper half");
  }
  if (trunk < 0) trunk = u.ncy / 2;
  if (trunk >= u.ncy) throw std::out_of_range("integrate_dual: trunk row outside the upper half");
  u.base = base;
  u.trunk = trunk;
  u.center.assign(static_cast<std::size_t>(u.ncx) * u.ncy, 0.0);
  u.axis.assign(u.ncx, 0.0);
  const int a = g.axis_row;
  auto idx = [&](int ci, int r) { return static_cast<std::size_t>(r) * u.ncx + ci; };
  double s = 0.0;
  for (int r = base.second; r < trunk; ++r) s += F.dual_step(f, base.first, a + r, 2);
  for (int r = base.second; r > trunk; --r) s += F.dual_step(f, base.first, a + r, 0);
  u.center[idx(base.first, trunk)] = s;
  for (int ci = base.first + 1; ci < u.ncx; ++ci) {
    u.center[idx(ci, trunk)] = u.center[idx(ci - 1, trunk)] + F.dual_step(f, ci - 1, a + trunk, 1);
  }
  for (int ci = base.first - 1; ci >= 0; --ci) {
    u.center[idx(ci, trunk)] = u.center[idx(ci + 1, trunk)] + F.dual_step(f, ci + 1, a + trunk, 3);
  }
  for (int ci = 0; ci < u.ncx; ++ci) {
    for (int r = trunk + 1; r < u.ncy; ++r) u.center[idx(ci, r)] = u.center[idx(ci, r - 1)] + F.dual_step(f, ci, a + r - 1, 2);
    for (int r = trunk - 1; r >= 0; --r) u.center[idx(ci, r)] = u.center[idx(ci, r + 1)] + F.dual_step(f, ci, a + r + 1, 0);
    u.axis[ci] = u.center[idx(ci, 0)] + F.half_edge(f, ci, a, 0);
  }
  const double shift = u.center[idx(base.first, base.second)];
  for (double& x : u.center) x -= shift;
  for (double& x : u.axis) x -= shift;
  return u;
}

/// Conjugate function u (du = dPhi) on the upper half, zero at the base cell.
inline DualPotential integrate_u(const ConjugateForms& F, std::pair<int, int> base = {0, 0}) {
  return integrate_dual(F, Form::dphi, base);
}

inline void write_u_csv(const DualPotential& u, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw MeshError("cannot open " + path);
  os.precision(17);
  os << "x,y,u\n";
  for (int r = 0; r < u.ncy; ++r) {
    for (int ci = 0; ci < u.ncx; ++ci) {
      const Vec2 p = u.position(ci, r);
      os << p.x << ',' << p.y << ',' << u.at(ci, r) << '\n';
    }
  }
}

}  // namespace qpsurf
