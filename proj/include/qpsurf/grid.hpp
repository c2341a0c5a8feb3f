#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "qpsurf/error.hpp"
#include "qpsurf/strip_domain.hpp"

namespace qpsurf {

enum class NodeKind : std::uint8_t { free, boundary, singular };

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm2(Vec2 a) { return a.x * a.x + a.y * a.y; }

/// Shape-function gradients of a bilinear quad at one reference point.
/// Corner order is 00, 10, 11, 01 (counter-clockwise).
struct ShapeGradients {
  std::array<double, 4> dx{};
  std::array<double, 4> dy{};
  std::array<double, 4> n{};  // shape values
  double det = 0.0;

  Vec2 apply(const std::array<double, 4>& v) const {
    return {dx[0] * v[0] + dx[1] * v[1] + dx[2] * v[2] + dx[3] * v[3],
            dy[0] * v[0] + dy[1] * v[1] + dy[2] * v[2] + dy[3] * v[3]};
  }
};

inline ShapeGradients shape_gradients(const std::array<Vec2, 4>& c, double xi, double eta) {
  const std::array<double, 4> dxi{-(1.0 - eta), (1.0 - eta), eta, -eta};
  const std::array<double, 4> deta{-(1.0 - xi), -xi, xi, (1.0 - xi)};
  double j11 = 0, j12 = 0, j21 = 0, j22 = 0;  // J = d(x,y)/d(xi,eta)
  for (int k = 0; k < 4; ++k) {
    j11 += c[k].x * dxi[k];
    j12 += c[k].x * deta[k];
    j21 += c[k].y * dxi[k];
    j22 += c[k].y * deta[k];
  }
  ShapeGradients s;
  s.det = j11 * j22 - j12 * j21;
  const double inv = 1.0 / s.det;
  for (int k = 0; k < 4; ++k) {
    // grad N = J^{-T} grad_ref N
    s.dx[k] = inv * (j22 * dxi[k] - j21 * deta[k]);
    s.dy[k] = inv * (-j12 * dxi[k] + j11 * deta[k]);
  }
  s.n = {(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta};
  return s;
}

/// One-point cell operator: the gradient at the cell center, the cell
/// area, and the hourglass vector used for stabilization. The hourglass
/// vector annihilates affine fields on any quad.
struct CellStencil {
  ShapeGradients center;
  double area = 0.0;
  std::array<double, 4> hourglass{};

  Vec2 gradient(const std::array<double, 4>& v) const { return center.apply(v); }
  double hourglass_amplitude(const std::array<double, 4>& v) const {
    return hourglass[0] * v[0] + hourglass[1] * v[1] + hourglass[2] * v[2] + hourglass[3] * v[3];
  }
};

inline CellStencil make_cell_stencil(const std::array<Vec2, 4>& c) {
  CellStencil st;
  st.center = shape_gradients(c, 0.5, 0.5);
  st.area = st.center.det;  // exact for bilinear quads
  const std::array<double, 4> hv{1.0, -1.0, 1.0, -1.0};
  double hx = 0.0, hy = 0.0;
  for (int k = 0; k < 4; ++k) {
    hx += hv[k] * c[k].x;
    hy += hv[k] * c[k].y;
  }
  for (int k = 0; k < 4; ++k) st.hourglass[k] = hv[k] - hx * st.center.dx[k] - hy * st.center.dy[k];
  return st;
}

/// Node lattice of the truncated box. Nodes near each singular anchor 2p are
/// sheared horizontally so that the anchor node lands exactly on q; the top
/// and bottom rows and all integer columns away from the anchors are fixed.
struct Grid {
  StripConfig cfg;
  SingularSet S;
  int nx = 0;
  int ny = 0;
  int axis_row = 0;
  long n_per_unit = 0;
  long i_offset = 0;  // lattice index of x_min
  std::vector<double> x, y;
  std::vector<NodeKind> kind;
  std::vector<double> data;  // prescribed value at pinned nodes, 0 elsewhere
  std::vector<int> singular_columns;
  std::vector<CellStencil> cells;  // (nx-1)*(ny-1) cells
  std::vector<double> lumped;      // a quarter of the area of each adjacent cell

  double h() const { return cfg.grid_h; }
  int idx(int i, int j) const { return j * nx + i; }
  int cell(int i, int j) const { return j * (nx - 1) + i; }
  int ncells() const { return (nx - 1) * (ny - 1); }
  int nnodes() const { return nx * ny; }

  double lattice_x(int i) const { return static_cast<double>(i_offset + i) / static_cast<double>(n_per_unit); }
  double lattice_y(int j) const {
    return static_cast<double>(j - axis_row) / static_cast<double>(n_per_unit);
  }
  /// Column index of a lattice abscissa, or -1 if outside.
  int column_of(double x_lattice) const {
    const long k = std::lround(x_lattice * static_cast<double>(n_per_unit)) - i_offset;
    return (k < 0 || k >= nx) ? -1 : static_cast<int>(k);
  }
  Vec2 node(int i, int j) const { return {x[idx(i, j)], y[idx(i, j)]}; }

  std::array<int, 4> cell_nodes(int ci, int cj) const {
    return {idx(ci, cj), idx(ci + 1, cj), idx(ci + 1, cj + 1), idx(ci, cj + 1)};
  }
  std::array<Vec2, 4> cell_corners(int ci, int cj) const {
    return {node(ci, cj), node(ci + 1, cj), node(ci + 1, cj + 1), node(ci, cj + 1)};
  }
  /// Row j mirrored across the axis.
  int mirror_row(int j) const { return 2 * axis_row - j; }
};

struct WarpShape {
  double plateau_x = 0.25;
  double fade_x = 0.75;
  double plateau_y_frac = 0.25;
  double fade_y_frac = 0.75;
};

namespace detail {

inline double ramp(double d, double plateau, double fade) {
  d = std::abs(d);
  if (d <= plateau) return 1.0;
  if (d >= fade) return 0.0;
  return (fade - d) / (fade - plateau);
}

}  // namespace detail

inline std::shared_ptr<const Grid> make_grid(const StripConfig& cfg, const SingularSet& S,
                                             const WarpShape& warp = {}) {
  cfg.validate();
  S.validate_order();
  auto g = std::make_shared<Grid>();
  g->cfg = cfg;
  g->S = S;
  g->n_per_unit = cfg.per_unit();
  g->axis_row = static_cast<int>(cfg.half_height_cells());
  g->ny = 2 * g->axis_row + 1;
  g->i_offset = std::lround(cfg.x_min * static_cast<double>(g->n_per_unit));
  g->nx = static_cast<int>(std::lround((cfg.x_max - cfg.x_min) * static_cast<double>(g->n_per_unit))) + 1;
  const int nx = g->nx, ny = g->ny;
  g->x.resize(nx * ny);
  g->y.resize(nx * ny);
  g->kind.assign(nx * ny, NodeKind::free);
  g->data.assign(nx * ny, 0.0);

  const double max_shift = warp.fade_x - warp.plateau_x;
  for (std::size_t s = 0; s < S.size(); ++s) {
    if (std::abs(S.offset(s)) >= 0.9 * max_shift) {
      throw ConfigError("singularity offset too large for the grid warp");
    }
    const double anchor = 2.0 * static_cast<double>(S.p[s]);
    if (anchor - warp.fade_x <= cfg.x_min || anchor + warp.fade_x >= cfg.x_max) {
      throw ConfigError("singularity anchor too close to the truncation window");
    }
  }
  for (int j = 0; j < ny; ++j) {
    const double yl = g->lattice_y(j);
    const double gy = detail::ramp(yl, warp.plateau_y_frac * cfg.ell, warp.fade_y_frac * cfg.ell);
    for (int i = 0; i < nx; ++i) {
      const double xl = g->lattice_x(i);
      double shift = 0.0;
      if (gy > 0.0) {
        for (std::size_t s = 0; s < S.size(); ++s) {
          const double anchor = 2.0 * static_cast<double>(S.p[s]);
          shift += S.offset(s) * detail::ramp(xl - anchor, warp.plateau_x, warp.fade_x) * gy;
        }
      }
      const int k = g->idx(i, j);
      g->x[k] = xl + shift;
      g->y[k] = yl;
    }
  }
  for (int i = 0; i < nx; ++i) {
    for (int j : {0, ny - 1}) {
      const int k = g->idx(i, j);
      g->kind[k] = NodeKind::boundary;
      g->data[k] = (i == 0 || i == nx - 1) ? 0.0 : phi_on_line(g->lattice_x(i));
    }
  }
  for (int j = 0; j < ny; ++j) {
    for (int i : {0, nx - 1}) {
      const int k = g->idx(i, j);
      g->kind[k] = NodeKind::boundary;
      g->data[k] = 0.0;
    }
  }
  for (std::size_t s = 0; s < S.size(); ++s) {
    const int col = g->column_of(2.0 * static_cast<double>(S.p[s]));
    const int k = g->idx(col, g->axis_row);
    g->kind[k] = NodeKind::singular;
    g->data[k] = 0.0;
    g->singular_columns.push_back(col);
  }

  g->cells.resize(g->ncells());
  g->lumped.assign(nx * ny, 0.0);
  for (int cj = 0; cj < ny - 1; ++cj) {
    for (int ci = 0; ci < nx - 1; ++ci) {
      const auto corners = g->cell_corners(ci, cj);
      for (const auto& c : {shape_gradients(corners, 0, 0), shape_gradients(corners, 1, 0),
                            shape_gradients(corners, 1, 1), shape_gradients(corners, 0, 1)}) {
        if (!(c.det > 0.0)) throw ConfigError("grid warp produced a folded cell");
      }
      auto& st = g->cells[g->cell(ci, cj)];
      st = make_cell_stencil(corners);
      for (int k : g->cell_nodes(ci, cj)) g->lumped[k] += 0.25 * st.area;
    }
  }
  return g;
}

/// Nodal values on a grid together with solver bookkeeping.
struct ScalarField {
  std::shared_ptr<const Grid> grid;
  std::vector<double> values;
  double residual_norm = std::numeric_limits<double>::quiet_NaN();
  /// Residual level explained by rounding the nodal values to doubles.
  double rounding_floor = 0.0;
  double tol_pde = 1e-8;
  double eps_cap = 0.0;
  int newton_iterations = 0;
  int continuation_steps = 0;

  double h() const { return grid->h(); }
  double at(int i, int j) const { return values[grid->idx(i, j)]; }
  bool pinned(int k) const { return grid->kind[k] != NodeKind::free; }

  std::array<double, 4> cell_values(int ci, int cj) const {
    const auto n = grid->cell_nodes(ci, cj);
    return {values[n[0]], values[n[1]], values[n[2]], values[n[3]]};
  }
  /// Gradient of the bilinear interpolant at a reference point of a cell.
  Vec2 gradient(int ci, int cj, double xi, double eta) const {
    return shape_gradients(grid->cell_corners(ci, cj), xi, eta).apply(cell_values(ci, cj));
  }
  Vec2 cell_gradient(int ci, int cj) const { return grid->cells[grid->cell(ci, cj)].gradient(cell_values(ci, cj)); }
};

/// CSV dump of (x, y, v) per node.
inline void write_field_csv(const ScalarField& f, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw MeshError("cannot open " + path);
  os.precision(17);
  os << "x,y,v\n";
  const auto& g = *f.grid;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int k = g.idx(i, j);
      os << g.x[k] << ',' << g.y[k] << ',' << f.values[k] << '\n';
    }
  }
}

/// Row-major float64 dump preceded by a four-line text header (nx, ny, h, window).
inline void write_field_binary(const ScalarField& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MeshError("cannot open " + path);
  const auto& g = *f.grid;
  os.precision(17);
  os << "nx " << g.nx << "\nny " << g.ny << "\nh " << g.h() << "\nL " << g.cfg.x_min << ' ' << g.cfg.x_max
     << '\n';
  os.write(reinterpret_cast<const char*>(f.values.data()),
           static_cast<std::streamsize>(f.values.size() * sizeof(double)));
}

struct BinaryFieldDump {
  int nx = 0;
  int ny = 0;
  double h = 0.0;
  double x_min = 0.0;
  double x_max = 0.0;
  std::vector<double> values;
};

inline BinaryFieldDump read_field_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MeshError("cannot open " + path);
  BinaryFieldDump d;
  std::string key;
  is >> key >> d.nx >> key >> d.ny >> key >> d.h >> key >> d.x_min >> d.x_max;
  is.get();  // trailing newline of the header
  d.values.resize(static_cast<std::size_t>(d.nx) * d.ny);
  is.read(reinterpret_cast<char*>(d.values.data()), static_cast<std::streamsize>(d.values.size() * sizeof(double)));
  if (!is) throw MeshError("truncated field dump " + path);
  return d;
}

}  // namespace qpsurf
