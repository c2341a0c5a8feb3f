#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "qpsurf/conjugation.hpp"
#include "qpsurf/error.hpp"
#include "qpsurf/grid.hpp"
#include "qpsurf/period_engine.hpp"

namespace qpsurf {

enum class Tag : int { interior = 0, plane_x0 = 1, plane_z0 = 2, plane_z1 = 3, vertical_line_Ak = 4, truncation = 5 };

inline constexpr std::array<Tag, 6> kAllTags{Tag::interior, Tag::plane_x0, Tag::plane_z0,
                                             Tag::plane_z1, Tag::vertical_line_Ak, Tag::truncation};

inline const char* tag_name(Tag t) {
  switch (t) {
    case Tag::interior: return "interior";
    case Tag::plane_x0: return "plane_x0";
    case Tag::plane_z0: return "plane_z0";
    case Tag::plane_z1: return "plane_z1";
    case Tag::vertical_line_Ak: return "vertical_line_Ak";
    case Tag::truncation: return "truncation";
  }
  return "interior";
}

inline Tag tag_from_name(const std::string& s) {
  for (Tag t : kAllTags) {
    if (s == tag_name(t)) return t;
  }
  throw MeshError("unknown vertex tag '" + s + "'");
}

using Vec3 = std::array<double, 3>;

inline double dist3(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

/// Where a vertex came from: lattice column, row above the axis, symmetry
/// copy, and the side of a singular node (-1 left copy, +1 right copy).
struct Provenance {
  long column = 0;
  int row = 0;
  int copy = 0;
  int branch = 0;
  bool operator==(const Provenance&) const = default;
};

struct SurfaceMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Tag> tags;
  std::vector<Provenance> provenance;
  std::vector<std::string> comments;  // written as file comments
  double mesh_tol = 0.0;
  long per_unit = 0;                  // lattice columns per unit length
  std::vector<long> singular_lattice; // lattice columns of the singular nodes
  double axis_wobble = 0.0;           // largest |X1| departure of the integrated axis from its segment level

  std::size_t size() const { return vertices.size(); }
  bool empty() const { return vertices.empty(); }
};

struct BuildOptions {
  int loop_m = 10;           // period loop half-width; also the distance kept from singular nodes
  double tol_F = -1.0;       // negative: h^2
  bool require_periods = true;
  double mesh_tol = -1.0;    // negative: 10 h^2
};

namespace detail {

/// Nodes of the fundamental piece, addressed by column and row above the axis.
struct PieceIndex {
  int nx = 0;
  int rows = 0;
  int at(int i, int r) const { return r * nx + i; }
};

}  // namespace detail

/// Base point of the normalization: (-1, 0) when it lies inside the window,
/// otherwise 2 p_1 - 1, otherwise x_min + 1.
inline int base_column(const Grid& g) {
  int b = g.column_of(-1.0);
  if (b <= 0 || b >= g.nx - 1) {
    const double x = g.S.empty() ? g.cfg.x_min + 1.0 : 2.0 * static_cast<double>(g.S.p.front()) - 1.0;
    b = g.column_of(x);
  }
  if (b <= 0 || b >= g.nx - 1) throw MeshError("no base point inside the window");
  return b;
}

/// Conjugate immersion X* on the closed upper half strip.
///
/// X1 and X2 are integrated on the dual graph (cell centers and axis
/// midpoints) and carried to each grid node by the constant cell integrand,
/// averaged over the adjacent cells. On the axis, dX1 vanishes identically in
/// the continuum, so every axis segment C_i gets the mean of the integrated
/// X1 over its midpoints at least loop_m cells from its ends; consecutive
/// segments then differ by F_i / 2. The largest departure of the integrated
/// axis values from that mean is kept as axis_wobble. X3 = v. The singular
/// node gets one vertex per side of the cut, and the base node is mapped to
/// (0, 0, v).
inline SurfaceMesh build_fundamental_piece(const ConjugateForms& forms, const BuildOptions& opt = {}) {
  const Grid& g = forms.grid();
  const double h = g.h();
  const int m = opt.loop_m;
  const int a = g.axis_row;
  const int R = g.ny - 1 - a;
  const std::size_t N = g.singular_columns.size();

  const double tol_F = opt.tol_F < 0.0 ? h * h : opt.tol_F;
  std::vector<double> F(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    if (i > 0 && g.singular_columns[i] - g.singular_columns[i - 1] < 2 * m + 2) {
      throw MeshError("period loops of neighbouring singularities overlap");
    }
    F[i] = period_integral(forms, i, m);
    if (opt.require_periods && std::abs(F[i]) > tol_F) {
      std::ostringstream os;
      os << "unsolved period: F_" << i << " = " << F[i] << " exceeds " << tol_F;
      throw PeriodError(os.str());
    }
  }
  for (int cj = a; cj < g.ny - 1; ++cj) {
    for (int ci = 0; ci < g.nx - 1; ++ci) {
      if (forms.lightlike[g.cell(ci, cj)]) throw LightlikeError("lightlike cell in the upper half");
    }
  }

  const int b = base_column(g);
  std::vector<int> sing_index(g.nx, -1);
  for (std::size_t i = 0; i < N; ++i) sing_index[g.singular_columns[i]] = static_cast<int>(i);
  if (sing_index[b] >= 0) throw MeshError("base point is singular");
  const DualPotential P1 = integrate_dual(forms, Form::dx1, {b, 0});
  const DualPotential P2 = integrate_dual(forms, Form::dx2, {b, 0});

  // Node value from the cell (ci, r): dual value plus the cell integrand
  // from the center to the node.
  auto from_cell = [&](int ci, int r, int i, int j) {
    const int cj = a + r;
    const Vec2 d = g.node(i, j) - forms.center(ci, cj);
    const Vec2 gv = forms.grad[g.cell(ci, cj)];
    return Vec2{P1.at(ci, r) + form_integrand(Form::dx1, gv, d), P2.at(ci, r) + form_integrand(Form::dx2, gv, d)};
  };
  // X2 on the axis node i from the midpoint of axis edge ci.
  auto from_midpoint = [&](int ci, int i) {
    const Vec2 mid = 0.5 * (g.node(ci, a) + g.node(ci + 1, a));
    return P2.axis[ci] + form_integrand(Form::dx2, forms.grad[g.cell(ci, a)], g.node(i, a) - mid);
  };

  // Axis segments: segment k runs between singular columns k - 1 and k.
  std::vector<int> seg_lo(N + 1), seg_hi(N + 1);  // node columns bounding each segment
  for (std::size_t k = 0; k <= N; ++k) {
    seg_lo[k] = k == 0 ? 0 : g.singular_columns[k - 1];
    seg_hi[k] = k == N ? g.nx - 1 : g.singular_columns[k];
  }
  std::vector<double> level(N + 1, 0.0);
  for (std::size_t k = 0; k <= N; ++k) {
    double sum = 0.0;
    int count = 0;
    for (int ci = seg_lo[k] + m; ci + 1 <= seg_hi[k] - m; ++ci) {
      sum += P1.axis[ci];
      ++count;
    }
    if (count == 0) throw MeshError("axis segment shorter than twice loop_m");
    level[k] = sum / count;
  }
  double wobble = 0.0;
  for (std::size_t k = 0; k <= N; ++k) {
    for (int ci = seg_lo[k]; ci < seg_hi[k]; ++ci) wobble = std::max(wobble, std::abs(P1.axis[ci] - level[k]));
  }
  auto segment_of = [&](int c) {
    return static_cast<std::size_t>(std::upper_bound(g.singular_columns.begin(), g.singular_columns.end(), c - 1) -
                                    g.singular_columns.begin());
  };

  detail::PieceIndex P{g.nx, R + 1};
  std::vector<Vec2> X(static_cast<std::size_t>(P.nx * P.rows));
  std::vector<Vec2> q_left(N), q_right(N);
  for (int c = 0; c < g.nx; ++c) {
    const int s = sing_index[c];
    if (s >= 0) {
      q_left[s] = {level[s], from_midpoint(c - 1, c)};
      q_right[s] = {level[s + 1], from_midpoint(c, c)};
      continue;
    }
    double x2 = 0.0;
    int n = 0;
    if (c > 0) x2 += from_midpoint(c - 1, c), ++n;
    if (c < g.nx - 1) x2 += from_midpoint(c, c), ++n;
    X[P.at(c, 0)] = {level[segment_of(c)], x2 / n};
  }
  for (int r = 1; r <= R; ++r) {
    for (int c = 0; c < g.nx; ++c) {
      Vec2 sum{0.0, 0.0};
      int n = 0;
      for (int ci : {c - 1, c}) {
        for (int rr : {r - 1, r}) {
          if (ci < 0 || ci >= g.nx - 1 || rr >= R) continue;
          sum = sum + from_cell(ci, rr, c, a + r);
          ++n;
        }
      }
      X[P.at(c, r)] = (1.0 / n) * sum;
    }
  }
  const Vec2 origin = X[P.at(b, 0)];
  for (auto& x : X) x = x - origin;
  for (auto& x : q_left) x = x - origin;
  for (auto& x : q_right) x = x - origin;

  SurfaceMesh mesh;
  mesh.mesh_tol = opt.mesh_tol < 0.0 ? 10.0 * h * h : opt.mesh_tol;
  mesh.per_unit = g.n_per_unit;
  mesh.axis_wobble = wobble;
  for (int c : g.singular_columns) mesh.singular_lattice.push_back(g.i_offset + c);

  std::vector<int> vid(X.size(), -1), vid_right(X.size(), -1);
  for (int r = 0; r <= R; ++r) {
    for (int c = 0; c < g.nx; ++c) {
      const double v = forms.field.at(c, a + r);
      const long col = g.i_offset + c;
      auto push = [&](Vec2 p, Tag t, int branch) {
        mesh.vertices.push_back({p.x, p.y, v});
        mesh.tags.push_back(t);
        mesh.provenance.push_back({col, r, 0, branch});
        return static_cast<int>(mesh.vertices.size()) - 1;
      };
      if (r == 0 && sing_index[c] >= 0) {
        const int s = sing_index[c];
        vid[P.at(c, r)] = push(q_left[s], Tag::plane_z0, -1);
        vid_right[P.at(c, r)] = push(q_right[s], Tag::plane_z0, +1);
        continue;
      }
      Tag t = Tag::interior;
      if (r == R) {
        t = (col % g.n_per_unit == 0) ? Tag::vertical_line_Ak : Tag::truncation;
      } else if (r == 0) {
        t = Tag::plane_x0;
      } else if (c == 0 || c == g.nx - 1) {
        t = Tag::truncation;
      }
      vid[P.at(c, r)] = push(X[P.at(c, r)], t, 0);
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c + 1 < g.nx; ++c) {
      int v00 = vid[P.at(c, r)], v10 = vid[P.at(c + 1, r)];
      const int v11 = vid[P.at(c + 1, r + 1)], v01 = vid[P.at(c, r + 1)];
      if (r == 0 && sing_index[c] >= 0) v00 = vid_right[P.at(c, r)];  // right of the cut
      mesh.triangles.push_back({v00, v10, v11});
      mesh.triangles.push_back({v00, v11, v01});
    }
  }

  std::ostringstream os;
  os.precision(17);
  os << "ell=" << g.cfg.ell << " eta=" << g.cfg.eta << " eta0=" << g.cfg.eta0 << " h=" << h;
  mesh.comments.push_back(os.str());
  os.str("");
  os << "window=" << g.cfg.x_min << "," << g.cfg.x_max;
  mesh.comments.push_back(os.str());
  os.str("");
  os << "p=";
  for (std::size_t i = 0; i < N; ++i) os << (i ? "," : "") << g.S.p[i];
  mesh.comments.push_back(os.str());
  os.str("");
  os << "q=";
  for (std::size_t i = 0; i < N; ++i) os << (i ? "," : "") << g.S.q[i];
  mesh.comments.push_back(os.str());
  os.str("");
  os << "F=";
  for (std::size_t i = 0; i < N; ++i) os << (i ? "," : "") << F[i];
  mesh.comments.push_back(os.str());
  os.str("");
  os << "pde_residual=" << forms.source_residual << " mesh_tol=" << mesh.mesh_tol << " axis_wobble=" << wobble;
  mesh.comments.push_back(os.str());
  return mesh;
}

/// Spatial hash for proximity queries at a fixed radius.
class PointHash {
 public:
  explicit PointHash(double cell) : cell_(cell > 0.0 ? cell : 1.0) {}

  void insert(const Vec3& p, int id) { map_[key(cell_of(p))].push_back(id); }

  /// Ids stored in the 27 cells around p.
  template <class Fn>
  void near(const Vec3& p, Fn&& fn) const {
    const auto c = cell_of(p);
    for (long dz = -1; dz <= 1; ++dz) {
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) {
          auto it = map_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == map_.end()) continue;
          for (int id : it->second) fn(id);
        }
      }
    }
  }

 private:
  std::array<long, 3> cell_of(const Vec3& p) const {
    return {static_cast<long>(std::floor(p[0] / cell_)), static_cast<long>(std::floor(p[1] / cell_)),
            static_cast<long>(std::floor(p[2] / cell_))};
  }
  static unsigned long long key(const std::array<long, 3>& c) {
    const auto u = [](long v) { return static_cast<unsigned long long>(v + (1L << 20)) & 0x1fffffULL; };
    return (u(c[0]) << 42) | (u(c[1]) << 21) | u(c[2]);
  }
  double cell_;
  std::unordered_map<unsigned long long, std::vector<int>> map_;
};

/// Reflects the fundamental piece across X1 = 0 (copies_x = 1) and across
/// the planes X3 = 0 and X3 = 1 to cover copies_z vertical periods of
/// length 2, welding coincident boundary vertices.
inline SurfaceMesh extend_by_symmetry(const SurfaceMesh& piece, int copies_x, int copies_z) {
  if (copies_x < 0 || copies_x > 1) throw ConfigError("copies_x must be 0 or 1");
  if (copies_z < 0) throw ConfigError("copies_z must be non-negative");
  const double tol = piece.mesh_tol;
  SurfaceMesh out;
  out.mesh_tol = tol;
  out.per_unit = piece.per_unit;
  out.singular_lattice = piece.singular_lattice;
  out.comments = piece.comments;
  {
    std::ostringstream os;
    os << "copies_x=" << copies_x << " copies_z=" << copies_z << " period=0,0,2";
    out.comments.push_back(os.str());
  }
  PointHash hash(std::max(tol, 1e-12));
  const int layers = copies_z == 0 ? 1 : 2 * copies_z;
  int copy = 0;
  for (int sx : {+1, -1}) {
    if (sx < 0 && copies_x == 0) break;
    for (int n = 0; n < layers; ++n, ++copy) {
      const bool flip = (sx < 0) != (n % 2 == 1);
      std::vector<int> map(piece.size());
      for (std::size_t k = 0; k < piece.size(); ++k) {
        const Vec3& p = piece.vertices[k];
        const Vec3 q{sx * p[0], p[1], (n % 2 == 0) ? p[2] + n : (n + 1) - p[2]};
        const Tag t = piece.tags[k];
        int weld = -1;
        if (copy > 0 && t != Tag::interior) {
          double best = tol;
          hash.near(q, [&](int id) {
            const double d = dist3(out.vertices[id], q);
            if (d <= best) {
              best = d;
              weld = id;
            }
          });
          const bool x_seam = sx < 0 && n == 0 && t == Tag::plane_x0;
          if (x_seam && weld < 0) {
            std::ostringstream os;
            os << "weld mismatch: plane_x0 vertex " << k << " has |X1| = " << std::abs(p[0]) << " > mesh_tol " << tol;
            throw MeshError(os.str());
          }
        }
        if (weld >= 0) {
          map[k] = weld;
          continue;
        }
        map[k] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(q);
        out.tags.push_back(t);
        Provenance pr = k < piece.provenance.size() ? piece.provenance[k] : Provenance{};
        pr.copy = copy;
        out.provenance.push_back(pr);
        if (t != Tag::interior) hash.insert(q, map[k]);
      }
      for (const auto& tri : piece.triangles) {
        std::array<int, 3> t{map[tri[0]], map[tri[1]], map[tri[2]]};
        if (flip) std::swap(t[1], t[2]);
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
        out.triangles.push_back(t);
      }
    }
  }
  return out;
}

/// Number of connected components of the triangle graph (isolated vertices
/// count as components).
inline int connected_components(const SurfaceMesh& m) {
  std::vector<int> parent(m.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& t : m.triangles) {
    parent[find(t[1])] = find(t[0]);
    parent[find(t[2])] = find(t[0]);
  }
  int n = 0;
  for (std::size_t i = 0; i < parent.size(); ++i) n += (find(static_cast<int>(i)) == static_cast<int>(i));
  return n;
}

struct EmbeddednessReport {
  double min_vertical_increment = std::numeric_limits<double>::infinity();
  double min_x1_off_plane = std::numeric_limits<double>::infinity();
  int positivity_violations = 0;
  int column_injectivity_violations = 0;  // crossings of a column's (X2, X3) shadow with itself
  std::vector<std::pair<int, int>> close_pairs;  // vertex pairs closer than mesh_tol
  bool ok() const {
    return positivity_violations == 0 && column_injectivity_violations == 0 && close_pairs.empty();
  }
};

namespace detail {

/// Whether the closed segments pq and rs of the plane intersect.
inline bool segments_cross(Vec2 p, Vec2 q, Vec2 r, Vec2 s) {
  auto orient = [](Vec2 a, Vec2 b, Vec2 c) {
    const double d = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    return (d > 0.0) - (d < 0.0);
  };
  auto within = [](Vec2 a, Vec2 b, Vec2 c) {
    return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= c.y &&
           c.y <= std::max(a.y, b.y);
  };
  const int o1 = orient(p, q, r), o2 = orient(p, q, s), o3 = orient(r, s, p), o4 = orient(r, s, q);
  if (o1 != o2 && o3 != o4) return true;
  return (o1 == 0 && within(p, q, r)) || (o2 == 0 && within(p, q, s)) || (o3 == 0 && within(r, s, p)) ||
         (o4 == 0 && within(r, s, q));
}

}  // namespace detail

/// Positivity of dX1 up every column off the singular abscissae,
/// injectivity of the (X2, X3) projection of each axis-to-boundary column
/// (its shadow polyline must not cross itself), and a proximity scan over
/// all vertex pairs.
inline EmbeddednessReport embeddedness_probe(const SurfaceMesh& piece) {
  EmbeddednessReport rep;
  std::map<long, std::vector<int>> columns;  // lattice column -> vertices ordered by row
  for (std::size_t k = 0; k < piece.size(); ++k) {
    const auto& pr = piece.provenance[k];
    if (pr.copy != 0 || pr.branch != 0) continue;
    columns[pr.column].push_back(static_cast<int>(k));
  }
  for (auto& [col, ids] : columns) {
    std::sort(ids.begin(), ids.end(),
              [&](int l, int r) { return piece.provenance[l].row < piece.provenance[r].row; });
    if (ids.empty() || piece.provenance[ids.front()].row != 0) continue;  // singular column
    const Vec3& base = piece.vertices[ids.front()];
    for (std::size_t k = 1; k < ids.size(); ++k) {
      const Vec3& p = piece.vertices[ids[k]];
      const double inc = p[0] - base[0];
      rep.min_vertical_increment = std::min(rep.min_vertical_increment, inc);
      if (!(inc > 0.0)) ++rep.positivity_violations;
      if (piece.tags[ids[k]] == Tag::interior) rep.min_x1_off_plane = std::min(rep.min_x1_off_plane, p[0]);
    }
    std::vector<Vec2> shadow;
    for (int id : ids) shadow.push_back({piece.vertices[id][1], piece.vertices[id][2]});
    for (std::size_t k = 0; k + 1 < shadow.size(); ++k) {
      for (std::size_t l = k + 2; l + 1 < shadow.size(); ++l) {
        if (detail::segments_cross(shadow[k], shadow[k + 1], shadow[l], shadow[l + 1])) {
          ++rep.column_injectivity_violations;
        }
      }
    }
  }
  PointHash hash(std::max(piece.mesh_tol, 1e-12));
  for (std::size_t k = 0; k < piece.size(); ++k) {
    const Vec3& p = piece.vertices[k];
    hash.near(p, [&](int id) {
      if (dist3(piece.vertices[id], p) < piece.mesh_tol) rep.close_pairs.emplace_back(id, static_cast<int>(k));
    });
    hash.insert(p, static_cast<int>(k));
  }
  return rep;
}

/// max |X1| over the axis vertices of each curve C_i*, i = 0..N: the
/// segments of the axis cut by the singular nodes.
inline std::vector<double> curve_planarity(const SurfaceMesh& piece) {
  std::vector<double> out(piece.singular_lattice.size() + 1, 0.0);
  for (std::size_t k = 0; k < piece.size(); ++k) {
    const auto& pr = piece.provenance[k];
    if (pr.row != 0 || pr.copy != 0) continue;
    std::size_t seg = 0;
    while (seg < piece.singular_lattice.size() &&
           (pr.column > piece.singular_lattice[seg] || (pr.column == piece.singular_lattice[seg] && pr.branch > 0))) {
      ++seg;
    }
    out[seg] = std::max(out[seg], std::abs(piece.vertices[k][0]));
  }
  return out;
}

struct IsometryReport {
  double max_relative_deviation = 0.0;
  int cells_checked = 0;
  Vec2 worst_cell{0.0, 0.0};  // center of the cell with the largest deviation
};

/// Compares the first fundamental form of the mesh on each upper cell with
/// that of the graph of u over the same cell, on cells at least `margin`
/// away from the window ends, the top boundary, the singular nodes and the
/// vertices a_k. u is integrated from dPhi and carried to the nodes the same
/// way as X*, so both quadrilaterals use the same edges.
inline IsometryReport isometry_check(const SurfaceMesh& piece, const ConjugateForms& forms, double margin) {
  const Grid& g = forms.grid();
  const int a = g.axis_row;
  const int R = g.ny - 1 - a;
  std::map<std::pair<long, int>, int> at;
  for (std::size_t k = 0; k < piece.size(); ++k) {
    const auto& pr = piece.provenance[k];
    if (pr.copy == 0 && pr.branch == 0) at[{pr.column, pr.row}] = static_cast<int>(k);
  }
  const DualPotential U = integrate_u(forms, {base_column(g), 0});
  auto u_node = [&](int i, int r) {
    double s = 0.0;
    int n = 0;
    for (int ci : {i - 1, i}) {
      for (int rr : {r - 1, r}) {
        if (ci < 0 || ci >= g.nx - 1 || rr < 0 || rr >= R) continue;
        const Vec2 gu = conjugate_gradient(forms.grad[g.cell(ci, a + rr)]);
        s += U.at(ci, rr) + dot(gu, g.node(i, a + r) - forms.center(ci, a + rr));
        ++n;
      }
    }
    return s / n;
  };
  std::vector<Vec2> special;
  for (int c : g.singular_columns) special.push_back(g.node(c, a));
  for (int c = 0; c < g.nx; ++c) {
    if ((g.i_offset + c) % g.n_per_unit == 0) special.push_back(g.node(c, g.ny - 1));
  }
  IsometryReport rep;
  auto dot3 = [](const Vec3& u, const Vec3& v) { return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]; };
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c + 1 < g.nx; ++c) {
      const auto corners = g.cell_corners(c, a + r);
      bool keep = true;
      for (const Vec2& p : corners) {
        if (p.x - g.cfg.x_min < margin || g.cfg.x_max - p.x < margin || g.cfg.ell - p.y < margin) keep = false;
        for (const Vec2& s : special) {
          if (std::hypot(p.x - s.x, p.y - s.y) < margin) keep = false;
        }
      }
      if (!keep) continue;
      const long col = g.i_offset + c;
      const auto it00 = at.find({col, r}), it10 = at.find({col + 1, r}), it01 = at.find({col, r + 1});
      if (it00 == at.end() || it10 == at.end() || it01 == at.end()) continue;
      const Vec3& p00 = piece.vertices[it00->second];
      const Vec3& p10 = piece.vertices[it10->second];
      const Vec3& p01 = piece.vertices[it01->second];
      const Vec3 e1{p10[0] - p00[0], p10[1] - p00[1], p10[2] - p00[2]};
      const Vec3 e2{p01[0] - p00[0], p01[1] - p00[1], p01[2] - p00[2]};
      const double u00 = u_node(c, r);
      const Vec2 d1 = corners[1] - corners[0], d2 = corners[3] - corners[0];
      const Vec3 f1{d1.x, d1.y, u_node(c + 1, r) - u00}, f2{d2.x, d2.y, u_node(c, r + 1) - u00};
      const double E = dot3(e1, e1), Fm = dot3(e1, e2), G = dot3(e2, e2);
      const double Eg = dot3(f1, f1), Fg = dot3(f1, f2), Gg = dot3(f2, f2);
      const double dev = std::max({std::abs(E - Eg), std::abs(Fm - Fg), std::abs(G - Gg)}) / std::max(Eg, Gg);
      if (dev > rep.max_relative_deviation) {
        rep.max_relative_deviation = dev;
        rep.worst_cell = forms.center(c, a + r);
      }
      ++rep.cells_checked;
    }
  }
  return rep;
}

enum class MeshFormat { obj, ply };

namespace detail {

/// Shortest decimal form that reads back to the same double.
inline std::string fmt_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace detail

/// Writes OBJ (tags as 'g' groups of point elements) or ASCII PLY (tags as
/// an integer vertex property). Output depends only on the mesh contents.
inline void export_mesh(const SurfaceMesh& mesh, const std::string& path, MeshFormat format) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MeshError("cannot open " + path);
  using detail::fmt_double;
  if (format == MeshFormat::obj) {
    os << "# qpsurf mesh\n";
    for (const auto& c : mesh.comments) os << "# " << c << '\n';
    for (const auto& v : mesh.vertices) {
      os << "v " << fmt_double(v[0]) << ' ' << fmt_double(v[1]) << ' ' << fmt_double(v[2]) << '\n';
    }
    if (!mesh.triangles.empty()) {
      os << "g surface\n";
      for (const auto& t : mesh.triangles) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    }
    for (Tag tag : kAllTags) {
      if (tag == Tag::interior) continue;
      std::vector<int> ids;
      for (std::size_t k = 0; k < mesh.size(); ++k) {
        if (mesh.tags[k] == tag) ids.push_back(static_cast<int>(k));
      }
      if (ids.empty()) continue;
      os << "g " << tag_name(tag) << '\n';
      for (std::size_t k = 0; k < ids.size(); k += 16) {
        os << 'p';
        for (std::size_t l = k; l < std::min(ids.size(), k + 16); ++l) os << ' ' << ids[l] + 1;
        os << '\n';
      }
    }
  } else {
    os << "ply\nformat ascii 1.0\n";
    os << "comment qpsurf mesh\n";
    for (const auto& c : mesh.comments) os << "comment " << c << '\n';
    os << "element vertex " << mesh.size() << '\n';
    os << "property double x\nproperty double y\nproperty double z\nproperty int tag\n";
    os << "element face " << mesh.triangles.size() << '\n';
    os << "property list uchar int vertex_indices\n";
    os << "end_header\n";
    for (std::size_t k = 0; k < mesh.size(); ++k) {
      const auto& v = mesh.vertices[k];
      os << fmt_double(v[0]) << ' ' << fmt_double(v[1]) << ' ' << fmt_double(v[2]) << ' '
         << static_cast<int>(mesh.tags[k]) << '\n';
    }
    for (const auto& t : mesh.triangles) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  }
  if (!os) throw MeshError("write failed: " + path);
}

/// Reads a file written by export_mesh. Provenance is not stored in the files.
inline SurfaceMesh import_mesh(const std::string& path, MeshFormat format) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MeshError("cannot open " + path);
  SurfaceMesh m;
  std::string line;
  auto parse_error = [&](const std::string& what) { throw MeshError(path + ": " + what + ": '" + line + "'"); };
  if (format == MeshFormat::obj) {
    Tag group = Tag::interior;
    bool header = true;
    while (std::getline(is, line)) {
      if (line.rfind("# ", 0) == 0) {
        if (header && line != "# qpsurf mesh") m.comments.push_back(line.substr(2));
        continue;
      }
      header = false;
      std::istringstream ls(line);
      std::string kw;
      ls >> kw;
      if (kw == "v") {
        Vec3 v{};
        if (!(ls >> v[0] >> v[1] >> v[2])) parse_error("bad vertex");
        m.vertices.push_back(v);
        m.tags.push_back(Tag::interior);
      } else if (kw == "f") {
        std::array<int, 3> t{};
        if (!(ls >> t[0] >> t[1] >> t[2])) parse_error("bad face");
        for (int& i : t) --i;
        m.triangles.push_back(t);
      } else if (kw == "g") {
        std::string name;
        ls >> name;
        group = name == "surface" ? Tag::interior : tag_from_name(name);
      } else if (kw == "p") {
        int i = 0;
        while (ls >> i) {
          if (i < 1 || i > static_cast<int>(m.size())) parse_error("point index out of range");
          m.tags[i - 1] = group;
        }
      } else if (!kw.empty()) {
        parse_error("unknown keyword");
      }
    }
  } else {
    std::size_t nv = 0, nf = 0;
    while (std::getline(is, line) && line != "end_header") {
      if (line.rfind("comment ", 0) == 0) {
        if (line != "comment qpsurf mesh") m.comments.push_back(line.substr(8));
      } else if (line.rfind("element vertex ", 0) == 0) {
        nv = std::stoul(line.substr(15));
      } else if (line.rfind("element face ", 0) == 0) {
        nf = std::stoul(line.substr(13));
      }
    }
    for (std::size_t k = 0; k < nv; ++k) {
      if (!std::getline(is, line)) parse_error("truncated vertex list");
      std::istringstream ls(line);
      Vec3 v{};
      int tag = 0;
      if (!(ls >> v[0] >> v[1] >> v[2] >> tag)) parse_error("bad vertex");
      m.vertices.push_back(v);
      m.tags.push_back(static_cast<Tag>(tag));
    }
    for (std::size_t k = 0; k < nf; ++k) {
      if (!std::getline(is, line)) parse_error("truncated face list");
      std::istringstream ls(line);
      int n = 0;
      std::array<int, 3> t{};
      if (!(ls >> n >> t[0] >> t[1] >> t[2]) || n != 3) parse_error("bad face");
      m.triangles.push_back(t);
    }
  }
  return m;
}

}  // namespace qpsurf
