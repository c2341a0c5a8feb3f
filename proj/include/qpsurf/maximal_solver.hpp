#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <vector>

#include "qpsurf/error.hpp"
#include "qpsurf/grid.hpp"
#include "qpsurf/strip_domain.hpp"

namespace qpsurf {

struct SolverOptions {
  double tol_pde = 1e-8;
  /// Line-search feasibility guard |grad v| < 1 - eps_cap on every cell; a
  /// negative value selects h^2/100.
  double eps_cap = -1.0;
  /// Residual target at intermediate continuation steps.
  double continuation_tol = 1e-6;
  int max_newton = 80;
  int max_steps = 400;
  double armijo = 1e-4;
  /// Take one extra Newton step after reaching tol_pde.
  bool polish = true;

  double cap_for(double h) const { return eps_cap < 0.0 ? 0.01 * h * h : eps_cap; }
};

/// Newton accepts a residual up to this multiple of the rounding floor when
/// the floor exceeds tol_pde.
inline constexpr double kFloorFactor = 4.0;

/// Weight of the hourglass penalty. With it the small-gradient limit of the
/// cell energy equals the exact bilinear Dirichlet energy on square cells.
inline constexpr double kHourglassWeight = 1.0 / 6.0;

namespace detail {

/// Gradient (c) and Hessian (H) of one cell's energy with respect to its
/// four corner values.
struct CellKernel {
  std::array<double, 4> c{};
  double H[4][4] = {};
};

inline CellKernel cell_kernel(const CellStencil& st, const std::array<double, 4>& lv, bool laplace = false) {
  CellKernel k;
  const auto& sg = st.center;
  const Vec2 gv = sg.apply(lv);
  double a11 = 1.0, a12 = 0.0, a22 = 1.0, fx = gv.x, fy = gv.y;
  if (!laplace) {
    const double iw = 1.0 / std::sqrt(1.0 - norm2(gv));
    const double iw3 = iw * iw * iw;
    a11 = iw + gv.x * gv.x * iw3;
    a12 = gv.x * gv.y * iw3;
    a22 = iw + gv.y * gv.y * iw3;
    fx *= iw;
    fy *= iw;
  }
  const double w = st.area;
  const double hg = kHourglassWeight * st.hourglass_amplitude(lv);
  for (int a = 0; a < 4; ++a) {
    k.c[a] = w * (fx * sg.dx[a] + fy * sg.dy[a]) + hg * st.hourglass[a];
    const double ax = a11 * sg.dx[a] + a12 * sg.dy[a];
    const double ay = a12 * sg.dx[a] + a22 * sg.dy[a];
    for (int b = 0; b < 4; ++b) {
      k.H[a][b] = w * (ax * sg.dx[b] + ay * sg.dy[b]) + kHourglassWeight * st.hourglass[a] * st.hourglass[b];
    }
  }
  return k;
}

/// Size of the residual change caused by rounding every corner value to the
/// nearest double, accumulated per node.
inline void accumulate_floor(const CellKernel& k, const std::array<double, 4>& lv, const std::array<int, 4>& nodes,
                             std::vector<double>& acc) {
  constexpr double u = std::numeric_limits<double>::epsilon();
  for (int a = 0; a < 4; ++a) {
    double s = std::abs(k.c[a]);
    for (int b = 0; b < 4; ++b) s += std::abs(k.H[a][b]) * std::abs(lv[b]);
    acc[nodes[a]] += u * s;
  }
}

/// Newton machinery for the upper half of the box (rows axis..top). The
/// lower half is recovered by reflection, which makes v(x,-y) = v(x,y) hold
/// to the last bit.
class HalfSolver {
 public:
  using SpMat = Eigen::SparseMatrix<double>;

  HalfSolver(const Grid& g, double eps_cap) : g_(g), cap2_((1.0 - eps_cap) * (1.0 - eps_cap)) {
    unk_.assign(g.nnodes(), -1);
    for (int j = g.axis_row; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) {
        const int k = g.idx(i, j);
        if (g.kind[k] == NodeKind::free) {
          unk_[k] = static_cast<int>(free_.size());
          free_.push_back(k);
        }
      }
    }
    half_lumped_.assign(free_.size(), 0.0);
    for_each_cell([&](int ci, int cj) {
      const double a = g_.cells[g_.cell(ci, cj)].area;
      for (int k : g_.cell_nodes(ci, cj)) {
        if (unk_[k] >= 0) half_lumped_[unk_[k]] += 0.25 * a;
      }
    });
  }

  int size() const { return static_cast<int>(free_.size()); }
  const std::vector<int>& free_nodes() const { return free_; }

  template <class F>
  void for_each_cell(F&& f) const {
    for (int cj = g_.axis_row; cj < g_.ny - 1; ++cj) {
      for (int ci = 0; ci < g_.nx - 1; ++ci) f(ci, cj);
    }
  }

  std::array<double, 4> local(const std::vector<double>& v, int ci, int cj) const {
    const auto n = g_.cell_nodes(ci, cj);
    return {v[n[0]], v[n[1]], v[n[2]], v[n[3]]};
  }

  double max_grad2(const std::vector<double>& v) const {
    double m = 0.0;
    for_each_cell([&](int ci, int cj) {
      m = std::max(m, norm2(g_.cells[g_.cell(ci, cj)].gradient(local(v, ci, cj))));
    });
    return m;
  }

  bool feasible(const std::vector<double>& v) const {
    bool ok = true;
    for_each_cell([&](int ci, int cj) {
      if (ok && !(norm2(g_.cells[g_.cell(ci, cj)].gradient(local(v, ci, cj))) < cap2_)) ok = false;
    });
    return ok;
  }

  /// Convex objective: minus the spacelike area of the upper half plus the
  /// hourglass penalty.
  double energy(const std::vector<double>& v) const {
    double e = 0.0;
    for_each_cell([&](int ci, int cj) {
      const auto& st = g_.cells[g_.cell(ci, cj)];
      const auto lv = local(v, ci, cj);
      const double hg = st.hourglass_amplitude(lv);
      e += -st.area * std::sqrt(1.0 - norm2(st.gradient(lv))) + 0.5 * kHourglassWeight * hg * hg;
    });
    return e;
  }

  /// Gradient and Hessian of energy() with respect to the free unknowns.
  /// With laplace=true the Dirichlet energy is used instead. If `pin_rate`
  /// is given, `coupling` receives H_fp * pin_rate.
  void assemble(const std::vector<double>& v, Eigen::VectorXd& grad, SpMat& H, bool laplace = false,
                const std::vector<double>* pin_rate = nullptr, Eigen::VectorXd* coupling = nullptr) const {
    grad.setZero(size());
    if (coupling) coupling->setZero(size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(size()) * 9 * 4);
    for_each_cell([&](int ci, int cj) {
      const auto nodes = g_.cell_nodes(ci, cj);
      const auto k = cell_kernel(g_.cells[g_.cell(ci, cj)], local(v, ci, cj), laplace);
      const auto& gc = k.c;
      const auto& Hc = k.H;
      for (int a = 0; a < 4; ++a) {
        const int ra = unk_[nodes[a]];
        if (ra < 0) continue;
        grad[ra] += gc[a];
        for (int b = 0; b < 4; ++b) {
          const int rb = unk_[nodes[b]];
          if (rb >= 0) {
            trip.emplace_back(ra, rb, Hc[a][b]);
          } else if (coupling) {
            (*coupling)[ra] += Hc[a][b] * (*pin_rate)[nodes[b]];
          }
        }
      }
    });
    H.resize(size(), size());
    H.setFromTriplets(trip.begin(), trip.end());
  }

  /// Max over free nodes of |dE/dv_k| divided by the lumped nodal area.
  double strong_residual(const Eigen::VectorXd& grad) const {
    double r = 0.0;
    for (int k = 0; k < size(); ++k) r = std::max(r, std::abs(grad[k]) / half_lumped_[k]);
    return r;
  }

  double rounding_floor(const std::vector<double>& v) const {
    std::vector<double> acc(g_.nnodes(), 0.0);
    for_each_cell([&](int ci, int cj) {
      const auto lv = local(v, ci, cj);
      accumulate_floor(cell_kernel(g_.cells[g_.cell(ci, cj)], lv), lv, g_.cell_nodes(ci, cj), acc);
    });
    double m = 0.0;
    for (int k = 0; k < size(); ++k) m = std::max(m, acc[free_[k]] / half_lumped_[k]);
    return m;
  }

  struct NewtonResult {
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
    double floor = 0.0;
  };

  NewtonResult newton(std::vector<double>& v, double tol, int max_it, double armijo) {
    NewtonResult res;
    Eigen::VectorXd grad;
    SpMat H;
    std::vector<double> trial(v.size());
    double e = energy(v);
    for (int it = 0; it <= max_it; ++it) {
      assemble(v, grad, H);
      res.residual = strong_residual(grad);
      res.iterations = it;
      if (res.residual <= tol) {
        res.converged = true;
        if (polish_) polish(v, grad, H, res);
        return res;
      }
      if (res.residual <= 1e3 * tol) {
        res.floor = rounding_floor(v);
        if (res.residual <= kFloorFactor * res.floor) {
          res.converged = true;
          return res;
        }
      }
      if (it == max_it) break;
      factorize(H);
      if (ldlt_.info() != Eigen::Success) break;
      const Eigen::VectorXd d = ldlt_.solve(-grad);
      const double slope = grad.dot(d);
      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        trial = v;
        for (int k = 0; k < size(); ++k) trial[free_[k]] += alpha * d[k];
        if (!feasible(trial)) continue;
        const double et = energy(trial);
        // Near convergence the energy decrease drowns in rounding, so a
        // full step is also accepted when the change is at noise level.
        if (et <= e + armijo * alpha * slope || std::abs(et - e) <= 1e-14 * std::abs(e)) {
          accepted = true;
          e = et;
          break;
        }
      }
      if (!accepted) break;
      v.swap(trial);
    }
    return res;
  }

  /// One extra full Newton step once converged, kept only if it lowers
  /// the residual. This pushes the iterate to the rounding level.
  void polish(std::vector<double>& v, const Eigen::VectorXd& grad, const SpMat& H, NewtonResult& res) {
    factorize(H);
    if (ldlt_.info() != Eigen::Success) return;
    const Eigen::VectorXd d = ldlt_.solve(-grad);
    std::vector<double> trial(v);
    for (int k = 0; k < size(); ++k) trial[free_[k]] += d[k];
    if (!feasible(trial)) return;
    Eigen::VectorXd g2;
    SpMat H2;
    assemble(trial, g2, H2);
    const double r2 = strong_residual(g2);
    if (r2 < res.residual) {
      v.swap(trial);
      res.residual = r2;
    }
  }

  void set_polish(bool on) { polish_ = on; }

  void factorize(const SpMat& H) {
    if (!analyzed_) {
      ldlt_.analyzePattern(H);
      analyzed_ = true;
    }
    ldlt_.factorize(H);
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return ldlt_.solve(rhs); }

 private:
  const Grid& g_;
  double cap2_;
  std::vector<int> unk_;
  std::vector<int> free_;
  std::vector<double> half_lumped_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
  bool analyzed_ = false;
  bool polish_ = false;
};

inline void mirror_lower_half(const Grid& g, std::vector<double>& v) {
  for (int j = 0; j < g.axis_row; ++j) {
    const int jm = g.mirror_row(j);
    for (int i = 0; i < g.nx; ++i) v[g.idx(i, j)] = v[g.idx(i, jm)];
  }
}

}  // namespace detail

struct ResidualProfile {
  double residual = 0.0;        // max over free nodes
  double rounding_floor = 0.0;  // max over free nodes
};

/// Weak Euler-Lagrange residual divided by the lumped nodal area, and the
/// level below which it is dominated by rounding of the nodal values.
inline ResidualProfile residual_profile(const ScalarField& f) {
  const Grid& g = *f.grid;
  std::vector<double> r(g.nnodes(), 0.0), fl(g.nnodes(), 0.0);
  for (int cj = 0; cj < g.ny - 1; ++cj) {
    for (int ci = 0; ci < g.nx - 1; ++ci) {
      const auto& st = g.cells[g.cell(ci, cj)];
      const auto nodes = g.cell_nodes(ci, cj);
      const auto lv = f.cell_values(ci, cj);
      const double s = norm2(st.gradient(lv));
      if (!(s < 1.0)) {
        std::ostringstream os;
        os << "lightlike cell (" << ci << ", " << cj << "): |grad v|^2 = " << s;
        throw LightlikeError(os.str());
      }
      const auto k = detail::cell_kernel(st, lv);
      for (int a = 0; a < 4; ++a) r[nodes[a]] += k.c[a];
      detail::accumulate_floor(k, lv, nodes, fl);
    }
  }
  ResidualProfile p;
  for (int k = 0; k < g.nnodes(); ++k) {
    if (g.kind[k] != NodeKind::free) continue;
    p.residual = std::max(p.residual, std::abs(r[k]) / g.lumped[k]);
    p.rounding_floor = std::max(p.rounding_floor, fl[k] / g.lumped[k]);
  }
  return p;
}

/// Max over free nodes of the weak Euler-Lagrange residual divided by the
/// lumped nodal area, on the whole box.
inline double residual(const ScalarField& f) { return residual_profile(f).residual; }

/// Largest cell gradient magnitude.
inline double max_gradient(const ScalarField& f) {
  const Grid& g = *f.grid;
  double m = 0.0;
  for (int cj = 0; cj < g.ny - 1; ++cj) {
    for (int ci = 0; ci < g.nx - 1; ++ci) m = std::max(m, norm2(f.cell_gradient(ci, cj)));
  }
  return std::sqrt(m);
}

namespace detail {

inline ScalarField finish_field(std::shared_ptr<const Grid> grid, std::vector<double> v, const SolverOptions& opt,
                                int newton_its, int steps) {
  mirror_lower_half(*grid, v);
  ScalarField f;
  f.grid = std::move(grid);
  f.values = std::move(v);
  f.tol_pde = opt.tol_pde;
  f.eps_cap = opt.cap_for(f.grid->h());
  f.newton_iterations = newton_its;
  f.continuation_steps = steps;
  const auto prof = residual_profile(f);
  f.residual_norm = prof.residual;
  f.rounding_floor = prof.rounding_floor;
  return f;
}

/// Natural-parameter continuation in the scale t of the prescribed data,
/// with an Euler predictor and Newton corrector.
inline ScalarField continuation_solve(std::shared_ptr<const Grid> grid, const SolverOptions& opt) {
  const Grid& g = *grid;
  const double eps_cap = opt.cap_for(g.h());
  HalfSolver hs(g, eps_cap);
  const int n = hs.size();
  const auto& fr = hs.free_nodes();

  // Harmonic extension of the data.
  std::vector<double> harm(g.data);
  Eigen::VectorXd grad;
  HalfSolver::SpMat H;
  hs.assemble(harm, grad, H, true);
  hs.factorize(H);
  {
    const Eigen::VectorXd d = hs.solve(-grad);
    for (int k = 0; k < n; ++k) harm[fr[k]] += d[k];
  }
  const double gmax = std::sqrt(hs.max_grad2(harm));
  double t = gmax > 0.5 ? 0.5 / gmax : 1.0;
  std::vector<double> v(harm.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = t * harm[k];

  int newton_total = 0;
  int steps = 0;
  auto set_pins = [&](std::vector<double>& w, double s) {
    for (int k = 0; k < g.nnodes(); ++k) {
      if (g.kind[k] != NodeKind::free) w[k] = s * g.data[k];
    }
  };
  {
    const double tol = t < 1.0 ? opt.continuation_tol : opt.tol_pde;
    hs.set_polish(opt.polish && t >= 1.0);
    auto r = hs.newton(v, tol, opt.max_newton, opt.armijo);
    newton_total += r.iterations;
    if (!r.converged) throw SolverError("Newton failed at the continuation start", r.residual);
  }
  double dt = std::min(1.0 - t, 0.1);
  std::vector<double> trial(v.size());
  Eigen::VectorXd coupling;
  double last_res = 0.0;
  while (t < 1.0) {
    if (++steps > opt.max_steps) throw SolverError("continuation step limit reached", last_res);
    // Tangent: H_ff w = -H_fp data.
    hs.assemble(v, grad, H, false, &g.data, &coupling);
    hs.factorize(H);
    const Eigen::VectorXd tangent = hs.solve(-coupling);
    bool advanced = false;
    while (!advanced) {
      if (dt < 1e-10) {
        throw SolverError("continuation stalled before reaching the full data", last_res);
      }
      const double t_new = std::min(1.0, t + dt);
      const double step = t_new - t;
      trial = v;
      set_pins(trial, t_new);
      for (int k = 0; k < n; ++k) trial[fr[k]] += step * tangent[k];
      if (!hs.feasible(trial)) {
        // Fall back to the plain scaled state before shrinking the step.
        trial = v;
        for (auto& x : trial) x *= t_new / t;
        if (!hs.feasible(trial)) {
          dt *= 0.5;
          continue;
        }
      }
      const double tol = t_new < 1.0 ? opt.continuation_tol : opt.tol_pde;
      hs.set_polish(opt.polish && t_new >= 1.0);
      auto r = hs.newton(trial, tol, t_new < 1.0 ? 40 : opt.max_newton, opt.armijo);
      newton_total += r.iterations;
      last_res = r.residual;
      if (!r.converged) {
        dt *= 0.5;
        continue;
      }
      v.swap(trial);
      t = t_new;
      advanced = true;
      if (r.iterations <= 4) dt *= 2.0;
    }
  }
  return finish_field(std::move(grid), std::move(v), opt, newton_total, steps);
}

}  // namespace detail

/// Solves the maximal graph equation on an existing grid. An optional
/// initial guess is used when it is spacelike; otherwise the solve falls
/// back to continuation from the harmonic extension.
inline ScalarField solve_on_grid(std::shared_ptr<const Grid> grid, const SolverOptions& opt = {},
                                 const std::vector<double>* initial = nullptr) {
  if (initial) {
    const Grid& g = *grid;
    std::vector<double> v(*initial);
    for (int k = 0; k < g.nnodes(); ++k) {
      if (g.kind[k] != NodeKind::free) v[k] = g.data[k];
    }
    detail::HalfSolver hs(g, opt.cap_for(g.h()));
    if (hs.feasible(v)) {
      hs.set_polish(opt.polish);
      auto r = hs.newton(v, opt.tol_pde, opt.max_newton, opt.armijo);
      if (r.converged) return detail::finish_field(std::move(grid), std::move(v), opt, r.iterations, 0);
    }
  }
  return detail::continuation_solve(std::move(grid), opt);
}

/// Discrete Dirichlet problem on the truncated box with v = 0 at each q.
inline ScalarField solve_dirichlet(const StripConfig& cfg, const SingularSet& S, const SolverOptions& opt = {}) {
  const auto verdict = check_admissible(cfg, S);
  if (!verdict.admissible) {
    std::ostringstream os;
    os << "singular point q[" << *verdict.violating_index << "] = " << S.q[*verdict.violating_index]
       << " is within distance 1 of the vertex a+_" << verdict.odd_vertex;
    throw AdmissibilityError(os.str());
  }
  return solve_on_grid(make_grid(cfg, S), opt);
}

/// Bilinear interpolation of a field onto a grid with the same window and
/// singular set, in lattice coordinates.
inline std::vector<double> interpolate_to(const ScalarField& coarse, const Grid& fine) {
  const Grid& c = *coarse.grid;
  std::vector<double> out(fine.nnodes(), 0.0);
  const double ratio = static_cast<double>(fine.n_per_unit) / static_cast<double>(c.n_per_unit);
  for (int j = 0; j < fine.ny; ++j) {
    const double sj = static_cast<double>(j) / ratio;
    const int cj = std::min(static_cast<int>(std::floor(sj)), c.ny - 2);
    const double ty = sj - cj;
    for (int i = 0; i < fine.nx; ++i) {
      const double si = static_cast<double>(i) / ratio;
      const int ci = std::min(static_cast<int>(std::floor(si)), c.nx - 2);
      const double tx = si - ci;
      out[fine.idx(i, j)] = (1 - tx) * (1 - ty) * coarse.at(ci, cj) + tx * (1 - ty) * coarse.at(ci + 1, cj) +
                            tx * ty * coarse.at(ci + 1, cj + 1) + (1 - tx) * ty * coarse.at(ci, cj + 1);
    }
  }
  return out;
}

inline ScalarField refine_and_resolve(const ScalarField& field, int factor, const SolverOptions& opt = {}) {
  if (factor < 2) throw ConfigError("refine_and_resolve: factor must be at least 2");
  StripConfig cfg = field.grid->cfg;
  cfg.grid_h = field.grid->h() / factor;
  auto fine = make_grid(cfg, field.grid->S);
  const auto guess = interpolate_to(field, *fine);
  return solve_on_grid(fine, opt, &guess);
}

}  // namespace qpsurf
