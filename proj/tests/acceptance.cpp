// Acceptance run: one PASS/FAIL line per criterion at the reference desk
// scale ell = 0.6, h = 1/40. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qpsurf/qpsurf.hpp"

using namespace qpsurf;

namespace {

const double kEll = 0.6;
const double kH = 1.0 / 40.0;
const double kEta0 = 0.125;

StripConfig config_for(const std::vector<long>& p, double h = kH) {
  return StripConfig::make(kEll, h, default_window(p), kEta0);
}

struct Case {
  std::vector<long> p;
  std::vector<double> r;
  ScalarField field;
};

/// Ten admissible configurations with N <= 3, drawn from a fixed seed.
std::vector<Case> random_suite() {
  std::mt19937 rng(20240611);
  std::uniform_int_distribution<int> count(1, 3);
  std::uniform_real_distribution<double> offset(-0.15, 0.15);
  std::vector<Case> out;
  for (int n = 0; n < 10; ++n) {
    std::vector<long> pool{-3, -2, -1, 0, 1, 2, 3};
    std::shuffle(pool.begin(), pool.end(), rng);
    Case c;
    c.p.assign(pool.begin(), pool.begin() + count(rng));
    std::sort(c.p.begin(), c.p.end());
    for (std::size_t i = 0; i < c.p.size(); ++i) c.r.push_back(offset(rng));
    c.field = solve_dirichlet(config_for(c.p), SingularSet::with_offsets(c.p, c.r));
    out.push_back(std::move(c));
  }
  return out;
}

std::string describe(const Case& c) {
  std::ostringstream os;
  os << "p=(";
  for (std::size_t i = 0; i < c.p.size(); ++i) os << (i ? "," : "") << c.p[i];
  os << ")";
  return os.str();
}

struct Criterion {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& why) {
    if (!ok) {
      pass = false;
      detail << " [" << why << "]";
    }
  }
};

int failures = 0;

void run(int id, const std::string& name, const std::function<void(Criterion&)>& body) {
  Criterion c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.pass = false;
    c.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!c.pass) ++failures;
  std::printf("[%s] %2d. %s:%s (%.1f s)\n", c.pass ? "PASS" : "FAIL", id, name.c_str(), c.detail.str().c_str(), secs);
  std::fflush(stdout);
}

}  // namespace

int main() {
  std::printf("acceptance at ell = %.1f, h = 1/%.0f, eta0 = %.3f\n", kEll, 1.0 / kH, kEta0);
  const auto suite = random_suite();

  run(1, "maximum principle and bounds", [&](Criterion& c) {
    for (const auto& k : suite) {
      const Grid& g = *k.field.grid;
      double lo = 2.0, hi = -1.0, plo = 2.0, phi = -1.0;
      for (int n = 0; n < g.nnodes(); ++n) {
        const double v = k.field.values[n];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        if (k.field.pinned(n)) {
          plo = std::min(plo, v);
          phi = std::max(phi, v);
        }
      }
      c.require(lo >= 0.0 && hi <= 1.0, describe(k) + " leaves [0,1]");
      c.require(lo == plo && hi == phi, describe(k) + " extremum off the pinned nodes");
    }
    c.detail << " " << suite.size() << " configurations";
  });

  run(2, "mirror symmetry", [&](Criterion& c) {
    double worst = 0.0;
    for (const auto& k : suite) {
      const Grid& g = *k.field.grid;
      for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
          worst = std::max(worst, std::abs(k.field.at(i, j) - k.field.at(i, g.mirror_row(j))));
        }
      }
    }
    c.require(worst <= 1e-8, "asymmetry above 1e-8");
    c.detail << " max |v(x,-y) - v(x,y)| = " << worst;
  });

  run(3, "discrete conjugacy", [&](Criterion& c) {
    double worst_ratio = 0.0;
    for (const auto& k : suite) {
      const auto F = build_forms(k.field);
      const Grid& g = F.grid();
      const double bound = F.closedness_bound();
      for (int j = 1; j < g.ny - 1; ++j) {
        for (int i = 1; i < g.nx - 1; ++i) {
          if (g.kind[g.idx(i, j)] != NodeKind::free) continue;
          worst_ratio = std::max(worst_ratio, std::abs(F.dual_loop(Form::dphi, i, i, j, j)) / bound);
        }
      }
      for (int col : g.singular_columns) {
        for (Form f : {Form::dx2, Form::dx3}) {
          worst_ratio = std::max(worst_ratio, std::abs(F.centered_loop(f, col, 10)) / bound);
        }
      }
    }
    c.require(worst_ratio <= 1.0, "loop above 4 residual h");
    c.detail << " largest loop / bound = " << worst_ratio;
  });

  run(4, "period antisymmetry", [&](Criterion& c) {
    const auto cfg = config_for({0});
    double worst = 0.0;
    for (int k = 1; k <= 5; ++k) {
      const auto a = periods(cfg, SingularSet::from_q({k * kH}));
      const auto b = periods(cfg, SingularSet::from_q({-k * kH}));
      const double ratio = std::abs(a.F[0] + b.F[0]) / (4.0 * a.closedness_bound);
      worst = std::max(worst, ratio);
      c.require(ratio <= 1.0, "k=" + std::to_string(k));
    }
    c.detail << " max |F(q) + F(-q)| / (4 bound) = " << worst;
  });

  run(5, "face signs and blow-up trend", [&](Criterion& c) {
    const auto cfg = config_for({0});
    const auto prof = calibrate_eta0(cfg, 12);
    const double eta0 = prof.eta0;
    const auto plus = periods(cfg, SingularSet::from_q({eta0}));
    const auto minus = periods(cfg, SingularSet::from_q({-eta0}));
    const auto edge = periods(cfg, SingularSet::from_q({cfg.eta - 2.0 * kH}));
    c.require(plus.F[0] > 5.0 * plus.quadrature_noise[0], "F(+eta0) not above 5 noise");
    c.require(minus.F[0] < -5.0 * minus.quadrature_noise[0], "F(-eta0) not below -5 noise");
    c.require(edge.F[0] > plus.F[0] && plus.F[0] > 0.0, "no growth toward eta - 2h");
    c.detail << " eta0 = " << eta0 << ", F(+eta0) = " << plus.F[0] << ", F(-eta0) = " << minus.F[0]
             << ", F(eta-2h) = " << edge.F[0] << ", noise = " << plus.quadrature_noise[0];
  });

  SingularSet three;
  run(6, "period solve", [&](Criterion& c) {
    for (const auto& p : std::vector<std::vector<long>>{{0}, {0, 3}, {-3, 0, 3}}) {
      const auto cfg = config_for(p);
      const auto t = solve_periods(cfg, p);
      const auto rep = periods(cfg, t.solution);
      const auto& last = t.rows.back();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const bool small = std::abs(rep.F[i]) <= std::max(kH * kH, 5.0 * rep.quadrature_noise[i]);
        const bool narrow = last.hi[i] - last.lo[i] <= 2.0 * kH;
        c.require(small || narrow, "N=" + std::to_string(p.size()) + " coordinate " + std::to_string(i));
      }
      if (p.size() == 1) c.require(std::abs(t.solution.q[0]) <= 2.0 * kH, "N=1 root away from 0");
      if (p.size() == 3) {
        three = t.solution;
        const double asym = std::max(std::abs(t.solution.q[0] + t.solution.q[2]), std::abs(t.solution.q[1]));
        c.require(asym <= 2.0 * kH, "N=3 solution not symmetric");
        c.detail << " N=3 q = " << t.solution.q[0] << ", " << t.solution.q[1] << ", " << t.solution.q[2];
      }
      c.detail << " N=" << p.size() << ": " << t.evaluations << " evaluations, max|F| = " << rep.max_abs_F() << ";";
    }
  });

  SurfaceMesh piece3;
  run(7, "surface slab and planes", [&](Criterion& c) {
    if (three.empty()) three = solve_periods(config_for({-3, 0, 3}), {-3, 0, 3}).solution;
    const auto F = build_forms(solve_dirichlet(config_for({-3, 0, 3}), three));
    piece3 = build_fundamental_piece(F);
    const Grid& g = F.grid();
    double zlo = 1.0, zhi = 0.0, plane = 0.0;
    for (std::size_t k = 0; k < piece3.size(); ++k) {
      const auto& v = piece3.vertices[k];
      const auto& pv = piece3.provenance[k];
      zlo = std::min(zlo, v[2]);
      zhi = std::max(zhi, v[2]);
      c.require(v[2] == F.field.at(static_cast<int>(pv.column - g.i_offset), g.axis_row + pv.row), "X3 != v");
      if (piece3.tags[k] == Tag::plane_z0) plane = std::max(plane, std::abs(v[2]));
      if (piece3.tags[k] == Tag::plane_z1) plane = std::max(plane, std::abs(v[2] - 1.0));
    }
    c.require(zlo >= 0.0 && zhi <= 1.0, "X3 outside [0,1]");
    c.require(plane <= piece3.mesh_tol, "A*/B* curves off their planes");
    double planarity = 0.0;
    for (double x : curve_planarity(piece3)) planarity = std::max(planarity, x);
    c.require(planarity <= piece3.mesh_tol, "C* curves off x = 0");
    c.detail << " X3 in [" << zlo << ", " << zhi << "], max |X1| on C* = " << planarity
             << ", z-plane gap = " << plane << ", mesh_tol = " << piece3.mesh_tol;
  });

  run(8, "positivity and embeddedness shadow", [&](Criterion& c) {
    std::vector<SurfaceMesh> meshes{build_fundamental_piece(build_forms(solve_dirichlet(config_for({}), {})))};
    if (!piece3.empty()) meshes.push_back(piece3);
    for (const auto& m : meshes) {
      const auto rep = embeddedness_probe(m);
      c.require(rep.positivity_violations == 0, "dX1 not positive up a column");
      c.require(rep.close_pairs.empty(), "vertices closer than mesh_tol");
      c.detail << " min increment " << rep.min_vertical_increment << ", close pairs " << rep.close_pairs.size() << ";";
    }
  });

  run(9, "Karcher baseline periodicity", [&](Criterion& c) {
    const auto m = build_fundamental_piece(build_forms(solve_dirichlet(StripConfig::make(kEll, kH, {-8, 8}), {})));
    WindowMatchOptions opt;
    opt.x_shift = 2 * m.per_unit;
    const auto w = surface_window_match(m, m, opt);
    c.require(w.residual <= m.mesh_tol, "residual above mesh_tol");
    c.detail << " residual " << w.residual << " (mesh_tol " << m.mesh_tol << "), translation t = " << w.t;
  });

  run(10, "handle-size floor", [&](Criterion& c) {
    std::vector<std::pair<std::vector<long>, std::vector<double>>> configs{
        {{0}, {0.05}}, {{0}, {-0.1}}, {{-3, 0, 3}, {0.02, -0.04, 0.1}}};
    double floor_h = 1e9, floor_h2 = 1e9, worst_change = 0.0;
    for (const auto& [p, r] : configs) {
      const auto S = SingularSet::with_offsets(p, r);
      const auto Fa = build_forms(solve_dirichlet(config_for(p, kH), S));
      const auto Fb = build_forms(solve_dirichlet(config_for(p, kH / 2), S));
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double a = std::abs(handle_size(Fa, i, 4)), b = std::abs(handle_size(Fb, i, 8));
        floor_h = std::min(floor_h, a);
        floor_h2 = std::min(floor_h2, b);
        worst_change = std::max(worst_change, std::abs(a - b) / a);
      }
    }
    c.require(floor_h > 0.0 && floor_h2 > 0.0, "handle collapsed");
    c.require(std::abs(floor_h - floor_h2) <= 0.1 * floor_h, "floor moved by more than 10%");
    c.detail << " min |handle| = " << floor_h << " (h) and " << floor_h2 << " (h/2), largest change "
             << 100.0 * worst_change << "%";
  });

  run(11, "divergence-line shadow", [&](Criterion& c) {
    std::size_t interior = 0;
    for (const auto& k : suite) interior += divergence_ridges({k.field}).size();
    c.require(interior == 0, "ridges in admissible configurations");
    const double q = 0.2 - kH;
    const auto ridges = divergence_ridges({solve_dirichlet(config_for({0}), SingularSet::from_q({q}))});
    bool up = false, down = false;
    for (const auto& s : ridges) {
      up = up || ridge_points_along(s, {q, 0.0}, {1.0, kEll});
      down = down || ridge_points_along(s, {q, 0.0}, {1.0, -kEll});
    }
    c.require(up && down, "no ridges toward a1+ and a1- at q = eta - h");
    c.detail << " admissible: " << interior << " ridges; q = eta - h: " << ridges.size() << " ridges";
  });

  run(12, "boundary flux pattern", [&](Criterion& c) {
    std::size_t edges = 0;
    double worst = 0.0;
    for (const auto& k : suite) {
      for (const auto& r : top_boundary_fluxes(k.field)) {
        ++edges;
        worst = std::max(worst, std::abs(std::abs(r.flux) - r.length) / r.length);
        c.require(r.tag == expected_top_tag(std::lround(r.x0)), describe(k) + " edge " + std::to_string(r.x0));
      }
    }
    c.detail << " " << edges << " edges, largest relative flux deviation " << worst;
  });

  run(13, "sequences", [&](Criterion& c) {
    std::string digits;
    for (long k = 0; digits.size() < 200; ++k) digits += std::to_string(k);
    for (long i = 1; i <= 200; ++i) c.require(counting_digit(i) == digits[i - 1] - '0', "digit " + std::to_string(i));
    const auto g = beatty_gaps(sqrt_convergents(2), -2000, 2000).gaps();
    const auto w = periodicity_witnesses(g, 100);
    const auto missing = std::count_if(w.begin(), w.end(), [](const auto& x) { return !x.has_value(); });
    c.require(missing == 0, "a period n <= 100 has no witness");
    const auto scan = quasiperiodicity_scan(g, 100, 20);
    c.require(!scan.perfect.empty(), "no perfect extraction candidates");
    c.detail << " counting digits 1..200 match; sqrt2 perfect candidates:";
    for (long n : scan.perfect) c.detail << ' ' << n;
  });

  run(14, "convergence under box exhaustion", [&](Criterion& c) {
    std::vector<ScalarField> fs;
    for (int L : {2, 4, 6, 8}) {
      fs.push_back(solve_dirichlet(StripConfig::make(kEll, kH, {-L, L}, kEta0), SingularSet::from_q({0.05})));
    }
    std::vector<double> eps;
    for (std::size_t k = 0; k + 1 < fs.size(); ++k) {
      const Grid& a = *fs[k].grid;
      double e = 0.0;
      for (int j = 0; j < a.ny; ++j) {
        for (int i = 0; i < a.nx; ++i) {
          if (std::abs(a.lattice_x(i)) > 1.0) continue;
          e = std::max(e, std::abs(fs[k].at(i, j) - fs[k + 1].at(i + 80, j)));
        }
      }
      eps.push_back(e);
    }
    c.require(eps[0] > eps[1] && eps[1] > eps[2], "not monotone");
    c.detail << " eps(L -> L+2) on |x| <= 1: " << eps[0] << ", " << eps[1] << ", " << eps[2];
  });

  std::printf("%d of 14 criteria failed\n", failures);
  return failures;
}
