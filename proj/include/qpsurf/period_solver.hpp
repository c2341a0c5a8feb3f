#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "qpsurf/error.hpp"
#include "qpsurf/period_engine.hpp"
#include "qpsurf/strip_domain.hpp"

namespace qpsurf {

enum class SolveStatus { converged, bracket_at_resolution };

inline const char* status_name(SolveStatus s) {
  return s == SolveStatus::converged ? "converged" : "bracket_at_resolution";
}

struct TraceRow {
  int sweep = 0;
  std::size_t coordinate = 0;
  std::vector<double> q;
  std::vector<double> F;
  std::vector<double> lo;
  std::vector<double> hi;
};

struct SolveTrace {
  std::vector<TraceRow> rows;
  SolveStatus status = SolveStatus::converged;
  SingularSet solution;
  std::vector<double> F;  // periods at the solution
  int evaluations = 0;
};

struct PeriodSolveOptions {
  PeriodOptions period;
  double tol_F = -1.0;          // negative: h^2
  double q_resolution = 1e-6;   // bracket width at which bisection stops
  int max_sweeps = 60;
};

/// Evaluates the period vector for a configuration. Replaceable for testing.
using PeriodOracle = std::function<std::vector<double>(const SingularSet&)>;

namespace detail {

inline std::string sweep_state(const std::vector<double>& lo, const std::vector<double>& hi,
                               const std::vector<double>& F) {
  std::ostringstream os;
  os.precision(10);
  for (std::size_t i = 0; i < lo.size(); ++i) {
    os << " [" << lo[i] << ", " << hi[i] << "] F=" << F[i];
  }
  return os.str();
}

}  // namespace detail

/// Nonlinear Gauss-Seidel bisection on the box prod [2p_i - eta0, 2p_i + eta0].
/// Each visit of coordinate i evaluates F at the current point, keeps the half
/// of the bracket of q_i that still carries the sign change (F_i < 0 on the
/// left end, > 0 on the right end) and moves q_i to its midpoint.
inline SolveTrace solve_periods(const StripConfig& cfg, const std::vector<long>& p, const PeriodOracle& oracle,
                                const PeriodSolveOptions& opt = {}) {
  if (p.empty()) throw ConfigError("solve_periods: no singularities");
  const double tol = opt.tol_F < 0.0 ? cfg.grid_h * cfg.grid_h : opt.tol_F;
  const std::size_t N = p.size();
  std::vector<double> lo(N), hi(N), q(N);
  for (std::size_t i = 0; i < N; ++i) {
    lo[i] = 2.0 * static_cast<double>(p[i]) - cfg.eta0;
    hi[i] = 2.0 * static_cast<double>(p[i]) + cfg.eta0;
    q[i] = 0.5 * (lo[i] + hi[i]);
  }
  SolveTrace trace;
  auto evaluate = [&](int sweep, std::size_t coord) {
    const auto S = SingularSet::from_q(q);
    if (!S.inside_box(cfg.eta0)) throw PeriodError("solve_periods: iterate left the box");
    auto F = oracle(S);
    ++trace.evaluations;
    trace.rows.push_back({sweep, coord, q, F, lo, hi});
    return F;
  };
  auto done = [&](const std::vector<double>& F) {
    return std::all_of(F.begin(), F.end(), [&](double f) { return std::abs(f) <= tol; });
  };

  std::vector<double> F = evaluate(0, 0);
  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    if (done(F)) {
      trace.status = SolveStatus::converged;
      trace.solution = SingularSet::from_q(q);
      trace.F = F;
      return trace;
    }
    bool moved = false;
    for (std::size_t i = 0; i < N; ++i) {
      if (std::abs(F[i]) <= tol || hi[i] - lo[i] <= opt.q_resolution) continue;
      if (F[i] > 0.0) hi[i] = q[i]; else lo[i] = q[i];
      q[i] = 0.5 * (lo[i] + hi[i]);
      F = evaluate(sweep, i);
      moved = true;
    }
    if (!moved) break;
  }
  if (done(F)) {
    trace.status = SolveStatus::converged;
    trace.solution = SingularSet::from_q(q);
    trace.F = F;
    return trace;
  }

  // Brackets are exhausted: confirm that every bracket still carries a sign
  // change with the other coordinates at their final values.
  for (std::size_t i = 0; i < N; ++i) {
    if (std::abs(F[i]) <= tol) continue;
    const double qi = q[i];
    q[i] = lo[i];
    const double Flo = evaluate(opt.max_sweeps + 1, i)[i];
    q[i] = hi[i];
    const double Fhi = evaluate(opt.max_sweeps + 1, i)[i];
    q[i] = qi;
    if (!(Flo <= 0.0 && Fhi >= 0.0)) {
      std::ostringstream os;
      os << "solve_periods: coordinate " << i << " lost its sign change (F(lo)=" << Flo << ", F(hi)=" << Fhi
         << ");" << detail::sweep_state(lo, hi, F);
      throw PeriodError(os.str());
    }
  }
  trace.status = SolveStatus::bracket_at_resolution;
  trace.solution = SingularSet::from_q(q);
  trace.F = F;
  return trace;
}

/// Same, with periods computed from fresh maximal solves.
inline SolveTrace solve_periods(const StripConfig& cfg, const std::vector<long>& p,
                                const PeriodSolveOptions& opt = {}) {
  PeriodOracle oracle = [&](const SingularSet& S) { return periods(cfg, S, opt.period).F; };
  return solve_periods(cfg, p, oracle, opt);
}

struct SolutionCheck {
  std::vector<double> F_coarse;
  std::vector<double> F_fine;
  double fine_h = 0.0;
  double max_abs_F_fine = 0.0;
};

/// Re-evaluates the periods of a solution on the grid refined by `factor`.
inline SolutionCheck verify_solution(const StripConfig& cfg, const SingularSet& S, int factor = 2,
                                     const PeriodOptions& opt = {}) {
  if (factor < 1) throw ConfigError("verify_solution: factor must be positive");
  SolutionCheck c;
  c.F_coarse = periods(cfg, S, opt).F;
  StripConfig fine = cfg;
  fine.grid_h = cfg.grid_h / factor;
  PeriodOptions fopt = opt;
  fopt.loop_m = opt.loop_m * factor;
  for (int& m : fopt.noise_radii) m *= factor;
  c.F_fine = periods(fine, S, fopt).F;
  c.fine_h = fine.grid_h;
  for (double f : c.F_fine) c.max_abs_F_fine = std::max(c.max_abs_F_fine, std::abs(f));
  return c;
}

inline void write_trace_csv(const SolveTrace& t, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw MeshError("cannot open " + path);
  os.precision(17);
  os << "sweep,coordinate,i,q,F,lo,hi\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.q.size(); ++i) {
      os << r.sweep << ',' << r.coordinate << ',' << i << ',' << r.q[i] << ',' << r.F[i] << ',' << r.lo[i] << ','
         << r.hi[i] << '\n';
    }
  }
}

}  // namespace qpsurf
