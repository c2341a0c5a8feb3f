#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "qpsurf/conjugation.hpp"
#include "qpsurf/error.hpp"
#include "qpsurf/maximal_solver.hpp"
#include "qpsurf/strip_domain.hpp"

namespace qpsurf {

struct PeriodOptions {
  SolverOptions solver;
  int loop_m = 10;                                 // loop half-width in cells
  std::vector<int> noise_radii{8, 9, 10, 11, 12};  // radii used for the quadrature noise estimate
};

struct PeriodReport {
  SingularSet q;
  std::vector<double> F;
  std::vector<double> handle_sizes;
  std::vector<double> half_loop_check;  // |F_i - 2 * upper half-loop|
  /// Spread of F_i over the loop radii in PeriodOptions::noise_radii.
  std::vector<double> quadrature_noise;
  double grid_h = 0.0;
  int loop_m = 4;
  double residual = 0.0;
  double closedness_bound = 0.0;

  double max_abs_F() const {
    double m = 0.0;
    for (double f : F) m = std::max(m, std::abs(f));
    return m;
  }
  double max_noise() const {
    double m = 0.0;
    for (double f : quadrature_noise) m = std::max(m, f);
    return m;
  }
};

/// Period of dX1 around singularity i: counter-clockwise dual rectangle of
/// half-width m cells.
inline double period_integral(const ConjugateForms& forms, std::size_t i, int m) {
  const Grid& g = forms.grid();
  const int col = g.singular_columns.at(i);
  if (m < 1 || col - m < 0 || col + m > g.nx - 1 || m > g.axis_row) {
    throw PeriodError("period loop leaves the box");
  }
  return forms.centered_loop(Form::dx1, col, m);
}

inline PeriodReport periods_from_forms(const ConjugateForms& forms, const PeriodOptions& opt = {}) {
  const Grid& g = forms.grid();
  const std::size_t N = g.S.size();
  int reach = opt.loop_m;
  for (int m : opt.noise_radii) reach = std::max(reach, m);
  for (std::size_t i = 1; i < N; ++i) {
    if (g.singular_columns[i] - g.singular_columns[i - 1] < 2 * reach) {
      throw PeriodError("period loops of neighbouring singularities overlap");
    }
  }
  PeriodReport r;
  r.q = g.S;
  r.grid_h = g.h();
  r.loop_m = opt.loop_m;
  r.residual = forms.source_residual;
  r.closedness_bound = forms.closedness_bound();
  for (std::size_t i = 0; i < N; ++i) {
    const int col = g.singular_columns[i];
    const double F = period_integral(forms, i, opt.loop_m);
    const double half = forms.upper_half_loop(Form::dx1, col, opt.loop_m);
    r.F.push_back(F);
    r.half_loop_check.push_back(std::abs(F - 2.0 * half));
    r.handle_sizes.push_back(handle_size(forms, i, opt.loop_m));
    double lo = F, hi = F;
    for (int m : opt.noise_radii) {
      const double Fm = period_integral(forms, i, m);
      lo = std::min(lo, Fm);
      hi = std::max(hi, Fm);
    }
    r.quadrature_noise.push_back(hi - lo);
  }
  return r;
}

/// Solves for v[S] and evaluates all periods.
inline PeriodReport periods(const StripConfig& cfg, const SingularSet& S, const PeriodOptions& opt = {}) {
  const auto field = solve_dirichlet(cfg, S, opt.solver);
  return periods_from_forms(build_forms(field), opt);
}

/// |F_i(q + delta_q e_i) - F_i(q)|.
inline double continuity_probe(const StripConfig& cfg, const SingularSet& S, std::size_t i, double delta_q,
                               const PeriodOptions& opt = {}) {
  if (i >= S.size()) throw std::out_of_range("continuity_probe: index");
  if (delta_q < 0.0) throw ConfigError("continuity_probe: delta_q must be non-negative");
  SingularSet moved = S;
  moved.q[i] += delta_q;
  if (!check_admissible(cfg, moved).admissible) throw AdmissibilityError("continuity_probe: perturbation leaves the admissible set");
  const double F0 = periods(cfg, S, opt).F[i];
  if (delta_q == 0.0) return std::abs(periods(cfg, S, opt).F[i] - F0);
  return std::abs(periods(cfg, moved, opt).F[i] - F0);
}

struct FaceSample {
  std::vector<double> q;
  double F = 0.0;      // F_i on the face
  double noise = 0.0;  // quadrature noise of F_i at the sample
};

struct FaceVerdict {
  std::size_t index = 0;
  int side = +1;  // +1: q_i = 2p_i + eta0, -1: q_i = 2p_i - eta0
  std::vector<FaceSample> samples;
  bool passed = false;
};

struct FaceSignOptions {
  PeriodOptions period;
  double guard_factor = 5.0;  // |F| must exceed guard_factor * noise
  unsigned seed = 12345;
};

/// Samples the Miranda faces of the box prod [2p_i - eta0, 2p_i + eta0]: on
/// face (i, +) F_i must be positive, on (i, -) negative, both with a guard
/// band. The other coordinates are drawn uniformly in their intervals.
inline std::vector<FaceVerdict> face_sign_check(const StripConfig& cfg, const std::vector<long>& p, double eta0,
                                                int samples_per_face, const FaceSignOptions& opt = {}) {
  if (!(eta0 > 0.0 && eta0 < cfg.eta)) throw ConfigError("face_sign_check: eta0 must lie in (0, eta)");
  if (samples_per_face < 1) throw ConfigError("face_sign_check: samples_per_face must be positive");
  std::mt19937 rng(opt.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<FaceVerdict> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (int side : {+1, -1}) {
      FaceVerdict fv;
      fv.index = i;
      fv.side = side;
      fv.passed = true;
      for (int s = 0; s < samples_per_face; ++s) {
        std::vector<double> r(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) r[k] = (k == i) ? side * eta0 : eta0 * unit(rng);
        const auto S = SingularSet::with_offsets(p, r);
        const auto rep = periods(cfg, S, opt.period);
        FaceSample fs{S.q, rep.F[i], rep.quadrature_noise[i]};
        const bool sign_ok = side > 0 ? fs.F > 0.0 : fs.F < 0.0;
        if (!sign_ok || std::abs(fs.F) < opt.guard_factor * fs.noise) fv.passed = false;
        fv.samples.push_back(fs);
      }
      out.push_back(std::move(fv));
    }
  }
  return out;
}

struct CalibrationProfile {
  std::vector<double> q;
  std::vector<double> F_alone;
  std::vector<double> F_distracted;  // with handles near -2 + eta/2 and 2 - eta/2
  double threshold = 0.5;
  double eta0 = 0.0;
};

struct CalibrationOptions {
  PeriodOptions period;
  double threshold = 0.5;
  bool with_distractors = true;
};

/// Smallest scanned q* with F_1(q) >= threshold for every scanned q >= q*,
/// for the single handle p = (0), with and without far handles.
inline CalibrationProfile calibrate_eta0(const StripConfig& cfg_in, int scan_resolution,
                                         const CalibrationOptions& opt = {}) {
  if (scan_resolution < 2) throw ConfigError("calibrate_eta0: scan_resolution must be at least 2");
  CalibrationProfile prof;
  prof.threshold = opt.threshold;
  const double q_max = cfg_in.eta - 2.0 * cfg_in.grid_h;
  StripConfig alone = cfg_in;
  std::tie(alone.x_min, alone.x_max) = default_window({0});
  StripConfig busy = cfg_in;
  std::tie(busy.x_min, busy.x_max) = default_window({-1, 0, 1});
  for (int k = 1; k <= scan_resolution; ++k) {
    const double q = q_max * k / scan_resolution;
    prof.q.push_back(q);
    prof.F_alone.push_back(periods(alone, SingularSet::with_offsets({0}, {q}), opt.period).F[0]);
    if (opt.with_distractors) {
      const auto S = SingularSet::with_offsets({-1, 0, 1}, {0.5 * cfg_in.eta, q, -0.5 * cfg_in.eta});
      prof.F_distracted.push_back(periods(busy, S, opt.period).F[1]);
    }
  }
  std::optional<std::size_t> start;
  for (std::size_t k = prof.q.size(); k-- > 0;) {
    const bool ok = prof.F_alone[k] >= opt.threshold &&
                    (prof.F_distracted.empty() || prof.F_distracted[k] >= opt.threshold);
    if (!ok) break;
    start = k;
  }
  if (!start) {
    std::ostringstream os;
    os << "calibrate_eta0: F_1 stays below " << opt.threshold << " on (0, " << q_max << "]; profile:";
    for (std::size_t k = 0; k < prof.q.size(); ++k) os << ' ' << prof.q[k] << ':' << prof.F_alone[k];
    throw PeriodError(os.str());
  }
  prof.eta0 = prof.q[*start];
  return prof;
}

inline void write_scan_csv(const CalibrationProfile& prof, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw MeshError("cannot open " + path);
  os.precision(17);
  os << "q,F1,F1_distracted\n";
  for (std::size_t k = 0; k < prof.q.size(); ++k) {
    os << prof.q[k] << ',' << prof.F_alone[k] << ',';
    if (k < prof.F_distracted.size()) os << prof.F_distracted[k];
    os << '\n';
  }
}

inline void write_periods_csv(const PeriodReport& r, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw MeshError("cannot open " + path);
  os.precision(17);
  os << "i,q,F,handle_size,half_loop_check,quadrature_noise\n";
  for (std::size_t i = 0; i < r.F.size(); ++i) {
    os << i << ',' << r.q.q[i] << ',' << r.F[i] << ',' << r.handle_sizes[i] << ',' << r.half_loop_check[i] << ','
       << r.quadrature_noise[i] << '\n';
  }
}

}  // namespace qpsurf
