#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "qpsurf/period_engine.hpp"

using namespace qpsurf;

namespace {

const double kH = 1.0 / 40.0;

StripConfig single_handle_config() { return StripConfig::make(0.6, kH, default_window({0}), 0.125); }

/// Total discrete energy of a solved field over the whole box.
double total_energy(const ScalarField& f) {
  const Grid& g = *f.grid;
  double e = 0.0;
  for (int cj = 0; cj < g.ny - 1; ++cj) {
    for (int ci = 0; ci < g.nx - 1; ++ci) {
      const auto& st = g.cells[g.cell(ci, cj)];
      const auto lv = f.cell_values(ci, cj);
      const double hg = st.hourglass_amplitude(lv);
      e += -st.area * std::sqrt(1.0 - norm2(st.gradient(lv))) + 0.5 * kHourglassWeight * hg * hg;
    }
  }
  return e;
}

}  // namespace

TEST(Periods, MatchEnergyDerivativeInQ) {
  // The dX1 period is the configurational force on the singular node, so it
  // equals dE/dq of the re-solved discrete energy.
  const auto cfg = single_handle_config();
  for (double q : {0.05, 0.1}) {
    const double d = 1e-4;
    const double dE = (total_energy(solve_dirichlet(cfg, SingularSet::from_q({q + d}))) -
                       total_energy(solve_dirichlet(cfg, SingularSet::from_q({q - d})))) /
                      (2.0 * d);
    const auto rep = periods(cfg, SingularSet::from_q({q}));
    EXPECT_NEAR(rep.F[0], dE, 2.0 * rep.quadrature_noise[0] + 1e-5) << "q=" << q;
    EXPECT_GT(rep.F[0], 0.0);
  }
}

TEST(Periods, AntisymmetricInQ) {
  const auto cfg = single_handle_config();
  for (int k = 1; k <= 5; ++k) {
    const double q = k * kH;
    const auto plus = periods(cfg, SingularSet::from_q({q}));
    const auto minus = periods(cfg, SingularSet::from_q({-q}));
    EXPECT_LE(std::abs(plus.F[0] + minus.F[0]), 4.0 * plus.closedness_bound) << "k=" << k;
    EXPECT_GT(plus.F[0], 0.0);
  }
}

TEST(Periods, HalfLoopAndHandleReport) {
  const auto rep = periods(single_handle_config(), SingularSet::from_q({0.05}));
  ASSERT_EQ(rep.F.size(), 1u);
  EXPECT_LE(rep.half_loop_check[0], 1e-6);
  EXPECT_LT(rep.handle_sizes[0], 0.0);
  EXPECT_EQ(rep.loop_m, 10);
  EXPECT_DOUBLE_EQ(rep.grid_h, kH);
  EXPECT_LT(rep.max_noise(), 1e-4);
  EXPECT_DOUBLE_EQ(rep.max_abs_F(), std::abs(rep.F[0]));
}

TEST(Periods, SymmetricPairHasOppositePeriods) {
  const auto cfg = StripConfig::make(0.6, kH, default_window({-3, 3}), 0.125);
  const auto rep = periods(cfg, SingularSet::with_offsets({-3, 3}, {-0.05, 0.05}));
  EXPECT_NEAR(rep.F[0], -rep.F[1], 1e-9);
}

TEST(Periods, OverlappingLoopsAreRejected) {
  const auto cfg = StripConfig::make(0.6, kH, default_window({0, 1}), 0.125);
  PeriodOptions opt;
  opt.loop_m = 30;
  opt.noise_radii = {30};
  EXPECT_THROW(periods(cfg, SingularSet::with_offsets({0, 1}, {0.0, 0.0}), opt), PeriodError);
}

TEST(ContinuityProbe, ZeroShiftIsExactAndSmallShiftIsSmall) {
  const auto cfg = single_handle_config();
  const auto S = SingularSet::from_q({0.05});
  EXPECT_EQ(continuity_probe(cfg, S, 0, 0.0), 0.0);
  EXPECT_LT(continuity_probe(cfg, S, 0, 0.25 * kH), 0.05);
  EXPECT_THROW(continuity_probe(cfg, S, 0, -0.01), ConfigError);
  EXPECT_THROW(continuity_probe(cfg, S, 0, 0.2), AdmissibilityError);
  EXPECT_THROW(continuity_probe(cfg, S, 3, 0.01), std::out_of_range);
}

TEST(FaceSigns, CalibratedBoxPassesWithBlowUpTrend) {
  const auto cfg = single_handle_config();
  const auto verdicts = face_sign_check(cfg, {0}, 0.125, 1);
  ASSERT_EQ(verdicts.size(), 2u);
  for (const auto& v : verdicts) {
    EXPECT_TRUE(v.passed) << "side " << v.side;
    for (const auto& s : v.samples) EXPECT_GE(std::abs(s.F), 5.0 * s.noise);
  }
  const double F0 = verdicts[0].samples[0].F;
  const double Fedge = periods(cfg, SingularSet::from_q({cfg.eta - 2.0 * kH})).F[0];
  EXPECT_GT(Fedge, F0);
  EXPECT_GT(F0, 0.0);
  EXPECT_THROW(face_sign_check(cfg, {0}, 0.2, 1), ConfigError);
  EXPECT_THROW(face_sign_check(cfg, {0}, 0.1, 0), ConfigError);
}

TEST(Calibration, FindsTheThresholdCrossing) {
  const auto prof = calibrate_eta0(single_handle_config(), 12);
  ASSERT_EQ(prof.q.size(), 12u);
  ASSERT_EQ(prof.F_distracted.size(), 12u);
  // Frozen regression value at h = 1/40.
  EXPECT_NEAR(prof.eta0, 0.125, 1e-12);
  for (std::size_t k = 0; k < prof.q.size(); ++k) {
    if (prof.q[k] >= prof.eta0) {
      EXPECT_GE(prof.F_alone[k], 0.5);
      EXPECT_GE(prof.F_distracted[k], 0.5);
    }
  }
  for (std::size_t k = 1; k < prof.q.size(); ++k) EXPECT_GT(prof.F_alone[k], prof.F_alone[k - 1]);

  const auto path = (std::filesystem::temp_directory_path() / "qpsurf_scan.csv").string();
  write_scan_csv(prof, path);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "q,F1,F1_distracted");
  std::filesystem::remove(path);
}

TEST(Calibration, UnreachableThresholdIsAnError) {
  CalibrationOptions opt;
  opt.threshold = 1e6;
  opt.with_distractors = false;
  EXPECT_THROW(calibrate_eta0(single_handle_config(), 2, opt), PeriodError);
  EXPECT_THROW(calibrate_eta0(single_handle_config(), 1, opt), ConfigError);
}
