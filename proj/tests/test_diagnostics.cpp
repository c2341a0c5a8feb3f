#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "qpsurf/diagnostics.hpp"
#include "qpsurf/period_engine.hpp"
#include "qpsurf/surface_builder.hpp"

using namespace qpsurf;

namespace {

const double kH = 1.0 / 40.0;

ScalarField single_handle(double q, double h = kH) {
  const auto cfg = StripConfig::make(0.6, h, default_window({0}), 0.125);
  return solve_dirichlet(cfg, SingularSet::with_offsets({0}, {q}));
}

ScalarField empty_set(double h) { return solve_dirichlet(StripConfig::make(0.6, h, default_window({})), {}); }

CurvatureField curvature_of(const ScalarField& f, double delta) {
  const auto F = build_forms(f);
  return curvature_field(F, integrate_u(F, {base_column(*f.grid), 0}), delta);
}

}  // namespace

TEST(Ridges, NoneForAdmissibleHandles) {
  for (double q : {0.0, 0.05, 0.125}) EXPECT_TRUE(divergence_ridges({single_handle(q)}).empty()) << "q=" << q;
}

TEST(Ridges, NoneForConstantData) {
  auto g = make_grid(StripConfig::make(0.6, kH, {-2, 2}), {});
  ScalarField f;
  f.grid = g;
  f.values.assign(g->nnodes(), 0.5);
  EXPECT_TRUE(divergence_ridges({f}).empty());
  EXPECT_TRUE(divergence_ridges({}).empty());
}

TEST(Ridges, AppearTowardTheVerticesNearTheAdmissibilityLimit) {
  const double q = 0.2 - kH;
  const auto ridges = divergence_ridges({single_handle(q)});
  bool up = false, down = false;
  for (const auto& s : ridges) {
    up = up || ridge_points_along(s, {q, 0.0}, {1.0, 0.6});
    down = down || ridge_points_along(s, {q, 0.0}, {1.0, -0.6});
  }
  EXPECT_TRUE(up);
  EXPECT_TRUE(down);
}

TEST(Ridges, MismatchedGridsAreRejected) {
  const auto other = solve_dirichlet(StripConfig::make(0.6, 1.0 / 20, {-2, 2}), {});
  EXPECT_THROW(divergence_ridges({single_handle(0.0, 1.0 / 20), other}), ConfigError);
}

TEST(Flux, TopEdgesAlternateExactly) {
  const auto f = single_handle(0.05);
  const auto fluxes = top_boundary_fluxes(f);
  EXPECT_EQ(fluxes.size(), static_cast<std::size_t>(f.grid->cfg.x_max - f.grid->cfg.x_min));
  for (const auto& r : fluxes) {
    const long k = std::lround(r.x0);
    EXPECT_EQ(r.tag, expected_top_tag(k)) << "edge " << k;
    EXPECT_NEAR(std::abs(r.flux), 1.0, 0.02);
  }
}

TEST(Flux, AxisSegmentAwayFromHandlesIsFinite) {
  const auto f = single_handle(0.0);
  const auto r = boundary_flux_classify(f, 1.0, 2.0, 0.0);
  EXPECT_EQ(r.tag, FluxTag::finite);
  EXPECT_NEAR(r.flux, f.at(f.grid->column_of(2.0), f.grid->axis_row) - f.at(f.grid->column_of(1.0), f.grid->axis_row),
              1e-15);
  EXPECT_THROW(boundary_flux_classify(f, 0.01, 1.0, 0.6), ConfigError);
  EXPECT_THROW(boundary_flux_classify(f, 0.0, 1.0, 0.61), ConfigError);
  EXPECT_STREQ(flux_tag_name(FluxTag::minus_infinity), "u->-inf");
}

TEST(GradientFloor, ConjugateGradientNorm) {
  EXPECT_DOUBLE_EQ(conjugate_gradient_norm({0.6, 0.0}), 0.75);
  EXPECT_TRUE(std::isinf(conjugate_gradient_norm({1.0, 0.0})));
}

TEST(GradientFloor, LimitsAndErrors) {
  const auto f = single_handle(0.0);
  const auto zero = gradient_floor_check(f, {0.0, 0.0}, 0.0);
  EXPECT_DOUBLE_EQ(zero.delta, zero.box_radius);
  EXPECT_DOUBLE_EQ(zero.box_radius, 0.6);
  // Regression values at h = 1/40: the first ring has |grad u| of about 18.
  const auto ring = gradient_floor_check(f, {0.0, 0.0}, 10.0);
  EXPECT_DOUBLE_EQ(ring.delta, kH);
  EXPECT_GE(ring.min_inside, 10.0);
  EXPECT_DOUBLE_EQ(gradient_floor_check(f, {0.0, 0.0}, 1.0).delta, 4.0 * kH);
  EXPECT_EQ(gradient_floor_check(f, {0.0, 0.0}, 30.0).delta, 0.0);
  EXPECT_GT(gradient_floor_check(f, {1.0, 0.6}, 0.0).delta, 0.0);
  // A regular interior point is not a recognized center.
  EXPECT_THROW(gradient_floor_check(f, {0.5, 0.3}, 100.0), ConfigError);
}

TEST(GradientFloor, LargeConstantHasAPositiveRadius) {
  // h = 1/80 stands in for 1/64, which does not divide the strip height.
  const auto f = single_handle(0.0, 1.0 / 80);
  const auto r = gradient_floor_check(f, {0.0, 0.0}, 100.0);
  std::printf("delta %.4f, smallest |grad u| inside %.3f\n", r.delta, r.min_inside);
  EXPECT_GT(r.delta, 0.0);
}

TEST(Curvature, AffineGraphIsFlat) {
  const auto F = build_forms(empty_set(1.0 / 20));
  auto u = integrate_u(F);
  for (int r = 0; r < u.ncy; ++r) {
    for (int ci = 0; ci < u.ncx; ++ci) {
      const Vec2 p = u.position(ci, r);
      u.center[r * u.ncx + ci] = 0.3 * p.x - 0.7 * p.y + 2.0;
    }
  }
  const auto K = curvature_field(F, u, 0.2);
  ASSERT_FALSE(K.cells.empty());
  for (const auto& c : K.cells) {
    EXPECT_NEAR(c.K, 0.0, 1e-9);
    EXPECT_NEAR(c.grad_u_fit, std::hypot(0.3, 0.7), 1e-9);
  }
}

TEST(Curvature, EmptySetMaximumIsStableUnderRefinement) {
  std::vector<double> maxK, gap;
  for (double h : {1.0 / 20, 1.0 / 40, 1.0 / 80}) {
    const auto K = curvature_of(empty_set(h), 0.2);
    maxK.push_back(K.max_abs_K);
    gap.push_back(K.max_gradient_gap);
  }
  for (double k : maxK) {
    EXPECT_TRUE(std::isfinite(k));
    EXPECT_NEAR(k, maxK[1], 0.2 * maxK[1]);
  }
  // The two ways of computing |grad u| approach each other as h shrinks.
  EXPECT_GT(gap[0], gap[1]);
  EXPECT_GT(gap[1], gap[2]);
}

TEST(Curvature, CsvHasTheDocumentedColumns) {
  const auto K = curvature_of(empty_set(1.0 / 20), 0.2);
  const auto path = (std::filesystem::temp_directory_path() / "qpsurf_curv.csv").string();
  write_curvature_csv(K, path);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "x,y,grad_v,K");
  std::filesystem::remove(path);
}

TEST(HandleSize, FloorIsPositiveAndStableUnderRefinement) {
  // Regression values: -1.3207, -1.3986, -1.4545 at h = 1/20, 1/40, 1/80.
  std::vector<double> sizes;
  for (double h : {1.0 / 20, 1.0 / 40, 1.0 / 80}) {
    const auto F = build_forms(single_handle(0.05, h));
    sizes.push_back(handle_size(F, 0, static_cast<int>(std::lround(0.1 / h))));
  }
  EXPECT_NEAR(sizes[0], -1.3207, 1e-3);
  EXPECT_NEAR(sizes[1], -1.3986, 1e-3);
  EXPECT_NEAR(sizes[2], -1.4545, 1e-3);
  for (std::size_t k = 1; k < sizes.size(); ++k) {
    EXPECT_LT(std::abs(sizes[k] - sizes[k - 1]), 0.1 * std::abs(sizes[k - 1]));
  }
}
