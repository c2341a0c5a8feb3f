#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "qpsurf/period_solver.hpp"
#include "qpsurf/sequences.hpp"

using namespace qpsurf;

namespace {

/// floor(sqrt(2) i) by integer square roots: sqrt(2 i^2) is never an
/// integer for i != 0.
long sqrt2_floor_oracle(long i) {
  const auto n = static_cast<std::uint64_t>(2) * static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(i);
  auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return i >= 0 ? static_cast<long>(r) : -static_cast<long>(r) - 1;
}

/// The digits of 0123456789101112... as a string; x(i) is character i - 1.
std::string counting_oracle(std::size_t length) {
  std::string s;
  for (long k = 0; s.size() < length; ++k) s += std::to_string(k);
  return s.substr(0, length);
}

}  // namespace

TEST(Beatty, SqrtTwoExample) {
  const auto s = beatty_gaps(sqrt_convergents(2), 0, 5);
  EXPECT_EQ(s.p.values, (std::vector<long>{0, 1, 2, 4, 5, 7}));
  const auto g = s.gaps();
  EXPECT_EQ(g.i_min, 1);
  EXPECT_EQ(g.values, (std::vector<long>{1, 1, 2, 1, 2}));
  EXPECT_EQ(s.generator, Generator::beatty);
  EXPECT_EQ(s.description, "beatty(sqrt2)");
}

TEST(Beatty, MatchesIntegerSquareRootOracle) {
  const auto s = beatty_gaps(sqrt_convergents(2), -100000, 100000);
  for (long i = -100000; i <= 100000; i += 7) ASSERT_EQ(s.at(i), sqrt2_floor_oracle(i)) << "i=" << i;
  // Sturmian: exactly two gap values.
  const auto g = s.gaps();
  const std::set<long> values(g.values.begin(), g.values.end());
  EXPECT_EQ(values, (std::set<long>{1, 2}));
}

TEST(Beatty, RationalAlphaIsPeriodic) {
  const auto s = beatty_gaps(Rational{2, 1}, -50, 50);
  for (long v : s.gaps().values) EXPECT_EQ(v, 2);
  const auto scan = quasiperiodicity_scan(s.gaps(), 10, 5);
  EXPECT_EQ(scan.perfect.size(), 10u);
  EXPECT_THROW(beatty_gaps(Rational{1, 1}, 0, 3), ConfigError);
  EXPECT_THROW(beatty_gaps(Rational{3, 0}, 0, 3), ConfigError);
  EXPECT_THROW(beatty_gaps(sqrt_convergents(2), 3, 0), ConfigError);
}

TEST(Irrationals, ParsingAndConvergents) {
  const auto c = sqrt_convergents(2);
  ASSERT_GE(c.list.size(), 6u);
  const std::vector<std::int64_t> dens{1, 2, 5, 12, 29, 70};
  for (std::size_t k = 0; k < dens.size(); ++k) EXPECT_EQ(c.list[k].den, dens[k]);
  EXPECT_EQ(c.list[3].num, 17);
  const auto [lo, hi] = c.pair_below(100);
  EXPECT_LT(static_cast<double>(lo.num) / lo.den, std::sqrt(2.0) + 1e-3);
  EXPECT_LT(std::max(lo.den, hi.den), 100);
  EXPECT_EQ(parse_irrational("golden").list[5].num, 13);
  EXPECT_EQ(parse_irrational("sqrt3").name, "sqrt3");
  EXPECT_EQ(parse_irrational("7/3").list.front().num, 7);
  EXPECT_THROW(parse_irrational("sqrt4"), ConfigError);
  EXPECT_THROW(parse_irrational("pi"), ConfigError);
  EXPECT_THROW(sqrt_convergents(1), ConfigError);
  // Golden ratio p(i) = floor(phi i).
  const auto s = beatty_gaps(golden_convergents(), 0, 6);
  EXPECT_EQ(s.p.values, (std::vector<long>{0, 1, 3, 4, 6, 8, 9}));
}

TEST(Counting, DigitsMatchTheConcatenatedIntegers) {
  const auto oracle = counting_oracle(201);
  for (long i = 1; i <= 200; ++i) EXPECT_EQ(counting_digit(i), oracle[i - 1] - '0') << "i=" << i;
  EXPECT_EQ(counting_digit(0), 0);
  EXPECT_EQ(counting_digit(-5), 0);
  EXPECT_EQ(counting_digit(11), 1);
  EXPECT_EQ(counting_digit(12), 0);
  const auto x = counting_sequence(1, 15);
  std::string s;
  for (long v : x.values) s += std::to_string(v);
  EXPECT_EQ(s, "012345678910111");
  // Far along the sequence the digit formula still agrees with the oracle.
  const auto far = counting_oracle(5001);
  for (long i = 4900; i <= 5000; ++i) EXPECT_EQ(counting_digit(i), far[i - 1] - '0');
}

TEST(Counting, GapsAreQuasiPeriodicButNotPeriodic) {
  const auto s = counting_gaps(-300, 3000);
  for (long i = 1; i <= 200; ++i) EXPECT_EQ(s.at(i) - s.at(i - 1), 1 + counting_digit(i));
  EXPECT_EQ(s.at(0), 0);
  const auto g = s.gaps();
  // Around 0 the gaps read 1, 1, 1, so a perfect shift n at radius 1 needs
  // x(n - 1) = x(n) = x(n + 1) = 0; the first such run sits inside "1000".
  const auto scan = quasiperiodicity_scan(g, 2990, 1);
  ASSERT_FALSE(scan.perfect.empty());
  const auto digits = counting_oracle(3000);
  const auto first_run = static_cast<long>(digits.find("000")) + 2;
  EXPECT_EQ(scan.perfect.front(), first_run);
  const auto w = periodicity_witnesses(g, 100);
  for (std::size_t n = 0; n < w.size(); ++n) EXPECT_TRUE(w[n].has_value()) << "n=" << n + 1;
}

TEST(Shift, IdentityAndGroupAction) {
  const auto x = beatty_gaps(sqrt_convergents(2), -60, 60).gaps();
  const auto id = shift(x, 0);
  EXPECT_EQ(id.i_min, x.i_min);
  EXPECT_EQ(id.values, x.values);
  for (long a : {-7, 3, 12}) {
    for (long b : {-5, 4, 9}) {
      const auto lhs = shift(shift(x, a), b);
      const auto rhs = shift(x, a + b);
      for (long i = lhs.i_min; i <= lhs.i_max(); ++i) {
        if (rhs.contains(i)) EXPECT_EQ(lhs.at(i), rhs.at(i));
      }
    }
  }
  EXPECT_THROW(shift(x, 1000), ConfigError);
}

TEST(Shift, ConvergentDenominatorsAlmostPreserveBeattyGaps) {
  const auto g = beatty_gaps(sqrt_convergents(2), -400, 400).gaps();
  for (long n : {12, 29, 70}) {
    const auto s = shift(g, n);
    int mismatches = 0;
    for (long i = -20; i <= 20; ++i) mismatches += s.at(i) != g.at(i);
    EXPECT_LE(mismatches, 2) << "n=" << n;
  }
}

TEST(Scan, SqrtTwoHasPerfectCandidatesAndWitnesses) {
  const auto g = beatty_gaps(sqrt_convergents(2), -2000, 2000).gaps();
  const auto scan = quasiperiodicity_scan(g, 100, 20);
  EXPECT_EQ(scan.scores.size(), 100u);
  EXPECT_EQ(scan.perfect, (std::vector<long>{29, 58, 99}));
  const auto w = periodicity_witnesses(g, 100);
  ASSERT_EQ(w.size(), 100u);
  for (std::size_t n = 0; n < w.size(); ++n) {
    ASSERT_TRUE(w[n].has_value()) << "n=" << n + 1;
    EXPECT_NE(g.at(*w[n] + static_cast<long>(n) + 1), g.at(*w[n]));
  }
  const auto path = (std::filesystem::temp_directory_path() / "qpsurf_seqscan.csv").string();
  write_scan_csv(scan, path);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "n,score,perfect");
  std::filesystem::remove(path);
  EXPECT_THROW(quasiperiodicity_scan(g, 100, 5000), ConfigError);
  EXPECT_THROW(quasiperiodicity_scan(g, 0, 5), ConfigError);
}

TEST(ExplicitGaps, Validation) {
  EXPECT_NO_THROW(explicit_gaps(-1, {-3, 0, 2}));
  EXPECT_THROW(explicit_gaps(-1, {-3, 1, 2}), ConfigError);
  EXPECT_THROW(explicit_gaps(0, {0, 2, 2}), ConfigError);
  EXPECT_THROW(explicit_gaps(0, {}), ConfigError);
}

TEST(WindowMatch, KarcherLayerIsTwoPeriodic) {
  const auto cfg = StripConfig::make(0.6, 1.0 / 40, {-8, 8});
  const auto m = build_fundamental_piece(build_forms(solve_dirichlet(cfg, {})));
  WindowMatchOptions opt;
  const auto self = surface_window_match(m, m, opt);
  EXPECT_EQ(self.residual, 0.0);
  EXPECT_GT(self.compared, 0u);
  opt.x_shift = 2 * m.per_unit;
  const auto period = surface_window_match(m, m, opt);
  EXPECT_LE(period.residual, m.mesh_tol);
  EXPECT_GT(period.t, 0.0);
}

TEST(WindowMatch, EqualGapsMatchUnderOneGapShift) {
  // p = 2i for i = -2..2 is solved by q = 2p; its surface repeats after one
  // gap, a translation by 4 in x.
  const std::vector<long> p{-4, -2, 0, 2, 4};
  const auto cfg = StripConfig::make(0.6, 1.0 / 20, default_window(p), 0.125);
  const auto trace = solve_periods(cfg, p);
  const auto m = build_fundamental_piece(build_forms(solve_dirichlet(cfg, trace.solution)));
  WindowMatchOptions opt;
  opt.x_shift = 4 * m.per_unit;
  EXPECT_LE(surface_window_match(m, m, opt).residual, m.mesh_tol);
  opt.x_shift = 1000 * m.per_unit;
  EXPECT_THROW(surface_window_match(m, m, opt), MeshError);
}
