#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "qpsurf/error.hpp"
#include "qpsurf/surface_builder.hpp"

namespace qpsurf {

/// Integer sequence on the index window [i_min, i_min + size - 1].
struct IntSequence {
  long i_min = 0;
  std::vector<long> values;

  long i_max() const { return i_min + static_cast<long>(values.size()) - 1; }
  bool empty() const { return values.empty(); }
  bool contains(long i) const { return !values.empty() && i >= i_min && i <= i_max(); }
  long at(long i) const {
    if (!contains(i)) throw std::out_of_range("IntSequence: index outside the window");
    return values[static_cast<std::size_t>(i - i_min)];
  }
};

/// Exact rational a / b with b > 0, used as a surrogate for an irrational.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Continued-fraction convergents of an irrational, in order.
struct Convergents {
  std::string name;
  std::vector<Rational> list;
  /// Last convergent with denominator at most max_den, together with the
  /// one before it; alpha lies between them.
  std::pair<Rational, Rational> pair_below(std::int64_t max_den) const {
    std::size_t k = 0;
    while (k + 1 < list.size() && list[k + 1].den <= max_den) ++k;
    if (k == 0) throw ConfigError("convergents: denominator bound too small for " + name);
    return {list[k - 1], list[k]};
  }
};

namespace detail {

/// Convergents from partial quotients, stopping before 64-bit overflow.
inline Convergents convergents_from_terms(const std::string& name, const std::vector<std::int64_t>& terms) {
  Convergents c;
  c.name = name;
  __int128 p0 = 1, q0 = 0, p1 = terms.at(0), q1 = 1;
  c.list.push_back({static_cast<std::int64_t>(p1), 1});
  const __int128 limit = std::numeric_limits<std::int64_t>::max() / 4;
  for (std::size_t k = 1; k < terms.size(); ++k) {
    const __int128 p2 = terms[k] * p1 + p0, q2 = terms[k] * q1 + q0;
    if (p2 > limit || q2 > limit) break;
    c.list.push_back({static_cast<std::int64_t>(p2), static_cast<std::int64_t>(q2)});
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
  }
  return c;
}

inline std::int64_t floor_div(__int128 a, std::int64_t b) {
  __int128 q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return static_cast<std::int64_t>(q);
}

}  // namespace detail

/// Convergents of sqrt(n) for a non-square n, from its periodic continued
/// fraction computed in integers.
inline Convergents sqrt_convergents(std::int64_t n) {
  if (n < 2) throw ConfigError("sqrt_convergents: n must be at least 2");
  const auto a0 = static_cast<std::int64_t>(std::floor(std::sqrt(static_cast<double>(n))));
  std::int64_t r = a0;
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  if (r * r == n) throw ConfigError("sqrt_convergents: n is a perfect square");
  std::vector<std::int64_t> terms{r};
  std::int64_t m = 0, d = 1, a = r;
  for (int k = 0; k < 90; ++k) {
    m = d * a - m;
    d = (n - m * m) / d;
    a = (r + m) / d;
    terms.push_back(a);
  }
  return detail::convergents_from_terms("sqrt" + std::to_string(n), terms);
}

/// Convergents of the golden ratio (1 + sqrt 5) / 2: all partial quotients 1.
inline Convergents golden_convergents() {
  return detail::convergents_from_terms("golden", std::vector<std::int64_t>(90, 1));
}

/// Parses "sqrtN", "golden" or an explicit fraction "a/b" (a single
/// convergent, used as given).
inline Convergents parse_irrational(const std::string& s) {
  if (s == "golden") return golden_convergents();
  if (s.rfind("sqrt", 0) == 0) {
    try {
      return sqrt_convergents(std::stoll(s.substr(4)));
    } catch (const std::invalid_argument&) {
      throw ConfigError("cannot parse irrational '" + s + "'");
    }
  }
  const auto slash = s.find('/');
  if (slash != std::string::npos) {
    try {
      Rational r{std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1))};
      if (r.den <= 0) throw ConfigError("irrational '" + s + "': denominator must be positive");
      Convergents c;
      c.name = s;
      c.list = {r, r};
      return c;
    } catch (const std::invalid_argument&) {
    }
  }
  throw ConfigError("cannot parse irrational '" + s + "' (expected sqrtN, golden or a/b)");
}

enum class Generator { beatty, counting, explicit_list };

inline const char* generator_name(Generator g) {
  switch (g) {
    case Generator::beatty: return "beatty";
    case Generator::counting: return "counting";
    case Generator::explicit_list: return "explicit";
  }
  return "explicit";
}

/// Strictly increasing integer sequence p on a window, with p(0) = 0.
struct GapSequence {
  IntSequence p;
  Generator generator = Generator::explicit_list;
  std::string description;

  long i_min() const { return p.i_min; }
  long i_max() const { return p.i_max(); }
  long at(long i) const { return p.at(i); }
  /// g(i) = p(i) - p(i - 1) for i in [i_min + 1, i_max].
  IntSequence gaps() const {
    IntSequence g;
    g.i_min = p.i_min + 1;
    for (std::size_t k = 1; k < p.values.size(); ++k) g.values.push_back(p.values[k] - p.values[k - 1]);
    return g;
  }
  void validate() const {
    if (p.empty()) throw ConfigError("gap sequence: empty window");
    for (std::size_t k = 1; k < p.values.size(); ++k) {
      if (p.values[k] <= p.values[k - 1]) throw ConfigError("gap sequence: not strictly increasing");
    }
    if (p.contains(0) && p.at(0) != 0) throw ConfigError("gap sequence: p(0) must be 0");
  }
};

/// p(i) = floor(alpha i) on [i_min, i_max], in exact integer arithmetic on
/// the two largest convergents with denominator below 2^31. Both bracket
/// alpha, so equal floors certify floor(alpha i); a disagreement throws.
inline GapSequence beatty_gaps(const Convergents& alpha, long i_min, long i_max) {
  if (i_min > i_max) throw ConfigError("beatty_gaps: empty window");
  const auto [lo, hi] = alpha.pair_below(std::int64_t{1} << 31);
  if (hi.num <= hi.den || lo.num <= lo.den) throw ConfigError("beatty_gaps: alpha must exceed 1");
  GapSequence s;
  s.generator = Generator::beatty;
  s.description = "beatty(" + alpha.name + ")";
  s.p.i_min = i_min;
  for (long i = i_min; i <= i_max; ++i) {
    const std::int64_t a = detail::floor_div(static_cast<__int128>(hi.num) * i, hi.den);
    const std::int64_t b = detail::floor_div(static_cast<__int128>(lo.num) * i, lo.den);
    if (a != b) {
      std::ostringstream os;
      os << "beatty_gaps: floor(alpha * " << i << ") is not resolved by the convergents of " << alpha.name;
      throw ConfigError(os.str());
    }
    s.p.values.push_back(a);
  }
  s.validate();
  return s;
}

/// Same for a rational alpha given directly (used for the periodic case).
inline GapSequence beatty_gaps(Rational alpha, long i_min, long i_max) {
  if (alpha.den <= 0) throw ConfigError("beatty_gaps: denominator must be positive");
  if (alpha.num <= alpha.den) throw ConfigError("beatty_gaps: alpha must exceed 1");
  Convergents c;
  c.name = std::to_string(alpha.num) + "/" + std::to_string(alpha.den);
  c.list = {alpha, alpha};
  return beatty_gaps(c, i_min, i_max);
}

/// i-th digit (i >= 1) of the word 0123456789101112..., 0 for i <= 0.
inline int counting_digit(long i) {
  if (i <= 0) return 0;
  if (i > 1'000'000'000'000'000L) throw ConfigError("counting_digit: index beyond the implemented range");
  long k = i - 1;  // 0-based position in the word
  if (k < 10) return static_cast<int>(k);
  k -= 10;
  long width = 2, count = 90, first = 10;
  while (k >= width * count) {
    k -= width * count;
    ++width;
    count *= 10;
    first *= 10;
  }
  const long number = first + k / width;
  const long pos = k % width;
  const std::string digits = std::to_string(number);
  return digits[static_cast<std::size_t>(pos)] - '0';
}

/// The counting sequence x(i) on [i_min, i_max].
inline IntSequence counting_sequence(long i_min, long i_max) {
  if (i_min > i_max) throw ConfigError("counting_sequence: empty window");
  IntSequence s;
  s.i_min = i_min;
  for (long i = i_min; i <= i_max; ++i) s.values.push_back(counting_digit(i));
  return s;
}

/// Gap sequence with gaps 1 + x(i) built on the counting sequence x, so the
/// gaps are quasi-periodic and at least 1.
inline GapSequence counting_gaps(long i_min, long i_max) {
  if (i_min > i_max) throw ConfigError("counting_gaps: empty window");
  GapSequence s;
  s.generator = Generator::counting;
  s.description = "counting";
  s.p.i_min = i_min;
  for (long i = i_min; i <= i_max; ++i) {
    long p = 0;
    if (i > 0) {
      for (long k = 1; k <= i; ++k) p += 1 + counting_digit(k);
    } else {
      p = i;  // x(k) = 0 for k <= 0, so every gap there is 1
    }
    s.p.values.push_back(p);
  }
  s.validate();
  return s;
}

inline GapSequence explicit_gaps(long i_min, std::vector<long> p) {
  GapSequence s;
  s.generator = Generator::explicit_list;
  s.description = "explicit";
  s.p.i_min = i_min;
  s.p.values = std::move(p);
  s.validate();
  return s;
}

/// (n . x)(i) = x(n + i), on the indices i where both i and n + i lie in the
/// window of x.
inline IntSequence shift(const IntSequence& x, long n) {
  const long lo = std::max(x.i_min, x.i_min - n);
  const long hi = std::min(x.i_max(), x.i_max() - n);
  if (x.empty() || lo > hi) throw ConfigError("shift: empty result window");
  IntSequence s;
  s.i_min = lo;
  for (long i = lo; i <= hi; ++i) s.values.push_back(x.at(n + i));
  return s;
}

struct ScanResult {
  long n_max = 0;
  long radius = 0;
  std::vector<std::pair<long, long>> scores;  // (n, matches over |i| <= radius)
  std::vector<long> perfect;                  // n with 2 radius + 1 matches
};

/// For n = 1..n_max counts i with |i| <= radius and g(i + n) = g(i).
inline ScanResult quasiperiodicity_scan(const IntSequence& g, long n_max, long radius) {
  if (n_max < 1 || radius < 0) throw ConfigError("quasiperiodicity_scan: n_max >= 1 and radius >= 0 required");
  if (g.empty() || g.i_min > -radius || g.i_max() < n_max + radius) {
    throw ConfigError("quasiperiodicity_scan: window must cover [-radius, n_max + radius]");
  }
  ScanResult r;
  r.n_max = n_max;
  r.radius = radius;
  for (long n = 1; n <= n_max; ++n) {
    long score = 0;
    for (long i = -radius; i <= radius; ++i) score += g.at(i + n) == g.at(i);
    r.scores.emplace_back(n, score);
    if (score == 2 * radius + 1) r.perfect.push_back(n);
  }
  return r;
}

/// For each candidate period n = 1..n_max, an index i with both i and i + n
/// in the window and g(i + n) != g(i), if there is one.
inline std::vector<std::optional<long>> periodicity_witnesses(const IntSequence& g, long n_max) {
  std::vector<std::optional<long>> out;
  for (long n = 1; n <= n_max; ++n) {
    std::optional<long> w;
    for (long i = g.i_min; i + n <= g.i_max(); ++i) {
      if (g.at(i + n) != g.at(i)) {
        w = i;
        break;
      }
    }
    out.push_back(w);
  }
  return out;
}

inline void write_scan_csv(const ScanResult& r, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw MeshError("cannot open " + path);
  os << "n,score,perfect\n";
  for (const auto& [n, s] : r.scores) os << n << ',' << s << ',' << (s == 2 * r.radius + 1 ? 1 : 0) << '\n';
}

struct WindowMatchOptions {
  long x_shift = 0;          // lattice columns: B's column = A's column + x_shift
  double window_lo = -1.0;   // central window of A, in x
  double window_hi = 1.0;
};

struct WindowMatch {
  double residual = 0.0;     // max vertex distance after the best translation
  double t = 0.0;            // translation (0, t, 0) applied to B
  std::size_t compared = 0;  // vertex pairs
};

/// Pairs the fundamental-piece vertices of A in the central window with the
/// vertices of B at the same row and x_shift columns to the right, then
/// finds the translation (0, t, 0) of B minimizing the largest pair
/// distance. The objective is convex in t, so a ternary search finds it.
inline WindowMatch surface_window_match(const SurfaceMesh& A, const SurfaceMesh& B, const WindowMatchOptions& opt) {
  if (A.per_unit <= 0 || A.per_unit != B.per_unit) throw MeshError("surface_window_match: meshes use different grids");
  std::map<std::tuple<long, int, int>, int> at_b;
  for (std::size_t k = 0; k < B.size(); ++k) {
    const auto& pr = B.provenance[k];
    if (pr.copy == 0) at_b[{pr.column, pr.row, pr.branch}] = static_cast<int>(k);
  }
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t k = 0; k < A.size(); ++k) {
    const auto& pr = A.provenance[k];
    if (pr.copy != 0) continue;
    const double x = static_cast<double>(pr.column) / static_cast<double>(A.per_unit);
    if (x < opt.window_lo || x > opt.window_hi) continue;
    const auto it = at_b.find({pr.column + opt.x_shift, pr.row, pr.branch});
    if (it != at_b.end()) pairs.emplace_back(static_cast<int>(k), it->second);
  }
  if (pairs.empty()) throw MeshError("surface_window_match: windows do not overlap");
  auto objective = [&](double t) {
    double worst = 0.0;
    for (const auto& [ia, ib] : pairs) {
      const Vec3& a = A.vertices[ia];
      const Vec3& b = B.vertices[ib];
      worst = std::max(worst, dist3(a, Vec3{b[0], b[1] + t, b[2]}));
    }
    return worst;
  };
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [ia, ib] : pairs) {
    const double d = A.vertices[ia][1] - B.vertices[ib][1];
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
    const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
    if (objective(m1) <= objective(m2)) hi = m2;
    else lo = m1;
  }
  WindowMatch r;
  r.t = 0.5 * (lo + hi);
  r.residual = objective(r.t);
  r.compared = pairs.size();
  return r;
}

}  // namespace qpsurf
