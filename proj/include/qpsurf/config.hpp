#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qpsurf/error.hpp"
#include "qpsurf/sequences.hpp"
#include "qpsurf/strip_domain.hpp"

namespace qpsurf {

/// Pipeline configuration, read from key=value lines.
///
/// Keys:
///   ell             half height of the strip (default 0.6)
///   grid_h          lattice spacing; ell / grid_h and 1 / grid_h must be integers (default 0.025)
///   eta0            number, or 'calibrate' to run calibrate_eta0 (default 0.75 eta)
///   calibrate_resolution, calibrate_threshold   scan size and F threshold (12, 0.5)
///   p_list          comma-separated strictly increasing integers, may be empty
///   generator       beatty | counting | explicit (explicit uses p_list)
///   alpha           irrational for beatty: sqrtN, golden or a/b (default sqrt2)
///   window          index window i_min,i_max of the generated sequence
///   x_window        truncation window x_min,x_max (default 2 min p - 4, 2 max p + 4)
///   copies_x, copies_z   symmetry copies of the exported surface (1, 1)
///   tol_pde, tol_F, mesh_tol   tolerances; tol_F and mesh_tol negative select h^2 and 10 h^2
///   loop_m          period loop half-width in cells (10)
///   face_samples    samples per Miranda face, 0 skips the face check (2)
///   verify_factor   refinement factor of the verification solve, 0 skips it (2)
///   mesh_format     obj, ply or obj,ply (obj,ply)
///   output_dir      artifact directory (required)
struct PipelineConfig {
  double ell = 0.6;
  double grid_h = 0.025;
  std::optional<double> eta0;  // empty: 0.75 eta
  bool calibrate = false;
  int calibrate_resolution = 12;
  double calibrate_threshold = 0.5;
  std::vector<long> p_list;
  Generator generator = Generator::explicit_list;
  std::string alpha = "sqrt2";
  std::optional<std::pair<long, long>> window;
  std::optional<std::pair<double, double>> x_window;
  int copies_x = 1;
  int copies_z = 1;
  double tol_pde = 1e-8;
  double tol_F = -1.0;
  double mesh_tol = -1.0;
  int loop_m = 10;
  int face_samples = 2;
  int verify_factor = 2;
  bool write_obj = true;
  bool write_ply = true;
  std::string output_dir;
  /// key = value pairs in file order, as read.
  std::vector<std::pair<std::string, std::string>> echo;

  /// The anchors p: p_list, or p(i) over the window for a generator.
  std::vector<long> anchors() const {
    if (generator == Generator::explicit_list) return p_list;
    const auto [lo, hi] = *window;
    const GapSequence s = generator == Generator::beatty ? beatty_gaps(parse_irrational(alpha), lo, hi)
                                                         : counting_gaps(lo, hi);
    return s.p.values;
  }

  StripConfig strip(const std::vector<long>& p) const {
    const auto xw = x_window.value_or(default_window(p));
    return StripConfig::make(ell, grid_h, xw, eta0);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Comma-separated items; surrounding brackets are optional.
inline std::vector<std::string> split_list(std::string v) {
  v = trim(v);
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline long parse_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

template <class T, class Parse>
std::pair<T, T> parse_pair(const std::string& key, const std::string& v, Parse parse) {
  const auto items = split_list(v);
  if (items.size() != 2) throw ConfigError("config key '" + key + "': expected two comma-separated values");
  return {parse(key, items[0]), parse(key, items[1])};
}

}  // namespace detail

/// Parses the key=value text. '#' starts a comment; blank lines are ignored.
/// Unknown keys, repeated keys and malformed values raise ConfigError naming
/// the key.
inline PipelineConfig parse_config(std::istream& is) {
  using namespace detail;
  PipelineConfig c;
  std::string raw;
  int line_no = 0;
  std::map<std::string, int> seen;
  bool have_p_list = false;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (seen.count(key)) throw ConfigError("config key '" + key + "' is repeated (line " + std::to_string(line_no) + ")");
    seen[key] = line_no;
    if (key == "ell") {
      c.ell = parse_real(key, val);
    } else if (key == "grid_h") {
      c.grid_h = parse_real(key, val);
    } else if (key == "eta0") {
      if (val == "calibrate") c.calibrate = true;
      else c.eta0 = parse_real(key, val);
    } else if (key == "calibrate_resolution") {
      c.calibrate_resolution = static_cast<int>(parse_integer(key, val));
    } else if (key == "calibrate_threshold") {
      c.calibrate_threshold = parse_real(key, val);
    } else if (key == "p_list") {
      have_p_list = true;
      for (const auto& item : split_list(val)) c.p_list.push_back(parse_integer(key, item));
    } else if (key == "generator") {
      if (val == "beatty") c.generator = Generator::beatty;
      else if (val == "counting") c.generator = Generator::counting;
      else if (val == "explicit") c.generator = Generator::explicit_list;
      else throw ConfigError("config key 'generator': expected beatty, counting or explicit, got '" + val + "'");
    } else if (key == "alpha") {
      c.alpha = val;
    } else if (key == "window") {
      c.window = parse_pair<long>(key, val, parse_integer);
    } else if (key == "x_window") {
      c.x_window = parse_pair<double>(key, val, parse_real);
    } else if (key == "copies_x") {
      c.copies_x = static_cast<int>(parse_integer(key, val));
    } else if (key == "copies_z") {
      c.copies_z = static_cast<int>(parse_integer(key, val));
    } else if (key == "tol_pde") {
      c.tol_pde = parse_real(key, val);
    } else if (key == "tol_F") {
      c.tol_F = parse_real(key, val);
    } else if (key == "mesh_tol") {
      c.mesh_tol = parse_real(key, val);
    } else if (key == "loop_m") {
      c.loop_m = static_cast<int>(parse_integer(key, val));
    } else if (key == "face_samples") {
      c.face_samples = static_cast<int>(parse_integer(key, val));
    } else if (key == "verify_factor") {
      c.verify_factor = static_cast<int>(parse_integer(key, val));
    } else if (key == "mesh_format") {
      c.write_obj = c.write_ply = false;
      for (const auto& f : split_list(val)) {
        if (f == "obj") c.write_obj = true;
        else if (f == "ply") c.write_ply = true;
        else throw ConfigError("config key 'mesh_format': unknown format '" + f + "'");
      }
    } else if (key == "output_dir") {
      c.output_dir = val;
    } else {
      throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(line_no) + ")");
    }
    c.echo.emplace_back(key, val);
  }
  if (c.output_dir.empty()) throw ConfigError("config key 'output_dir' is required");
  if (c.generator == Generator::explicit_list) {
    if (c.window) throw ConfigError("config key 'window' needs generator=beatty or counting");
  } else {
    if (have_p_list) throw ConfigError("config key 'p_list' conflicts with generator=" + std::string(generator_name(c.generator)));
    if (!c.window) throw ConfigError("config key 'window' is required with generator=" + std::string(generator_name(c.generator)));
  }
  if (c.copies_x < 0 || c.copies_x > 1) throw ConfigError("config key 'copies_x': must be 0 or 1");
  if (c.copies_z < 0) throw ConfigError("config key 'copies_z': must be non-negative");
  if (c.loop_m < 1) throw ConfigError("config key 'loop_m': must be positive");
  if (c.face_samples < 0) throw ConfigError("config key 'face_samples': must be non-negative");
  if (c.verify_factor < 0) throw ConfigError("config key 'verify_factor': must be non-negative");
  if (c.calibrate_resolution < 2) throw ConfigError("config key 'calibrate_resolution': must be at least 2");
  if (!(c.tol_pde > 0.0)) throw ConfigError("config key 'tol_pde': must be positive");
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(is);
}

}  // namespace qpsurf
