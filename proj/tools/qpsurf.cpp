#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "qpsurf/qpsurf.hpp"

using namespace qpsurf;

namespace {

StripConfig single_handle_config(double ell, double h) {
  return StripConfig::make(ell, h, default_window({0}), 0.75 * eta_of_ell(ell));
}

std::ostream& open_or_stdout(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw MeshError("cannot open " + path);
  return file;
}

int run_command(const std::string& config, bool quiet) {
  const auto res = run_pipeline(config, quiet ? nullptr : &std::cerr);
  if (res.exit_code != 0) {
    std::cerr << res.message << '\n';
    return res.exit_code;
  }
  std::cout << "wrote";
  for (const auto& a : res.artifacts) std::cout << ' ' << a;
  std::cout << '\n';
  return 0;
}

int scan_period(double ell, double h, int resolution, const std::string& out) {
  const auto cfg = single_handle_config(ell, h);
  const double q_max = cfg.eta - 2.0 * h;
  std::ofstream file;
  std::ostream& os = open_or_stdout(out, file);
  os << "q,F1,quadrature_noise,handle_size\n";
  for (int k = -resolution; k <= resolution; ++k) {
    const double q = q_max * k / resolution;
    const auto rep = periods(cfg, SingularSet::with_offsets({0}, {q}));
    os << detail::fmt_double(q) << ',' << detail::fmt_double(rep.F[0]) << ','
       << detail::fmt_double(rep.quadrature_noise[0]) << ',' << detail::fmt_double(rep.handle_sizes[0]) << '\n';
  }
  return 0;
}

int calibrate(double ell, double h, int resolution, double threshold, const std::string& out) {
  CalibrationOptions opt;
  opt.threshold = threshold;
  const auto prof = calibrate_eta0(single_handle_config(ell, h), resolution, opt);
  if (!out.empty()) write_scan_csv(prof, out);
  std::cout << "eta0 = " << detail::fmt_double(prof.eta0) << '\n';
  return 0;
}

int match_windows(const std::string& config, long n_max, long radius, double lo, double hi, const std::string& out) {
  const PipelineConfig pc = load_config(config);
  std::ofstream file;
  std::ostream& os = open_or_stdout(out, file);
  if (pc.generator == Generator::explicit_list && pc.p_list.empty()) {
    // Karcher layer: the surface is 2-periodic in x.
    PipelineConfig quiet = pc;
    quiet.face_samples = 0;
    quiet.verify_factor = 0;
    const auto res = run_pipeline(quiet);
    if (res.exit_code != 0) {
      std::cerr << res.message << '\n';
      return res.exit_code;
    }
    os << "x_shift,residual,t,pairs,mesh_tol\n";
    for (long shift : {1L, 2L, 4L}) {
      const auto m = surface_window_match(res.piece, res.piece, {shift * res.piece.per_unit, lo, hi});
      os << shift << ',' << detail::fmt_double(m.residual) << ',' << detail::fmt_double(m.t) << ',' << m.compared << ','
         << detail::fmt_double(res.piece.mesh_tol) << '\n';
    }
    return 0;
  }
  if (pc.generator == Generator::explicit_list) throw ConfigError("match-windows needs generator=beatty or counting, or p_list empty");
  // Candidate extractions from the gap scan of a wide window, then the
  // surface of the configured window compared with itself shifted by the
  // candidate, 2 (p(n) - p(0)) in x.
  const long wide = n_max + radius + 1;
  const GapSequence wide_seq = pc.generator == Generator::beatty
                                   ? beatty_gaps(parse_irrational(pc.alpha), -wide, wide)
                                   : counting_gaps(-wide, wide);
  const auto scan = quasiperiodicity_scan(wide_seq.gaps(), n_max, radius);
  const auto res = run_pipeline(pc);
  if (res.exit_code != 0) {
    std::cerr << res.message << '\n';
    return res.exit_code;
  }
  os << "n,score,x_shift,residual,t,pairs\n";
  for (long n : scan.perfect) {
    const long x_shift = 2 * (wide_seq.at(n) - wide_seq.at(0));
    os << n << ',' << 2 * radius + 1 << ',' << x_shift << ',';
    try {
      const auto m = surface_window_match(res.piece, res.piece, {x_shift * res.piece.per_unit, lo, hi});
      os << detail::fmt_double(m.residual) << ',' << detail::fmt_double(m.t) << ',' << m.compared << '\n';
    } catch (const MeshError&) {
      os << "no_overlap,,0\n";
    }
  }
  return 0;
}

int diagnose(const std::string& config, const std::string& out_dir) {
  PipelineConfig pc = load_config(config);
  const auto p = pc.anchors();
  const StripConfig cfg = pc.strip(p);
  const auto S = SingularSet::centered(p);
  SolverOptions sopt;
  sopt.tol_pde = pc.tol_pde;
  const auto field = solve_dirichlet(cfg, S, sopt);
  const auto forms = build_forms(field);
  std::filesystem::create_directories(out_dir);
  const RidgeOptions ropt;
  const auto ridges = divergence_ridges({field}, ropt);
  write_ridges_csv(ridges, ropt, out_dir + "/ridges.csv");
  const auto fluxes = top_boundary_fluxes(field);
  write_flux_csv(fluxes, 0.02, out_dir + "/flux.csv");
  const auto K = curvature_field(forms, integrate_u(forms, {base_column(forms.grid()), 0}), 0.2);
  write_curvature_csv(K, out_dir + "/curvature.csv");
  int mismatches = 0;
  for (const auto& f : fluxes) mismatches += f.tag != expected_top_tag(std::lround(f.x0));
  std::cout << "ridges " << ridges.size() << "\nflux_pattern_mismatches " << mismatches << "\nmax_abs_K "
            << detail::fmt_double(K.max_abs_K) << "\nmax_gradient_gap " << detail::fmt_double(K.max_gradient_gap)
            << '\n';
  for (std::size_t i = 0; i < S.size(); ++i) {
    const auto gf = gradient_floor_check(field, {S.q[i], 0.0}, 10.0);
    std::cout << "gradient_floor_C10 q=" << detail::fmt_double(S.q[i]) << " delta " << detail::fmt_double(gf.delta) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-periodic minimal surfaces from maximal graphs on a strip"};
  app.require_subcommand(1);

  std::string config;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run the full pipeline for a config file");
  run->add_option("config", config, "key=value config file")->required();
  run->add_flag("-q,--quiet", quiet, "Do not log stage progress to stderr");

  double ell = 0.6, h = 0.025, threshold = 0.5;
  int resolution = 12;
  std::string out;
  auto* scan = app.add_subcommand("scan-period", "Single-handle table of F_1(q) over (-(eta - 2h), eta - 2h)");
  scan->add_option("--ell", ell, "Half height of the strip")->capture_default_str();
  scan->add_option("--grid-h", h, "Lattice spacing")->capture_default_str();
  scan->add_option("--resolution", resolution, "Samples on each side of q = 0")->capture_default_str();
  scan->add_option("-o,--out", out, "CSV output path (default stdout)");

  auto* cal = app.add_subcommand("calibrate-eta0", "Empirical eta0 from the single-handle period profile");
  cal->add_option("--ell", ell, "Half height of the strip")->capture_default_str();
  cal->add_option("--grid-h", h, "Lattice spacing")->capture_default_str();
  cal->add_option("--resolution", resolution, "Number of scanned q values")->capture_default_str();
  cal->add_option("--threshold", threshold, "Required F_1 on the accepted range")->capture_default_str();
  cal->add_option("-o,--out", out, "CSV output path for the profile");

  long n_max = 100, radius = 20;
  double lo = -1.0, hi = 1.0;
  auto* match = app.add_subcommand("match-windows", "Window-match residuals of the surface under candidate extractions");
  match->add_option("config", config, "key=value config file")->required();
  match->add_option("--n-max", n_max, "Largest scanned extraction")->capture_default_str();
  match->add_option("--radius", radius, "Scan radius |i| <= radius")->capture_default_str();
  match->add_option("--lo", lo, "Left end of the central x window")->capture_default_str();
  match->add_option("--hi", hi, "Right end of the central x window")->capture_default_str();
  match->add_option("-o,--out", out, "CSV output path (default stdout)");

  std::string out_dir = "diagnostics";
  auto* diag = app.add_subcommand("diagnose", "Ridges, boundary flux and curvature of the centered configuration");
  diag->add_option("config", config, "key=value config file")->required();
  diag->add_option("-d,--dir", out_dir, "Directory for the CSV fields")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return run_command(config, quiet);
    if (*scan) return scan_period(ell, h, resolution, out);
    if (*cal) return calibrate(ell, h, resolution, threshold, out);
    if (*match) return match_windows(config, n_max, radius, lo, hi, out);
    if (*diag) return diagnose(config, out_dir);
  } catch (const Error& e) {
    std::cerr << stage_name(e.stage()) << " error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
