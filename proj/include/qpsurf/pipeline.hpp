#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qpsurf/config.hpp"
#include "qpsurf/diagnostics.hpp"
#include "qpsurf/error.hpp"
#include "qpsurf/period_engine.hpp"
#include "qpsurf/period_solver.hpp"
#include "qpsurf/surface_builder.hpp"

namespace qpsurf {

struct PipelineResult {
  int exit_code = 0;
  std::string failed_stage;  // empty on success
  std::string message;
  std::string summary_path;
  std::vector<std::string> artifacts;  // paths relative to the output directory
  SurfaceMesh mesh;                    // extended surface
  SurfaceMesh piece;                   // fundamental piece
  SingularSet solution;
};

namespace detail {

/// Ordered key = value manifest.
class Manifest {
 public:
  void put(const std::string& k, const std::string& v) { rows_.emplace_back(k, v); }
  void put(const std::string& k, double v) { put(k, fmt_double(v)); }
  void put(const std::string& k, long v) { put(k, std::to_string(v)); }
  void put(const std::string& k, int v) { put(k, std::to_string(v)); }
  void put(const std::string& k, std::size_t v) { put(k, std::to_string(v)); }
  void put_list(const std::string& k, const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
    put(k, s);
  }
  void put_list(const std::string& k, const std::vector<long>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    put(k, s);
  }
  void write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MeshError("cannot open " + path);
    for (const auto& [k, v] : rows_) os << k << " = " << v << '\n';
  }

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

inline int default_exit_code(const std::string& stage) {
  if (stage == "config") return static_cast<int>(Stage::config);
  if (stage == "admissibility") return static_cast<int>(Stage::admissibility);
  if (stage == "build" || stage == "extend" || stage == "export") return static_cast<int>(Stage::mesh);
  return static_cast<int>(Stage::periods);
}

}  // namespace detail

/// Runs admissibility, optional eta0 calibration, the Miranda face check,
/// the period solve, its verification on a refined grid, the surface build,
/// the symmetry extension and the export, writing every artifact into
/// cfg.output_dir. A failing stage stops the run; the manifest summary.txt
/// records how far it got.
inline PipelineResult run_pipeline(const PipelineConfig& pc, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  PipelineResult res;
  detail::Manifest man;
  std::string stage = "config";
  const fs::path out(pc.output_dir);
  auto note = [&](const std::string& s) {
    if (log) *log << "[" << stage << "] " << s << '\n';
  };
  auto artifact = [&](const std::string& rel) {
    res.artifacts.push_back(rel);
    return (out / rel).string();
  };
  res.summary_path = (out / "summary.txt").string();
  try {
    fs::create_directories(out / "diagnostics");
    for (const auto& [k, v] : pc.echo) man.put("config." + k, v);

    const std::vector<long> p = pc.anchors();
    StripConfig cfg = pc.strip(p);
    const std::size_t N = p.size();
    const double h = cfg.grid_h;
    man.put_list("p", p);
    man.put("N", N);
    man.put("ell", cfg.ell);
    man.put("eta", cfg.eta);
    man.put("grid_h", h);
    man.put("x_window", detail::fmt_double(cfg.x_min) + "," + detail::fmt_double(cfg.x_max));

    PeriodOptions popt;
    popt.solver.tol_pde = pc.tol_pde;
    popt.loop_m = pc.loop_m;

    stage = "admissibility";
    {
      const double half = pc.calibrate ? cfg.eta - 2.0 * h : cfg.eta0;
      int reach = popt.loop_m;
      for (int m : popt.noise_radii) reach = std::max(reach, m);
      for (int side : {-1, +1}) {
        const auto S = SingularSet::with_offsets(p, std::vector<double>(N, side * half));
        const auto v = check_admissible(cfg, S);
        if (!v.admissible) {
          std::ostringstream os;
          os << "singularity " << *v.violating_index << " at q = " << S.q[*v.violating_index]
             << " is within distance 1 of the vertex a_" << v.odd_vertex;
          throw AdmissibilityError(os.str());
        }
      }
      for (long pi : p) {
        const double lo = 2.0 * pi - half - reach * h, hi = 2.0 * pi + half + reach * h;
        if (lo <= cfg.x_min || hi >= cfg.x_max) {
          throw AdmissibilityError("singularity box around 2p = " + std::to_string(2 * pi) +
                                   " does not fit inside the window with its period loops");
        }
      }
      note("ok, N = " + std::to_string(N));
    }

    stage = "calibrate";
    if (pc.calibrate) {
      CalibrationOptions copt;
      copt.period = popt;
      copt.threshold = pc.calibrate_threshold;
      const auto prof = calibrate_eta0(cfg, pc.calibrate_resolution, copt);
      write_scan_csv(prof, artifact("scan.csv"));
      cfg.eta0 = prof.eta0;
      note("eta0 = " + detail::fmt_double(cfg.eta0));
    }
    man.put("eta0", cfg.eta0);

    stage = "face_signs";
    if (N > 0 && pc.face_samples > 0) {
      FaceSignOptions fopt;
      fopt.period = popt;
      const auto faces = face_sign_check(cfg, p, cfg.eta0, pc.face_samples, fopt);
      std::ofstream os(artifact("diagnostics/faces.csv"), std::ios::binary);
      os << "i,side,sample,F,noise,passed\n";
      bool ok = true;
      std::string bad;
      for (const auto& f : faces) {
        for (std::size_t s = 0; s < f.samples.size(); ++s) {
          os << f.index << ',' << f.side << ',' << s << ',' << detail::fmt_double(f.samples[s].F) << ','
             << detail::fmt_double(f.samples[s].noise) << ',' << (f.passed ? 1 : 0) << '\n';
        }
        if (!f.passed && ok) {
          ok = false;
          bad = "(" + std::to_string(f.index) + ", " + (f.side > 0 ? "+" : "-") + ")";
        }
      }
      man.put("face_signs", ok ? std::string("passed") : "failed on face " + bad);
      if (!ok) throw PeriodError("face sign check failed on face " + bad);
      note("passed");
    }

    stage = "period_solve";
    SingularSet S;
    if (N > 0) {
      PeriodSolveOptions sopt;
      sopt.period = popt;
      sopt.tol_F = pc.tol_F;
      const auto trace = solve_periods(cfg, p, sopt);
      write_trace_csv(trace, artifact("trace.csv"));
      S = trace.solution;
      man.put("solve_status", status_name(trace.status));
      man.put("solve_evaluations", trace.evaluations);
      note(std::string(status_name(trace.status)) + " after " + std::to_string(trace.evaluations) + " evaluations");
    } else {
      man.put("solve_status", "trivial");
    }
    man.put_list("q", S.q);
    res.solution = S;

    stage = "verify";
    if (N > 0 && pc.verify_factor > 0) {
      const auto chk = verify_solution(cfg, S, pc.verify_factor, popt);
      man.put("verify_h", chk.fine_h);
      man.put_list("verify_F_fine", chk.F_fine);
      man.put("verify_max_abs_F_fine", chk.max_abs_F_fine);
      note("max |F| on h/" + std::to_string(pc.verify_factor) + " = " + detail::fmt_double(chk.max_abs_F_fine));
    }

    stage = "build";
    const auto field = solve_dirichlet(cfg, S, popt.solver);
    const auto forms = build_forms(field);
    man.put("pde_residual", field.residual_norm);
    man.put("newton_iterations", field.newton_iterations);
    {
      std::ofstream os(artifact("periods.csv"), std::ios::binary);
      os << "i,q,F,handle_size,half_loop_check,quadrature_noise\n";
    }
    if (N > 0) {
      const auto rep = periods_from_forms(forms, popt);
      write_periods_csv(rep, (out / "periods.csv").string());
      man.put_list("F", rep.F);
      man.put_list("quadrature_noise", rep.quadrature_noise);
      man.put_list("handle_size", rep.handle_sizes);
    }
    BuildOptions bopt;
    bopt.loop_m = pc.loop_m;
    bopt.tol_F = pc.tol_F;
    bopt.mesh_tol = pc.mesh_tol;
    res.piece = build_fundamental_piece(forms, bopt);
    const auto emb = embeddedness_probe(res.piece);
    double planarity = 0.0;
    for (double d : curve_planarity(res.piece)) planarity = std::max(planarity, d);
    man.put("mesh_tol", res.piece.mesh_tol);
    man.put("piece_vertices", res.piece.size());
    man.put("piece_triangles", res.piece.triangles.size());
    man.put("axis_planarity", planarity);
    man.put("axis_wobble", res.piece.axis_wobble);
    man.put("min_vertical_increment", emb.min_vertical_increment);
    man.put("positivity_violations", emb.positivity_violations);
    man.put("column_injectivity_violations", emb.column_injectivity_violations);
    man.put("close_pairs", emb.close_pairs.size());

    const auto fluxes = top_boundary_fluxes(field);
    write_flux_csv(fluxes, 0.02, artifact("diagnostics/flux.csv"));
    int flux_mismatch = 0;
    for (const auto& f : fluxes) flux_mismatch += f.tag != expected_top_tag(std::lround(f.x0));
    man.put("flux_pattern_mismatches", flux_mismatch);
    const RidgeOptions ropt;
    const auto ridges = divergence_ridges({field}, ropt);
    write_ridges_csv(ridges, ropt, artifact("diagnostics/ridges.csv"));
    man.put("ridges", ridges.size());
    const auto curv = curvature_field(forms, integrate_u(forms, {base_column(forms.grid()), 0}), 0.2);
    write_curvature_csv(curv, artifact("diagnostics/curvature.csv"));
    man.put("max_abs_K", curv.max_abs_K);
    note(std::to_string(res.piece.size()) + " vertices in the fundamental piece");

    stage = "extend";
    res.mesh = extend_by_symmetry(res.piece, pc.copies_x, pc.copies_z);
    man.put("mesh_vertices", res.mesh.size());
    man.put("mesh_triangles", res.mesh.triangles.size());
    man.put("mesh_components", connected_components(res.mesh));

    stage = "export";
    if (pc.write_obj) export_mesh(res.mesh, artifact("mesh.obj"), MeshFormat::obj);
    if (pc.write_ply) export_mesh(res.mesh, artifact("mesh.ply"), MeshFormat::ply);
    man.put("status", "ok");
    man.write(res.summary_path);
    res.artifacts.push_back("summary.txt");
    note("done");
    return res;
  } catch (const std::exception& e) {
    const auto* err = dynamic_cast<const Error*>(&e);
    res.exit_code = err ? err->exit_code() : detail::default_exit_code(stage);
    res.failed_stage = stage;
    man.put("status", "failed");
    man.put("failed_stage", stage);
    man.put("error", e.what());
    try {
      fs::create_directories(out);
      man.write(res.summary_path);
    } catch (const std::exception&) {
      res.summary_path.clear();
    }
    res.message = "stage " + stage + " failed: " + e.what();
    if (!res.summary_path.empty()) res.message += " (report: " + res.summary_path + ")";
    return res;
  }
}

/// Loads the config file and runs the pipeline. A config that cannot be read
/// or parsed gives exit code 2 and no artifacts.
inline PipelineResult run_pipeline(const std::string& config_path, std::ostream* log = nullptr) {
  PipelineConfig pc;
  try {
    pc = load_config(config_path);
  } catch (const Error& e) {
    PipelineResult res;
    res.exit_code = e.exit_code();
    res.failed_stage = "config";
    res.message = std::string("stage config failed: ") + e.what();
    return res;
  }
  return run_pipeline(pc, log);
}

}  // namespace qpsurf
