#pragma once

#include <stdexcept>
#include <string>

namespace qpsurf {

/// Pipeline stage that raised an error. The numeric value doubles as the
/// CLI exit code.
enum class Stage : int {
  config = 2,
  admissibility = 3,
  solver = 4,
  periods = 5,
  mesh = 6,
};

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::config: return "config";
    case Stage::admissibility: return "admissibility";
    case Stage::solver: return "solver";
    case Stage::periods: return "periods";
    case Stage::mesh: return "mesh";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Stage stage, const std::string& what) : std::runtime_error(what), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }
  int exit_code() const noexcept { return static_cast<int>(stage_); }

 private:
  Stage stage_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(Stage::config, w) {}
};
struct AdmissibilityError : Error {
  explicit AdmissibilityError(const std::string& w) : Error(Stage::admissibility, w) {}
};
struct SolverError : Error {
  SolverError(const std::string& w, double last_residual = -1.0)
      : Error(Stage::solver, w), last_residual(last_residual) {}
  double last_residual;
};
/// A quadrature point reached |grad v| >= 1.
struct LightlikeError : SolverError {
  explicit LightlikeError(const std::string& w) : SolverError(w) {}
};
struct PeriodError : Error {
  explicit PeriodError(const std::string& w) : Error(Stage::periods, w) {}
};
struct MeshError : Error {
  explicit MeshError(const std::string& w) : Error(Stage::mesh, w) {}
};

}  // namespace qpsurf
