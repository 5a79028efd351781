#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "slewload/error_gen.hpp"
#include "slewload/ring_model.hpp"
#include "slewload/solver.hpp"

namespace slewload {

/// Configuration or input-file problems; the command line maps this to its
/// own exit code, distinct from solver failures.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RingBuildConfig {
  bool from_file = false;
  std::string matrix_file;
  RingSection section;
  bool has_explicit_offsets = false;
  int bandwidth = -1;  // -1 keeps all blocks, -2 auto-selects by block norm decay
};

/// One JSON document drives every subcommand; unknown keys are rejected so
/// typos fail loudly. See README.md for the schema.
struct RunConfig {
  BearingGeometry bearing;
  double preload = 0.0;  // [mm]

  bool errors_from_files = false;
  std::string centers_file;
  std::string balls_file;
  bool has_generator = false;
  ErrorGeneratorSpec generator;

  bool has_rings = false;
  RingBuildConfig outer_ring;
  RingBuildConfig inner_ring;

  SolverConfig solver;
  std::vector<LoadCase> load_cases;

  std::vector<double> curve_grid;  // imposed delta_a values [mm]

  std::vector<double> sweep_preloads;  // [mm]
  int sweep_samples = 0;
  int sweep_threads = 0;  // 0 = hardware concurrency
  double sweep_stiffness_delta = 0.05;  // [mm] reference point for the stiffness metric
  std::vector<double> sweep_percentiles{5.0, 50.0, 95.0};

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);

  /// Error map from files, the generator, or all zeros, always carrying the
  /// configured preload.
  ErrorMap make_errors() const;
};

struct PreparedRings {
  std::optional<RingStiffness> outer;
  std::optional<RingStiffness> inner;
  std::vector<std::string> warnings;
};

/// Builds (or imports) both ring matrices when the solver mode needs them;
/// the two internal builds run concurrently.
PreparedRings prepare_rings(const RunConfig& config);

// Subcommand drivers. Return a process exit code: 0 success, 2 when a solve
// fails to converge (suppressed by keep_going, which finishes the run and
// reports success). Configuration problems throw ConfigError instead.
int run_solve(const RunConfig& config, const std::string& out_dir, bool loaded_phase,
              bool keep_going);
int run_ring_stiffness(const RunConfig& config, const std::string& out_dir);
int run_stiffness_curve(const RunConfig& config, const std::string& out_dir);
int run_sweep(const RunConfig& config, const std::string& out_dir);
/// Deep-checks the configuration including referenced files; throws
/// ConfigError on any problem.
int run_validate(const RunConfig& config);

// Report writers, shared with the tests. All numeric output uses shortest
// round-trip formatting, so identical inputs give byte-identical files.
void write_solution_json(const std::string& path, const Solution& solution,
                         const RunConfig& config);
void write_balls_csv(const std::string& path, const Solution& solution);
void write_curve_csv(const std::string& path,
                     const std::vector<StiffnessCurvePoint>& curve);

}  // namespace slewload
