#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctest.h"
#include "slewload/run.hpp"
#include "support.hpp"

using namespace slewload;
using doctest::Contains;

namespace {

/// Scratch directory removed at the end of the test.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("slewload_run_test_" + std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << text;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

/// Rigid-mode configuration for a small bearing with one load case.
std::string rigid_config(int balls) {
  return R"({
    "bearing": {
      "mean_diameter_mm": 541.0,
      "ball_diameter_mm": 25.0,
      "raceway_radius_mm": 13.25,
      "initial_contact_angle_deg": 45.0,
      "ball_count": )" +
         std::to_string(balls) + R"(
    },
    "preload_mm": 0.01,
    "load_cases": [{"name": "nominal", "axial_force_n": 50000.0}]
  })";
}

/// Same bearing with a flexible rings section (coarse mesh to stay quick).
std::string flexible_config(int balls) {
  return R"({
    "bearing": {
      "mean_diameter_mm": 541.0,
      "ball_diameter_mm": 25.0,
      "raceway_radius_mm": 13.25,
      "initial_contact_angle_deg": 45.0,
      "ball_count": )" +
         std::to_string(balls) + R"(
    },
    "preload_mm": 0.01,
    "solver": {"mode": "flexible"},
    "rings": {
      "outer": {"section": {"centroid_radius_mm": 294.0, "radial_width_mm": 49.0,
                            "axial_height_mm": 60.0, "elements_per_ball": 3}},
      "inner": {"section": {"centroid_radius_mm": 247.0, "radial_width_mm": 49.0,
                            "axial_height_mm": 60.0, "elements_per_ball": 3}}
    },
    "load_cases": [{"name": "nominal", "axial_force_n": 50000.0}]
  })";
}

}  // namespace

TEST_SUITE("run") {

TEST_CASE("a minimal configuration parses with sane defaults") {
  const RunConfig config = RunConfig::from_text(rigid_config(16));
  CHECK(config.bearing.ball_count == 16);
  CHECK(config.bearing.mean_diameter == 541.0);
  CHECK(config.bearing.initial_contact_angle == doctest::Approx(M_PI / 4));
  CHECK(config.preload == 0.01);
  CHECK(config.solver.ring_mode == RingMode::Rigid);
  CHECK(config.solver.kinematics == Kinematics::Linearized);
  CHECK_FALSE(config.has_rings);
  REQUIRE(config.load_cases.size() == 1);
  CHECK(config.load_cases[0].name == "nominal");
  CHECK(config.load_cases[0].axial_force == 50000.0);
  CHECK(config.load_cases[0].radial_force == 0.0);

  const ErrorMap errors = config.make_errors();
  CHECK(errors.preload == 0.01);
  CHECK(errors.ball_diameter_dev.isZero(0.0));
}

TEST_CASE("configuration mistakes are rejected with a pointed message") {
  SUBCASE("broken JSON") {
    CHECK_THROWS_WITH_AS(RunConfig::from_text("{"), Contains("not valid JSON"),
                         ConfigError);
  }
  SUBCASE("unknown top-level key") {
    std::string text = rigid_config(8);
    text.insert(text.size() - 1, R"(, "bogus": 1)");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text), Contains("unknown key 'bogus'"),
                         ConfigError);
  }
  SUBCASE("missing bearing") {
    CHECK_THROWS_WITH_AS(RunConfig::from_text("{}"), Contains("missing 'bearing'"),
                         ConfigError);
  }
  SUBCASE("both contact angle forms") {
    std::string text = rigid_config(8);
    const auto pos = text.find("\"initial_contact_angle_deg\"");
    text.insert(pos, "\"initial_contact_angle_rad\": 0.7, ");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text), Contains("exactly one"),
                         ConfigError);
  }
  SUBCASE("flexible mode without rings") {
    std::string text = rigid_config(8);
    text.insert(text.size() - 1, R"(, "solver": {"mode": "flexible"})");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text),
                         Contains("flexible mode requires"), ConfigError);
  }
  SUBCASE("unknown solver mode") {
    std::string text = rigid_config(8);
    text.insert(text.size() - 1, R"(, "solver": {"mode": "floppy"})");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text),
                         Contains("'mode' must be 'rigid' or 'flexible'"), ConfigError);
  }
  SUBCASE("error files and generator together") {
    std::string text = rigid_config(8);
    text.insert(text.size() - 1,
                R"(, "errors": {"files": {"centers": "a.csv", "balls": "b.csv"},
                               "generator": {"seed": 1}})");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text),
                         Contains("either 'files' or 'generator'"), ConfigError);
  }
  SUBCASE("load case name with strange characters") {
    std::string text = rigid_config(8);
    const auto pos = text.find("nominal");
    text.replace(pos, 7, "bad name!");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text), Contains("may only use"),
                         ConfigError);
  }
  SUBCASE("duplicate load case names") {
    std::string text = rigid_config(8);
    const auto pos = text.find("[{\"name\"");
    text.insert(pos + 1, R"({"name": "nominal", "axial_force_n": 1.0}, )");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text),
                         Contains("duplicate case name 'nominal'"), ConfigError);
  }
  SUBCASE("stiffness curve grid must increase") {
    std::string text = rigid_config(8);
    text.insert(text.size() - 1,
                R"(, "stiffness_curve": {"values_mm": [0.02, 0.01]})");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text), Contains("strictly increasing"),
                         ConfigError);
  }
  SUBCASE("sweep without a generator") {
    std::string text = rigid_config(8);
    text.insert(text.size() - 1, R"(, "sweep": {"preload_mm": [0.01], "samples": 4})");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text), Contains("draws samples"),
                         ConfigError);
  }
  SUBCASE("ring bandwidth keyword") {
    std::string text = flexible_config(8);
    const auto pos = text.find("\"outer\": {");
    text.insert(pos + 10, R"("bandwidth": "wide", )");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text),
                         Contains("'bandwidth' must be 'full', 'auto'"), ConfigError);
  }
  SUBCASE("percentiles outside [0, 100]") {
    std::string text = rigid_config(8);
    text.insert(text.size() - 1,
                R"(, "errors": {"generator": {"seed": 1}},
                   "sweep": {"preload_mm": [0.01], "samples": 4,
                             "percentiles": [5.0, 101.0]})");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text), Contains("[0, 100]"),
                         ConfigError);
  }
}

TEST_CASE("error maps load from CSV files with 1-based indices") {
  TempDir dir;
  write_file(dir.file("centers.csv"),
             "ball,contact,dR_center_mm,dz_center_mm,dRc_mm\n"
             "1,2,0.001,0.002,0.0005\n"
             "3,1,-0.001,0.0,0.0\n");
  write_file(dir.file("balls.csv"),
             "ball,dDw_mm\n"
             "2,0.003\n");

  std::string text = rigid_config(8);
  text.insert(text.size() - 1, R"(, "errors": {"files": {"centers": ")" +
                                   dir.file("centers.csv") + R"(", "balls": ")" +
                                   dir.file("balls.csv") + R"("}})");
  const RunConfig config = RunConfig::from_text(text);
  const ErrorMap map = config.make_errors();

  CHECK(map.preload == 0.01);
  CHECK(map.center_radial_dev(0, 1) == 0.001);
  CHECK(map.center_axial_dev(0, 1) == 0.002);
  CHECK(map.raceway_radius_dev(0, 1) == 0.0005);
  CHECK(map.center_radial_dev(2, 0) == -0.001);
  CHECK(map.ball_diameter_dev[1] == 0.003);
  CHECK(map.ball_diameter_dev[0] == 0.0);

  SUBCASE("a missing file is a configuration error") {
    std::string broken = rigid_config(8);
    broken.insert(broken.size() - 1,
                  R"(, "errors": {"files": {"centers": "/nonexistent/c.csv",
                                            "balls": "/nonexistent/b.csv"}})");
    const RunConfig bad = RunConfig::from_text(broken);
    CHECK_THROWS_AS(bad.make_errors(), ConfigError);
    CHECK_THROWS_AS(run_validate(bad), ConfigError);
  }
}

TEST_CASE("generator configuration matches the library generator") {
  std::string text = rigid_config(16);
  text.insert(text.size() - 1, R"(, "errors": {"generator": {
      "seed": 77,
      "raceways": [{"contact": 1,
                    "center_axial": [{"order": 2, "amplitude_mm": 0.01,
                                      "phase_rad": 0.5}]}],
      "ball_diameter": {"std_mm": 0.002, "min_mm": -0.005, "max_mm": 0.005}
    }})");
  const RunConfig config = RunConfig::from_text(text);
  const ErrorMap from_config = config.make_errors();

  ErrorGeneratorSpec spec;
  spec.seed = 77;
  RacewayErrorSpec raceway;
  raceway.contact = 1;
  raceway.center_axial = {{2, 0.01, 0.5}};
  spec.raceways = {raceway};
  spec.ball_diameter = {0.002, -0.005, 0.005};
  const ErrorMap direct = generate_errors(spec, config.bearing, 0.01);

  CHECK((from_config.center_axial_dev.array() == direct.center_axial_dev.array()).all());
  CHECK((from_config.ball_diameter_dev.array() == direct.ball_diameter_dev.array()).all());
}

TEST_CASE("solve writes the idle and loaded reports") {
  TempDir dir;
  const RunConfig config = RunConfig::from_text(rigid_config(16));
  const int code = run_solve(config, dir.str(), true, false);
  CHECK(code == 0);

  for (const char* name :
       {"idle_solution.json", "idle_balls.csv", "solution.json", "balls.csv"}) {
    CHECK(std::filesystem::exists(dir.path / name));
  }

  const nlohmann::json idle = nlohmann::json::parse(read_file(dir.file("idle_solution.json")));
  CHECK(idle["phase"] == "idle");
  CHECK(idle["converged"] == true);
  CHECK(idle["mode"] == "rigid");
  CHECK(idle["active_diagonals"] == 32);

  const nlohmann::json sol = nlohmann::json::parse(read_file(dir.file("solution.json")));
  CHECK(sol["phase"] == "loaded");
  CHECK(sol["converged"] == true);
  CHECK(sol["kinematics"] == "linearized");
  CHECK(sol["loads"]["axial_force_n"] == 50000.0);
  CHECK(sol["pose"]["delta_a_mm"].get<double>() > 0.0);
  CHECK(sol["equilibrium"]["axial_defect_n"].get<double>() < 1e-3);
  CHECK(sol["equilibrium"]["radial_defect_n"].get<double>() < 1e-3);
  CHECK(sol["ball_summary"]["max_force_n"].get<double>() > 0.0);

  const auto balls = lines_of(read_file(dir.file("balls.csv")));
  REQUIRE(balls.size() == 1 + 2 * 16);
  CHECK(balls[0] == "ball,phi_rad,diag,delta_tot_mm,delta_i_mm,delta_i2_mm,Q_N,alpha_rad");

  SUBCASE("idle-only mode reports the assembly state as the solution") {
    TempDir idle_dir;
    CHECK(run_solve(config, idle_dir.str(), false, false) == 0);
    const nlohmann::json only =
        nlohmann::json::parse(read_file(idle_dir.file("solution.json")));
    CHECK(only["phase"] == "idle");
  }
}

TEST_CASE("multiple load cases get name-prefixed reports") {
  TempDir dir;
  std::string text = rigid_config(12);
  const auto pos = text.find("[{\"name\"");
  text.insert(pos + 1,
              R"({"name": "tilt", "axial_force_n": 10000.0,
                  "tilting_moment_nmm": 2.0e6}, )");
  const RunConfig config = RunConfig::from_text(text);
  CHECK(run_solve(config, dir.str(), true, false) == 0);

  CHECK(std::filesystem::exists(dir.path / "tilt_solution.json"));
  CHECK(std::filesystem::exists(dir.path / "tilt_balls.csv"));
  CHECK(std::filesystem::exists(dir.path / "nominal_solution.json"));
  CHECK_FALSE(std::filesystem::exists(dir.path / "solution.json"));

  const nlohmann::json tilt =
      nlohmann::json::parse(read_file(dir.file("tilt_solution.json")));
  CHECK(tilt["loads"]["name"] == "tilt");
  CHECK(tilt["loads"]["tilting_moment_nmm"] == 2.0e6);
}

TEST_CASE("repeated runs produce byte-identical reports") {
  TempDir first, second;
  const RunConfig config = RunConfig::from_text(flexible_config(8));
  REQUIRE(run_solve(config, first.str(), true, false) == 0);
  REQUIRE(run_solve(config, second.str(), true, false) == 0);

  for (const char* name : {"solution.json", "balls.csv", "idle_balls.csv"}) {
    CHECK(read_file(first.file(name)) == read_file(second.file(name)));
  }
}

TEST_CASE("a solve that cannot converge reports exit code 2") {
  TempDir dir;
  std::string text = rigid_config(12);
  text.insert(text.size() - 1, R"(, "solver": {"max_iterations": 1})");
  const RunConfig config = RunConfig::from_text(text);

  CHECK(run_solve(config, dir.str(), true, false) == 2);
  // keep_going finishes the run, still writes the reports, and returns 0.
  TempDir kept;
  CHECK(run_solve(config, kept.str(), true, true) == 0);
  CHECK(std::filesystem::exists(kept.path / "solution.json"));
  const nlohmann::json sol = nlohmann::json::parse(read_file(kept.file("solution.json")));
  CHECK(sol["converged"] == false);
}

TEST_CASE("the stiffness curve subcommand writes a monotone curve") {
  TempDir dir;
  std::string text = rigid_config(12);
  text.insert(text.size() - 1,
              R"(, "stiffness_curve": {"start_mm": 0.005, "stop_mm": 0.025, "count": 5})");
  const RunConfig config = RunConfig::from_text(text);
  REQUIRE(config.curve_grid.size() == 5);
  CHECK(config.curve_grid.front() == 0.005);
  CHECK(config.curve_grid.back() == 0.025);

  CHECK(run_stiffness_curve(config, dir.str()) == 0);
  const auto lines = lines_of(read_file(dir.file("curve.csv")));
  REQUIRE(lines.size() == 6);
  CHECK(lines[0] == "delta_a_mm,F_a_N,k_N_per_mm");
  double previous_force = -1.0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream row(lines[i]);
    std::string delta, force, stiffness;
    REQUIRE(std::getline(row, delta, ','));
    REQUIRE(std::getline(row, force, ','));
    REQUIRE(std::getline(row, stiffness, ','));
    CHECK(std::stod(delta) == doctest::Approx(config.curve_grid[i - 1]));
    CHECK(std::stod(force) > previous_force);
    CHECK(std::stod(stiffness) > 0.0);
    previous_force = std::stod(force);
  }

  SUBCASE("the subcommand requires its section") {
    const RunConfig bare = RunConfig::from_text(rigid_config(12));
    CHECK_THROWS_WITH_AS(run_stiffness_curve(bare, dir.str()),
                         Contains("stiffness_curve"), ConfigError);
  }
}

TEST_CASE("ring matrices are built, saved, and loadable") {
  TempDir dir;
  const RunConfig config = RunConfig::from_text(flexible_config(8));
  CHECK(run_ring_stiffness(config, dir.str()) == 0);

  for (const char* name : {"outer_ring.k", "inner_ring.k", "ring_summary.json"}) {
    CHECK(std::filesystem::exists(dir.path / name));
  }
  const nlohmann::json summary =
      nlohmann::json::parse(read_file(dir.file("ring_summary.json")));
  CHECK(summary["outer_ring"]["balls"] == 8);
  CHECK(summary["inner_ring"]["balls"] == 8);
  CHECK(summary["outer_ring"]["min_eigenvalue"].get<double>() >
        -1e-6 * summary["outer_ring"]["max_eigenvalue"].get<double>());

  const RingStiffness outer = RingStiffness::load(dir.file("outer_ring.k"), RingSide::Outer);
  CHECK(outer.is_circulant());
  CHECK(outer.ball_count() == 8);
  CHECK(outer.side() == RingSide::Outer);

  SUBCASE("a solve can import the saved matrices") {
    std::string text = flexible_config(8);
    const std::string outer_json = R"({"matrix_file": ")" + dir.file("outer_ring.k") + R"("})";
    const std::string inner_json = R"({"matrix_file": ")" + dir.file("inner_ring.k") + R"("})";
    const auto outer_pos = text.find("\"outer\": {");
    const auto outer_end = text.find("}}", outer_pos) + 2;
    text.replace(outer_pos, outer_end - outer_pos, "\"outer\": " + outer_json);
    const auto inner_pos = text.find("\"inner\": {");
    const auto inner_end = text.find("}}", inner_pos) + 2;
    text.replace(inner_pos, inner_end - inner_pos, "\"inner\": " + inner_json);

    const RunConfig imported = RunConfig::from_text(text);
    CHECK(imported.outer_ring.from_file);
    const PreparedRings rings = prepare_rings(imported);
    REQUIRE(rings.outer.has_value());
    REQUIRE(rings.inner.has_value());
    CHECK(rings.outer->ball_count() == 8);

    // The imported matrices drive the same solution as the built ones.
    TempDir built_dir, imported_dir;
    REQUIRE(run_solve(RunConfig::from_text(flexible_config(8)), built_dir.str(), true,
                      false) == 0);
    REQUIRE(run_solve(imported, imported_dir.str(), true, false) == 0);
    CHECK(read_file(built_dir.file("balls.csv")) ==
          read_file(imported_dir.file("balls.csv")));
  }

  SUBCASE("a matrix file for the other ring is rejected") {
    std::string text = flexible_config(8);
    const std::string outer_json =
        R"({"matrix_file": ")" + dir.file("inner_ring.k") + R"("})";
    const auto outer_pos = text.find("\"outer\": {");
    const auto outer_end = text.find("}}", outer_pos) + 2;
    text.replace(outer_pos, outer_end - outer_pos, "\"outer\": " + outer_json);
    const RunConfig imported = RunConfig::from_text(text);
    CHECK_THROWS_WITH_AS(prepare_rings(imported), Contains("other ring"), ConfigError);
  }

  SUBCASE("a ball count mismatch is rejected") {
    std::string text = flexible_config(12);
    const std::string outer_json = R"({"matrix_file": ")" + dir.file("outer_ring.k") + R"("})";
    const std::string inner_json = R"({"matrix_file": ")" + dir.file("inner_ring.k") + R"("})";
    const auto outer_pos = text.find("\"outer\": {");
    const auto outer_end = text.find("}}", outer_pos) + 2;
    text.replace(outer_pos, outer_end - outer_pos, "\"outer\": " + outer_json);
    const auto inner_pos = text.find("\"inner\": {");
    const auto inner_end = text.find("}}", inner_pos) + 2;
    text.replace(inner_pos, inner_end - inner_pos, "\"inner\": " + inner_json);
    const RunConfig imported = RunConfig::from_text(text);
    CHECK_THROWS_WITH_AS(prepare_rings(imported), Contains("balls"), ConfigError);
  }
}

TEST_CASE("the sweep writes percentile bands and is thread-count invariant") {
  std::string text = rigid_config(8);
  text.insert(text.size() - 1, R"(, "errors": {"generator": {
      "seed": 11,
      "raceways": [{"contact": 1,
                    "center_axial": [{"order": 2, "amplitude_mm": 0.008}]}],
      "ball_diameter": {"std_mm": 0.002, "min_mm": -0.005, "max_mm": 0.005}
    }},
    "sweep": {"preload_mm": [0.0, 0.02], "samples": 6, "threads": 1})");
  RunConfig config = RunConfig::from_text(text);
  REQUIRE(config.sweep_samples == 6);

  TempDir serial;
  CHECK(run_sweep(config, serial.str()) == 0);
  const std::string bands = read_file(serial.file("bands.csv"));
  const auto lines = lines_of(bands);
  REQUIRE(lines.size() == 1 + 2 * 4);  // 2 preloads x 4 metrics
  CHECK(lines[0] == "preload_mm,metric,min,mean,max,p5,p50,p95");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream row(lines[i]);
    std::string preload, metric, lo, mean, hi;
    REQUIRE(std::getline(row, preload, ','));
    REQUIRE(std::getline(row, metric, ','));
    REQUIRE(std::getline(row, lo, ','));
    REQUIRE(std::getline(row, mean, ','));
    REQUIRE(std::getline(row, hi, ','));
    CHECK(std::stod(lo) <= std::stod(mean));
    CHECK(std::stod(mean) <= std::stod(hi));
  }

  config.sweep_threads = 4;
  TempDir parallel;
  CHECK(run_sweep(config, parallel.str()) == 0);
  CHECK(read_file(parallel.file("bands.csv")) == bands);
}

TEST_CASE("validate accepts a good configuration") {
  const RunConfig config = RunConfig::from_text(flexible_config(8));
  CHECK(run_validate(config) == 0);
}

}  // TEST_SUITE
