#include "slewload/run.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "slewload/text.hpp"

namespace slewload {

namespace {

using nlohmann::json;

[[noreturn]] void config_fail(const std::string& context, const std::string& message) {
  throw ConfigError(context + ": " + message);
}

void check_keys(const json& object, const std::string& context,
                std::initializer_list<const char*> allowed) {
  if (!object.is_object()) config_fail(context, "expected a JSON object");
  for (auto it = object.begin(); it != object.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) config_fail(context, "unknown key '" + it.key() + "'");
  }
}

const json* find(const json& object, const char* key) {
  const auto it = object.find(key);
  return it == object.end() ? nullptr : &*it;
}

double get_number(const json& object, const char* key, const std::string& context) {
  const json* value = find(object, key);
  if (value == nullptr) config_fail(context, std::string("missing '") + key + "'");
  if (!value->is_number()) config_fail(context, std::string("'") + key + "' must be a number");
  return value->get<double>();
}

double get_number_or(const json& object, const char* key, double fallback,
                     const std::string& context) {
  return find(object, key) == nullptr ? fallback : get_number(object, key, context);
}

int get_int(const json& object, const char* key, const std::string& context) {
  const json* value = find(object, key);
  if (value == nullptr) config_fail(context, std::string("missing '") + key + "'");
  if (!value->is_number_integer()) {
    config_fail(context, std::string("'") + key + "' must be an integer");
  }
  return value->get<int>();
}

int get_int_or(const json& object, const char* key, int fallback,
               const std::string& context) {
  return find(object, key) == nullptr ? fallback : get_int(object, key, context);
}

std::string get_string(const json& object, const char* key, const std::string& context) {
  const json* value = find(object, key);
  if (value == nullptr) config_fail(context, std::string("missing '") + key + "'");
  if (!value->is_string()) config_fail(context, std::string("'") + key + "' must be a string");
  return value->get<std::string>();
}

BearingGeometry parse_bearing(const json& j) {
  const std::string ctx = "bearing";
  check_keys(j, ctx,
             {"mean_diameter_mm", "ball_diameter_mm", "raceway_radius_mm",
              "initial_contact_angle_deg", "initial_contact_angle_rad", "ball_count",
              "first_ball_azimuth_rad"});
  BearingGeometry g;
  g.mean_diameter = get_number(j, "mean_diameter_mm", ctx);
  g.ball_diameter_nominal = get_number(j, "ball_diameter_mm", ctx);
  g.ball_count = get_int(j, "ball_count", ctx);
  g.first_ball_azimuth = get_number_or(j, "first_ball_azimuth_rad", 0.0, ctx);

  const json* radius = find(j, "raceway_radius_mm");
  if (radius == nullptr) config_fail(ctx, "missing 'raceway_radius_mm'");
  if (radius->is_number()) {
    g.raceway_radius.fill(radius->get<double>());
  } else if (radius->is_array() && radius->size() == 4) {
    for (int i = 0; i < 4; ++i) {
      if (!(*radius)[i].is_number()) {
        config_fail(ctx, "'raceway_radius_mm' entries must be numbers");
      }
      g.raceway_radius[i] = (*radius)[i].get<double>();
    }
  } else {
    config_fail(ctx, "'raceway_radius_mm' must be a number or an array of 4 numbers");
  }

  const bool has_deg = find(j, "initial_contact_angle_deg") != nullptr;
  const bool has_rad = find(j, "initial_contact_angle_rad") != nullptr;
  if (has_deg == has_rad) {
    config_fail(ctx, "give exactly one of 'initial_contact_angle_deg' or '_rad'");
  }
  g.initial_contact_angle = has_deg
                                ? get_number(j, "initial_contact_angle_deg", ctx) * M_PI / 180.0
                                : get_number(j, "initial_contact_angle_rad", ctx);

  try {
    g.validate();
  } catch (const std::exception& e) {
    config_fail(ctx, e.what());
  }
  return g;
}

std::vector<HarmonicTerm> parse_harmonics(const json& j, const std::string& context) {
  if (!j.is_array()) config_fail(context, "expected an array of harmonic terms");
  std::vector<HarmonicTerm> terms;
  for (const json& entry : j) {
    check_keys(entry, context, {"order", "amplitude_mm", "phase_rad"});
    HarmonicTerm term;
    term.order = get_int(entry, "order", context);
    term.amplitude = get_number(entry, "amplitude_mm", context);
    term.phase = get_number_or(entry, "phase_rad", 0.0, context);
    if (term.order < 0) config_fail(context, "harmonic order must be non-negative");
    terms.push_back(term);
  }
  return terms;
}

void parse_errors(const json& j, RunConfig& config) {
  const std::string ctx = "errors";
  check_keys(j, ctx, {"files", "generator"});
  const json* files = find(j, "files");
  const json* generator = find(j, "generator");
  if (files != nullptr && generator != nullptr) {
    config_fail(ctx, "give either 'files' or 'generator', not both");
  }
  if (files != nullptr) {
    check_keys(*files, ctx + ".files", {"centers", "balls"});
    config.errors_from_files = true;
    config.centers_file = get_string(*files, "centers", ctx + ".files");
    config.balls_file = get_string(*files, "balls", ctx + ".files");
  }
  if (generator != nullptr) {
    const std::string gctx = ctx + ".generator";
    check_keys(*generator, gctx, {"seed", "raceways", "ball_diameter"});
    config.has_generator = true;
    config.generator.seed =
        static_cast<std::uint64_t>(get_int_or(*generator, "seed", 0, gctx));
    if (const json* raceways = find(*generator, "raceways")) {
      if (!raceways->is_array()) config_fail(gctx, "'raceways' must be an array");
      for (const json& entry : *raceways) {
        const std::string rctx = gctx + ".raceways";
        check_keys(entry, rctx, {"contact", "center_radial", "center_axial", "raceway_radius"});
        RacewayErrorSpec spec;
        spec.contact = get_int(entry, "contact", rctx);
        if (const json* h = find(entry, "center_radial")) {
          spec.center_radial = parse_harmonics(*h, rctx + ".center_radial");
        }
        if (const json* h = find(entry, "center_axial")) {
          spec.center_axial = parse_harmonics(*h, rctx + ".center_axial");
        }
        if (const json* h = find(entry, "raceway_radius")) {
          spec.raceway_radius = parse_harmonics(*h, rctx + ".raceway_radius");
        }
        config.generator.raceways.push_back(std::move(spec));
      }
    }
    if (const json* balls = find(*generator, "ball_diameter")) {
      const std::string bctx = gctx + ".ball_diameter";
      check_keys(*balls, bctx, {"std_mm", "min_mm", "max_mm"});
      config.generator.ball_diameter.standard_deviation = get_number(*balls, "std_mm", bctx);
      config.generator.ball_diameter.min = get_number(*balls, "min_mm", bctx);
      config.generator.ball_diameter.max = get_number(*balls, "max_mm", bctx);
    }
  }
}

int parse_bandwidth(const json& j, const std::string& context) {
  const json* value = find(j, "bandwidth");
  if (value == nullptr) return -1;
  if (value->is_string()) {
    const std::string text = value->get<std::string>();
    if (text == "full") return -1;
    if (text == "auto") return -2;
    config_fail(context, "'bandwidth' must be 'full', 'auto' or a non-negative integer");
  }
  if (!value->is_number_integer() || value->get<int>() < 0) {
    config_fail(context, "'bandwidth' must be 'full', 'auto' or a non-negative integer");
  }
  return value->get<int>();
}

RingBuildConfig parse_ring(const json& j, const std::string& context,
                           const BearingGeometry& bearing, RingSide side) {
  check_keys(j, context, {"matrix_file", "section", "center_offsets_mm", "bandwidth"});
  RingBuildConfig rc;
  rc.bandwidth = parse_bandwidth(j, context);

  if (const json* file = find(j, "matrix_file")) {
    if (!file->is_string()) config_fail(context, "'matrix_file' must be a string");
    if (find(j, "section") != nullptr || find(j, "center_offsets_mm") != nullptr) {
      config_fail(context, "'matrix_file' excludes 'section' and 'center_offsets_mm'");
    }
    rc.from_file = true;
    rc.matrix_file = file->get<std::string>();
    return rc;
  }

  const json* section = find(j, "section");
  if (section == nullptr) config_fail(context, "missing 'section' (or 'matrix_file')");
  const std::string sctx = context + ".section";
  check_keys(*section, sctx,
             {"centroid_radius_mm", "radial_width_mm", "axial_height_mm",
              "young_modulus_mpa", "poisson_ratio", "elements_per_ball"});
  rc.section.centroid_radius = get_number(*section, "centroid_radius_mm", sctx);
  rc.section.radial_width = get_number(*section, "radial_width_mm", sctx);
  rc.section.axial_height = get_number(*section, "axial_height_mm", sctx);
  rc.section.young_modulus = get_number_or(*section, "young_modulus_mpa", 2.1e5, sctx);
  rc.section.poisson_ratio = get_number_or(*section, "poisson_ratio", 0.3, sctx);
  rc.section.elements_per_ball = get_int_or(*section, "elements_per_ball", 4, sctx);

  if (const json* offsets = find(j, "center_offsets_mm")) {
    if (!offsets->is_array() || offsets->size() != 2 || !(*offsets)[0].is_array() ||
        !(*offsets)[1].is_array() || (*offsets)[0].size() != 2 || (*offsets)[1].size() != 2) {
      config_fail(context, "'center_offsets_mm' must be [[dR, dz], [dR, dz]]");
    }
    for (int m = 0; m < 2; ++m) {
      for (int c = 0; c < 2; ++c) {
        if (!(*offsets)[m][c].is_number()) {
          config_fail(context, "'center_offsets_mm' entries must be numbers");
        }
      }
      rc.section.center_offsets[m] =
          Eigen::Vector2d((*offsets)[m][0].get<double>(), (*offsets)[m][1].get<double>());
    }
    rc.has_explicit_offsets = true;
  } else {
    // Default: raceway centers at their nominal positions relative to the
    // section centroid sitting on the bearing mid-plane.
    const int first = side == RingSide::Outer ? 1 : 2;
    const int second = side == RingSide::Outer ? 4 : 3;
    const Eigen::Vector2d centroid(rc.section.centroid_radius, 0.0);
    rc.section.center_offsets[0] = bearing.nominal_center(first) - centroid;
    rc.section.center_offsets[1] = bearing.nominal_center(second) - centroid;
  }

  try {
    rc.section.validate();
  } catch (const std::exception& e) {
    config_fail(context, e.what());
  }
  return rc;
}

SolverConfig parse_solver(const json* j) {
  SolverConfig sc;
  if (j == nullptr) return sc;
  const std::string ctx = "solver";
  check_keys(*j, ctx,
             {"mode", "kinematics", "gradient_tolerance_n", "step_tolerance_mm",
              "max_iterations", "history", "max_step_mm"});
  if (const json* mode = find(*j, "mode")) {
    const std::string text = mode->get<std::string>();
    if (text == "rigid") {
      sc.ring_mode = RingMode::Rigid;
    } else if (text == "flexible") {
      sc.ring_mode = RingMode::Flexible;
    } else {
      config_fail(ctx, "'mode' must be 'rigid' or 'flexible'");
    }
  }
  if (const json* kin = find(*j, "kinematics")) {
    const std::string text = kin->get<std::string>();
    if (text == "linearized") {
      sc.kinematics = Kinematics::Linearized;
    } else if (text == "exact") {
      sc.kinematics = Kinematics::Exact;
    } else {
      config_fail(ctx, "'kinematics' must be 'linearized' or 'exact'");
    }
  }
  sc.gradient_tolerance = get_number_or(*j, "gradient_tolerance_n", sc.gradient_tolerance, ctx);
  sc.step_tolerance = get_number_or(*j, "step_tolerance_mm", sc.step_tolerance, ctx);
  sc.max_iterations = get_int_or(*j, "max_iterations", sc.max_iterations, ctx);
  sc.history = get_int_or(*j, "history", sc.history, ctx);
  sc.max_step = get_number_or(*j, "max_step_mm", sc.max_step, ctx);
  if (!(sc.gradient_tolerance > 0.0) || !(sc.step_tolerance > 0.0) ||
      sc.max_iterations < 1 || sc.history < 1 || !(sc.max_step > 0.0)) {
    config_fail(ctx, "tolerances, history and iteration limits must be positive");
  }
  return sc;
}

std::string sanitize_case_name(const std::string& name, const std::string& context) {
  if (name.empty()) config_fail(context, "load case names must not be empty");
  for (const char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) {
      config_fail(context, "load case name '" + name +
                               "' may only use letters, digits, '_' and '-'");
    }
  }
  return name;
}

std::vector<LoadCase> parse_load_cases(const json* j) {
  std::vector<LoadCase> cases;
  if (j == nullptr) return cases;
  if (!j->is_array()) config_fail("load_cases", "expected an array");
  int index = 1;
  for (const json& entry : *j) {
    const std::string ctx = "load_cases[" + std::to_string(index - 1) + "]";
    check_keys(entry, ctx,
               {"name", "axial_force_n", "radial_force_n", "tilting_moment_nmm",
                "radial_azimuth_rad", "radial_azimuth_deg"});
    LoadCase lc;
    lc.name = find(entry, "name") != nullptr ? get_string(entry, "name", ctx)
                                             : "case" + std::to_string(index);
    sanitize_case_name(lc.name, ctx);
    lc.axial_force = get_number_or(entry, "axial_force_n", 0.0, ctx);
    lc.radial_force = get_number_or(entry, "radial_force_n", 0.0, ctx);
    lc.tilting_moment = get_number_or(entry, "tilting_moment_nmm", 0.0, ctx);
    const bool has_deg = find(entry, "radial_azimuth_deg") != nullptr;
    const bool has_rad = find(entry, "radial_azimuth_rad") != nullptr;
    if (has_deg && has_rad) config_fail(ctx, "give only one radial azimuth");
    lc.radial_azimuth = has_deg ? get_number(entry, "radial_azimuth_deg", ctx) * M_PI / 180.0
                                : get_number_or(entry, "radial_azimuth_rad", 0.0, ctx);
    cases.push_back(std::move(lc));
    ++index;
  }
  for (std::size_t i = 0; i < cases.size(); ++i) {
    for (std::size_t k = i + 1; k < cases.size(); ++k) {
      if (cases[i].name == cases[k].name) {
        config_fail("load_cases", "duplicate case name '" + cases[i].name + "'");
      }
    }
  }
  return cases;
}

std::vector<double> parse_curve(const json* j) {
  std::vector<double> grid;
  if (j == nullptr) return grid;
  const std::string ctx = "stiffness_curve";
  check_keys(*j, ctx, {"values_mm", "start_mm", "stop_mm", "count"});
  if (const json* values = find(*j, "values_mm")) {
    if (find(*j, "start_mm") != nullptr || find(*j, "stop_mm") != nullptr ||
        find(*j, "count") != nullptr) {
      config_fail(ctx, "'values_mm' excludes the start/stop/count form");
    }
    if (!values->is_array() || values->size() < 2) {
      config_fail(ctx, "'values_mm' must be an array of at least 2 numbers");
    }
    for (const json& v : *values) {
      if (!v.is_number()) config_fail(ctx, "'values_mm' entries must be numbers");
      grid.push_back(v.get<double>());
    }
  } else {
    const double start = get_number(*j, "start_mm", ctx);
    const double stop = get_number(*j, "stop_mm", ctx);
    const int count = get_int(*j, "count", ctx);
    if (count < 2) config_fail(ctx, "'count' must be at least 2");
    if (!(stop > start)) config_fail(ctx, "'stop_mm' must exceed 'start_mm'");
    grid.resize(count);
    for (int i = 0; i < count; ++i) {
      grid[i] = start + (stop - start) * i / (count - 1);
    }
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) config_fail(ctx, "grid must be strictly increasing");
  }
  return grid;
}

void parse_sweep(const json* j, RunConfig& config) {
  if (j == nullptr) return;
  const std::string ctx = "sweep";
  check_keys(*j, ctx,
             {"preload_mm", "samples", "threads", "stiffness_delta_a_mm", "percentiles"});
  const json* preloads = find(*j, "preload_mm");
  if (preloads == nullptr || !preloads->is_array() || preloads->empty()) {
    config_fail(ctx, "'preload_mm' must be a non-empty array");
  }
  for (const json& v : *preloads) {
    if (!v.is_number()) config_fail(ctx, "'preload_mm' entries must be numbers");
    config.sweep_preloads.push_back(v.get<double>());
  }
  config.sweep_samples = get_int(*j, "samples", ctx);
  if (config.sweep_samples < 2) config_fail(ctx, "'samples' must be at least 2");
  config.sweep_threads = get_int_or(*j, "threads", 0, ctx);
  if (config.sweep_threads < 0) config_fail(ctx, "'threads' must be non-negative");
  config.sweep_stiffness_delta = get_number_or(*j, "stiffness_delta_a_mm", 0.05, ctx);
  if (!(config.sweep_stiffness_delta > 0.0)) {
    config_fail(ctx, "'stiffness_delta_a_mm' must be positive");
  }
  if (const json* percentiles = find(*j, "percentiles")) {
    if (!percentiles->is_array() || percentiles->empty()) {
      config_fail(ctx, "'percentiles' must be a non-empty array");
    }
    config.sweep_percentiles.clear();
    for (const json& v : *percentiles) {
      if (!v.is_number()) config_fail(ctx, "'percentiles' entries must be numbers");
      const double p = v.get<double>();
      if (p < 0.0 || p > 100.0) config_fail(ctx, "percentiles must lie in [0, 100]");
      if (!config.sweep_percentiles.empty() && p <= config.sweep_percentiles.back()) {
        config_fail(ctx, "percentiles must be strictly increasing");
      }
      config.sweep_percentiles.push_back(p);
    }
  }
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  check_keys(root, "configuration",
             {"bearing", "preload_mm", "errors", "rings", "solver", "load_cases",
              "stiffness_curve", "sweep"});

  RunConfig config;
  const json* bearing = find(root, "bearing");
  if (bearing == nullptr) config_fail("configuration", "missing 'bearing'");
  config.bearing = parse_bearing(*bearing);
  config.preload = get_number_or(root, "preload_mm", 0.0, "configuration");
  if (!std::isfinite(config.preload)) config_fail("configuration", "preload must be finite");

  if (const json* errors = find(root, "errors")) parse_errors(*errors, config);
  config.solver = parse_solver(find(root, "solver"));

  if (const json* rings = find(root, "rings")) {
    check_keys(*rings, "rings", {"outer", "inner"});
    const json* outer = find(*rings, "outer");
    const json* inner = find(*rings, "inner");
    if (outer == nullptr || inner == nullptr) {
      config_fail("rings", "both 'outer' and 'inner' are required");
    }
    config.has_rings = true;
    config.outer_ring = parse_ring(*outer, "rings.outer", config.bearing, RingSide::Outer);
    config.inner_ring = parse_ring(*inner, "rings.inner", config.bearing, RingSide::Inner);
  }
  if (config.solver.ring_mode == RingMode::Flexible && !config.has_rings) {
    config_fail("configuration", "flexible mode requires a 'rings' section");
  }

  config.load_cases = parse_load_cases(find(root, "load_cases"));
  config.curve_grid = parse_curve(find(root, "stiffness_curve"));
  parse_sweep(find(root, "sweep"), config);
  if (!config.sweep_preloads.empty() && !config.has_generator) {
    config_fail("sweep", "the sweep draws samples from 'errors.generator'");
  }
  return config;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_text(buffer.str());
}

ErrorMap RunConfig::make_errors() const {
  try {
    if (errors_from_files) {
      return load_error_map_files(centers_file, balls_file, bearing.ball_count, preload);
    }
    if (has_generator) {
      return generate_errors(generator, bearing, preload);
    }
  } catch (const std::exception& e) {
    throw ConfigError(std::string("error map: ") + e.what());
  }
  ErrorMap map = ErrorMap::zero(bearing.ball_count);
  map.preload = preload;
  return map;
}

namespace {

struct BuiltRing {
  RingStiffness matrix;
  std::vector<std::string> warnings;
};

BuiltRing build_or_load_ring(const RingBuildConfig& rc, RingSide side, int ball_count) {
  BuiltRing result;
  const std::string label = std::string(ring_side_name(side)) + " ring";
  if (rc.from_file) {
    try {
      result.matrix = RingStiffness::load(rc.matrix_file, side);
    } catch (const std::exception& e) {
      throw ConfigError(label + ": " + e.what());
    }
    if (result.matrix.side() != side) {
      throw ConfigError(label + ": file '" + rc.matrix_file +
                        "' belongs to the other ring");
    }
    if (result.matrix.ball_count() != ball_count) {
      throw ConfigError(label + ": file has " + std::to_string(result.matrix.ball_count()) +
                        " balls, the bearing has " + std::to_string(ball_count));
    }
    if (result.matrix.is_circulant()) {
      if (rc.bandwidth == -2) {
        result.matrix = result.matrix.truncated(result.matrix.suggest_bandwidth());
      } else if (rc.bandwidth >= 0) {
        result.matrix = result.matrix.truncated(rc.bandwidth);
      }
    }
  } else {
    result.warnings = rc.section.validate();
    result.matrix = build_ring_stiffness(rc.section, ball_count, side, -1);
    if (rc.bandwidth == -2) {
      result.matrix = result.matrix.truncated(result.matrix.suggest_bandwidth());
    } else if (rc.bandwidth >= 0) {
      result.matrix = result.matrix.truncated(rc.bandwidth);
    }
  }
  for (std::string& w : result.warnings) w = label + ": " + w;

  const RingStiffness::Spectrum spectrum = result.matrix.spectrum();
  const double scale = std::max(std::abs(spectrum.max_eigenvalue), 1.0);
  if (spectrum.min_eigenvalue < -1e-6 * scale) {
    std::ostringstream msg;
    msg << label << ": stiffness is not positive semidefinite (min eigenvalue "
        << spectrum.min_eigenvalue << ")";
    throw ConfigError(msg.str());
  }
  if (spectrum.min_eigenvalue < -1e-9 * scale) {
    std::ostringstream msg;
    msg << label << ": smallest eigenvalue " << spectrum.min_eigenvalue
        << " is slightly negative; treating as rigid-mode roundoff";
    result.warnings.push_back(msg.str());
  }
  return result;
}

}  // namespace

PreparedRings prepare_rings(const RunConfig& config) {
  PreparedRings out;
  if (config.solver.ring_mode != RingMode::Flexible) return out;
  if (!config.has_rings) {
    throw ConfigError("flexible mode requires the 'rings' section");
  }
  auto outer_task = std::async(std::launch::async, build_or_load_ring, config.outer_ring,
                               RingSide::Outer, config.bearing.ball_count);
  BuiltRing inner = build_or_load_ring(config.inner_ring, RingSide::Inner,
                                       config.bearing.ball_count);
  BuiltRing outer = outer_task.get();
  out.outer = std::move(outer.matrix);
  out.inner = std::move(inner.matrix);
  out.warnings = std::move(outer.warnings);
  out.warnings.insert(out.warnings.end(), inner.warnings.begin(), inner.warnings.end());
  return out;
}

namespace {

const char* phase_name(SolvePhase phase) {
  switch (phase) {
    case SolvePhase::Idle: return "idle";
    case SolvePhase::Loaded: return "loaded";
    case SolvePhase::Imposed: return "imposed";
  }
  return "unknown";
}

json pose_to_json(const RigidBodyPose& pose) {
  json j;
  j["x_mm"] = pose.x;
  j["y_mm"] = pose.y;
  j["z_mm"] = pose.z;
  j["alpha_rad"] = pose.alpha;
  j["beta_rad"] = pose.beta;
  j["delta_a_mm"] = pose.delta_a;
  j["delta_r_mm"] = pose.delta_r;
  j["theta_t_rad"] = pose.theta_t;
  j["phi_r_rad"] = pose.phi_r;
  return j;
}

}  // namespace

void write_solution_json(const std::string& path, const Solution& solution,
                         const RunConfig& config) {
  json j;
  j["phase"] = phase_name(solution.phase);
  j["mode"] = config.solver.ring_mode == RingMode::Flexible ? "flexible" : "rigid";
  j["kinematics"] =
      config.solver.kinematics == Kinematics::Exact ? "exact" : "linearized";
  j["converged"] = solution.converged;
  j["iterations"] = solution.iterations;
  j["gradient_norm_n"] = solution.gradient_norm;
  j["pose"] = pose_to_json(solution.pose);
  j["energy"] = {{"total_nmm", solution.total_energy},
                 {"contact_nmm", solution.contact_energy},
                 {"ring_nmm", solution.ring_energy},
                 {"load_work_nmm", solution.load_work}};
  j["active_diagonals"] = solution.active_diagonals;
  j["active_balls"] = solution.active_balls;

  json equilibrium;
  equilibrium["axial_reaction_n"] = solution.reactions[0];
  equilibrium["radial_reaction_n"] = solution.reactions[1];
  equilibrium["moment_reaction_nmm"] = solution.reactions[2];
  if (solution.phase == SolvePhase::Loaded) {
    j["loads"] = {{"name", solution.loads.name},
                  {"axial_force_n", solution.loads.axial_force},
                  {"radial_force_n", solution.loads.radial_force},
                  {"tilting_moment_nmm", solution.loads.tilting_moment},
                  {"radial_azimuth_rad", solution.loads.radial_azimuth}};
    equilibrium["axial_defect_n"] =
        std::abs(solution.reactions[0] - solution.loads.axial_force);
    equilibrium["radial_defect_n"] =
        std::abs(solution.reactions[1] - solution.loads.radial_force);
    equilibrium["moment_defect_nmm"] =
        std::abs(solution.reactions[2] - solution.loads.tilting_moment);
  }
  j["equilibrium"] = equilibrium;

  double max_force = 0.0, max_interference = 0.0, min_interference = 0.0, mean = 0.0;
  bool first = true;
  for (const BallDiagonalRecord& rec : solution.diagonals) {
    max_force = std::max(max_force, rec.force);
    if (first) {
      max_interference = min_interference = rec.interference;
      first = false;
    } else {
      max_interference = std::max(max_interference, rec.interference);
      min_interference = std::min(min_interference, rec.interference);
    }
    mean += rec.interference;
  }
  if (!solution.diagonals.empty()) mean /= static_cast<double>(solution.diagonals.size());
  j["ball_summary"] = {{"max_force_n", max_force},
                       {"max_interference_mm", max_interference},
                       {"min_interference_mm", min_interference},
                       {"mean_interference_mm", mean}};

  if (solution.d_out.size() != 0) {
    j["ring_displacements"] = {
        {"outer", std::vector<double>(solution.d_out.data(),
                                      solution.d_out.data() + solution.d_out.size())},
        {"inner", std::vector<double>(solution.d_in.data(),
                                      solution.d_in.data() + solution.d_in.size())}};
  }
  j["warnings"] = solution.warnings;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

void write_balls_csv(const std::string& path, const Solution& solution) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "ball,phi_rad,diag,delta_tot_mm,delta_i_mm,delta_i2_mm,Q_N,alpha_rad\n";
  for (const BallDiagonalRecord& rec : solution.diagonals) {
    out << (rec.ball + 1) << ',' << format_double(rec.azimuth) << ',' << rec.diagonal
        << ',' << format_double(rec.interference) << ','
        << format_double(rec.first_deflection) << ','
        << format_double(rec.second_deflection) << ',' << format_double(rec.force) << ','
        << format_double(rec.contact_angle) << '\n';
  }
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

void write_curve_csv(const std::string& path,
                     const std::vector<StiffnessCurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "delta_a_mm,F_a_N,k_N_per_mm\n";
  for (const StiffnessCurvePoint& point : curve) {
    out << format_double(point.delta_a) << ',' << format_double(point.axial_force) << ','
        << format_double(point.stiffness) << '\n';
  }
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

namespace {

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
}

std::filesystem::path prepare_out_dir(const std::string& out_dir) {
  const std::filesystem::path dir(out_dir.empty() ? "." : out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Checks that the reactions match the applied loads; appends a warning and
/// reports failure when the defect exceeds ten times the gradient tolerance.
bool check_equilibrium(Solution& solution, const RunConfig& config) {
  if (solution.phase != SolvePhase::Loaded) return true;
  const double tol =
      10.0 * std::max(config.solver.gradient_tolerance, solution.tolerance_used);
  const double moment_tol = tol * config.bearing.pitch_radius();
  const double axial = std::abs(solution.reactions[0] - solution.loads.axial_force);
  const double radial = std::abs(solution.reactions[1] - solution.loads.radial_force);
  const double moment = std::abs(solution.reactions[2] - solution.loads.tilting_moment);
  if (axial <= tol && radial <= tol && moment <= moment_tol) return true;
  std::ostringstream msg;
  msg << "equilibrium defect exceeds tolerance: axial " << axial << " N, radial "
      << radial << " N, moment " << moment << " N mm";
  solution.warnings.push_back(msg.str());
  return false;
}

}  // namespace

int run_solve(const RunConfig& config, const std::string& out_dir, bool loaded_phase,
              bool keep_going) {
  const std::filesystem::path dir = prepare_out_dir(out_dir);
  const ErrorMap errors = config.make_errors();
  print_warnings(errors.validate(config.bearing));
  PreparedRings rings = prepare_rings(config);
  print_warnings(rings.warnings);
  const RingStiffness* outer = rings.outer ? &*rings.outer : nullptr;
  const RingStiffness* inner = rings.inner ? &*rings.inner : nullptr;

  bool all_converged = true;

  Solution idle = solve_idle(config.bearing, errors, config.solver, outer, inner);
  print_warnings(idle.warnings);
  write_solution_json((dir / "idle_solution.json").string(), idle, config);
  write_balls_csv((dir / "idle_balls.csv").string(), idle);
  std::cout << "idle: " << (idle.converged ? "converged" : "NOT converged") << " in "
            << idle.iterations << " iterations, " << idle.active_diagonals
            << " active diagonals\n";
  if (!idle.converged) {
    all_converged = false;
    if (!keep_going) return 2;
  }

  if (!loaded_phase) {
    write_solution_json((dir / "solution.json").string(), idle, config);
    write_balls_csv((dir / "balls.csv").string(), idle);
    return all_converged || keep_going ? 0 : 2;
  }

  if (config.load_cases.empty()) {
    throw ConfigError("the load phase needs at least one entry in 'load_cases'");
  }
  const bool single = config.load_cases.size() == 1;
  for (const LoadCase& lc : config.load_cases) {
    Solution sol = solve_loaded(config.bearing, errors, idle, lc, config.solver, outer, inner);
    const bool balanced = check_equilibrium(sol, config);
    print_warnings(sol.warnings);
    const std::string prefix = single ? "" : lc.name + "_";
    write_solution_json((dir / (prefix + "solution.json")).string(), sol, config);
    write_balls_csv((dir / (prefix + "balls.csv")).string(), sol);
    std::cout << "case " << lc.name << ": "
              << (sol.converged ? "converged" : "NOT converged") << " in "
              << sol.iterations << " iterations, " << sol.active_balls
              << " active balls\n";
    if (!sol.converged || !balanced) {
      all_converged = false;
      if (!keep_going) return 2;
    }
  }
  return all_converged || keep_going ? 0 : 2;
}

int run_ring_stiffness(const RunConfig& config, const std::string& out_dir) {
  if (!config.has_rings) {
    throw ConfigError("ring-stiffness needs the 'rings' section");
  }
  const std::filesystem::path dir = prepare_out_dir(out_dir);
  auto outer_task = std::async(std::launch::async, build_or_load_ring, config.outer_ring,
                               RingSide::Outer, config.bearing.ball_count);
  BuiltRing inner = build_or_load_ring(config.inner_ring, RingSide::Inner,
                                       config.bearing.ball_count);
  BuiltRing outer = outer_task.get();
  print_warnings(outer.warnings);
  print_warnings(inner.warnings);

  json summary;
  for (const BuiltRing* built : {&outer, &inner}) {
    const RingStiffness& K = built->matrix;
    const std::string name = std::string(ring_side_name(K.side())) + "_ring";
    const std::string file = (dir / (name + ".k")).string();
    K.save(file);
    const RingStiffness::Spectrum spectrum = K.spectrum();
    summary[name] = {{"file", file},
                     {"balls", K.ball_count()},
                     {"bandwidth", K.bandwidth()},
                     {"suggested_bandwidth", K.suggest_bandwidth()},
                     {"min_eigenvalue", spectrum.min_eigenvalue},
                     {"max_eigenvalue", spectrum.max_eigenvalue}};
    std::cout << name << ": " << K.ball_count() << " balls, bandwidth " << K.bandwidth()
              << " (suggested " << K.suggest_bandwidth() << "), written to " << file
              << '\n';
  }
  std::ofstream out(dir / "ring_summary.json");
  out << summary.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed while writing the ring summary");
  return 0;
}

int run_stiffness_curve(const RunConfig& config, const std::string& out_dir) {
  if (config.curve_grid.empty()) {
    throw ConfigError("stiffness-curve needs the 'stiffness_curve' section");
  }
  const std::filesystem::path dir = prepare_out_dir(out_dir);
  const ErrorMap errors = config.make_errors();
  print_warnings(errors.validate(config.bearing));
  PreparedRings rings = prepare_rings(config);
  print_warnings(rings.warnings);
  const RingStiffness* outer = rings.outer ? &*rings.outer : nullptr;
  const RingStiffness* inner = rings.inner ? &*rings.inner : nullptr;

  Solution idle = solve_idle(config.bearing, errors, config.solver, outer, inner);
  print_warnings(idle.warnings);
  if (!idle.converged) {
    std::cerr << "idle solve did not converge\n";
    return 2;
  }
  std::vector<StiffnessCurvePoint> curve;
  try {
    curve = axial_stiffness_curve(config.bearing, errors, idle, config.curve_grid,
                                  config.solver, outer, inner);
  } catch (const std::runtime_error& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
  write_curve_csv((dir / "curve.csv").string(), curve);
  std::cout << "stiffness curve with " << curve.size() << " points written\n";
  return 0;
}

namespace {

struct SweepMetrics {
  double mean_interference = 0.0;
  double max_interference = 0.0;
  double max_force = 0.0;
  double axial_stiffness = 0.0;
};

struct SweepStats {
  double min = 0.0, mean = 0.0, max = 0.0;
  std::vector<double> percentiles;
};

SweepStats summarize(std::vector<double> values, const std::vector<double>& percentiles) {
  SweepStats stats;
  const std::size_t n = values.size();
  stats.min = values[0];
  stats.max = values[0];
  for (const double v : values) {
    stats.min = std::min(stats.min, v);
    stats.max = std::max(stats.max, v);
    stats.mean += v;
  }
  stats.mean /= static_cast<double>(n);
  std::sort(values.begin(), values.end());
  for (const double p : percentiles) {
    const double rank = p / 100.0 * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double t = rank - static_cast<double>(lo);
    stats.percentiles.push_back(values[lo] + t * (values[hi] - values[lo]));
  }
  return stats;
}

}  // namespace

int run_sweep(const RunConfig& config, const std::string& out_dir) {
  if (!config.has_generator) {
    throw ConfigError("sweep needs 'errors.generator' to draw samples from");
  }
  if (config.sweep_preloads.empty()) {
    throw ConfigError("sweep needs the 'sweep' section");
  }
  const std::filesystem::path dir = prepare_out_dir(out_dir);
  PreparedRings rings = prepare_rings(config);
  print_warnings(rings.warnings);
  const RingStiffness* outer = rings.outer ? &*rings.outer : nullptr;
  const RingStiffness* inner = rings.inner ? &*rings.inner : nullptr;

  const int samples = config.sweep_samples;
  const std::size_t grid = config.sweep_preloads.size();
  std::vector<std::vector<SweepMetrics>> results(grid,
                                                 std::vector<SweepMetrics>(samples));
  std::vector<std::string> failures(samples);

  auto worker_body = [&](int sample) {
    ErrorGeneratorSpec spec = config.generator;
    spec.seed = derive_seed(config.generator.seed, static_cast<std::uint64_t>(sample));
    for (std::size_t ip = 0; ip < grid; ++ip) {
      const ErrorMap errors =
          generate_errors(spec, config.bearing, config.sweep_preloads[ip]);
      const Solution idle =
          solve_idle(config.bearing, errors, config.solver, outer, inner);
      if (!idle.converged) {
        throw std::runtime_error("idle solve did not converge");
      }
      SweepMetrics& m = results[ip][sample];
      bool first = true;
      for (const BallDiagonalRecord& rec : idle.diagonals) {
        m.mean_interference += rec.interference;
        m.max_interference = first ? rec.interference
                                   : std::max(m.max_interference, rec.interference);
        m.max_force = std::max(m.max_force, rec.force);
        first = false;
      }
      m.mean_interference /= static_cast<double>(idle.diagonals.size());

      const double d = config.sweep_stiffness_delta;
      const double h = std::max(1e-4, 0.05 * d);
      const std::vector<double> stiffness_grid{d - h, d, d + h};
      const auto curve = axial_stiffness_curve(config.bearing, errors, idle,
                                               stiffness_grid, config.solver, outer, inner);
      m.axial_stiffness = curve[1].stiffness;
    }
  };

  const int hardware = static_cast<int>(std::thread::hardware_concurrency());
  const int threads = std::min(samples, config.sweep_threads > 0 ? config.sweep_threads
                                                                 : std::max(hardware, 1));
  std::atomic<int> next_sample{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const int sample = next_sample.fetch_add(1);
        if (sample >= samples) return;
        try {
          worker_body(sample);
        } catch (const std::exception& e) {
          failures[sample] = e.what();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (int s = 0; s < samples; ++s) {
    if (!failures[s].empty()) {
      std::cerr << "sample " << s << ": " << failures[s] << '\n';
      return 2;
    }
  }

  std::ofstream out(dir / "bands.csv");
  if (!out) throw std::runtime_error("cannot open bands.csv for writing");
  out << "preload_mm,metric,min,mean,max";
  for (const double p : config.sweep_percentiles) {
    const double rounded = std::round(p);
    out << ",p" << (rounded == p ? std::to_string(static_cast<long long>(rounded))
                                 : format_double(p));
  }
  out << '\n';

  const char* metric_names[4] = {"mean_interference_mm", "max_interference_mm",
                                 "max_force_n", "axial_stiffness_n_per_mm"};
  for (std::size_t ip = 0; ip < grid; ++ip) {
    for (int metric = 0; metric < 4; ++metric) {
      std::vector<double> values(samples);
      for (int s = 0; s < samples; ++s) {
        const SweepMetrics& m = results[ip][s];
        values[s] = metric == 0   ? m.mean_interference
                    : metric == 1 ? m.max_interference
                    : metric == 2 ? m.max_force
                                  : m.axial_stiffness;
      }
      const SweepStats stats = summarize(std::move(values), config.sweep_percentiles);
      out << format_double(config.sweep_preloads[ip]) << ',' << metric_names[metric]
          << ',' << format_double(stats.min) << ',' << format_double(stats.mean) << ','
          << format_double(stats.max);
      for (const double p : stats.percentiles) out << ',' << format_double(p);
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed while writing bands.csv");
  std::cout << "sweep: " << samples << " samples over " << grid
            << " preload values written to bands.csv\n";
  return 0;
}

int run_validate(const RunConfig& config) {
  try {
    const ErrorMap errors = config.make_errors();
    print_warnings(errors.validate(config.bearing));
    if (config.has_rings) {
      for (const RingBuildConfig* rc : {&config.outer_ring, &config.inner_ring}) {
        const RingSide side =
            rc == &config.outer_ring ? RingSide::Outer : RingSide::Inner;
        if (rc->from_file) {
          build_or_load_ring(*rc, side, config.bearing.ball_count);
        } else {
          print_warnings(rc->section.validate());
        }
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  std::cout << "configuration OK\n";
  return 0;
}

}  // namespace slewload
