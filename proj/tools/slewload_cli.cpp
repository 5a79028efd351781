#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "slewload/run.hpp"

namespace {

slewload::RunConfig load_config(const std::string& path) {
  return slewload::RunConfig::from_file(path);
}

void apply_mode_override(slewload::RunConfig& config, bool rigid, bool flexible) {
  if (rigid) config.solver.ring_mode = slewload::RingMode::Rigid;
  if (flexible) {
    config.solver.ring_mode = slewload::RingMode::Flexible;
    if (!config.has_rings) {
      throw slewload::ConfigError("--flexible requires a 'rings' section in the configuration");
    }
  }
}

/// Keeps only the selected load case; errors out when the name is unknown.
void select_case(slewload::RunConfig& config, const std::string& name) {
  if (name.empty()) return;
  for (const slewload::LoadCase& lc : config.load_cases) {
    if (lc.name == name) {
      config.load_cases = {lc};
      return;
    }
  }
  throw slewload::ConfigError("no load case named '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ball load distribution in four-point contact slewing bearings"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::string mode = "load";
  std::string case_name;
  bool rigid = false;
  bool flexible = false;
  bool keep_going = false;

  CLI::App* solve = app.add_subcommand(
      "solve", "Assembly and load equilibrium; writes solution.json and balls.csv");
  solve->add_option("config", config_path, "JSON configuration file")->required();
  solve->add_option("--mode", mode, "idle (assembly only) or load (default)")
      ->check(CLI::IsMember({"idle", "load"}));
  solve->add_option("--case", case_name, "run a single named load case");
  solve->add_option("--out", out_dir, "output directory (default .)");
  solve->add_flag("--rigid", rigid, "force rigid rings");
  solve->add_flag("--flexible", flexible, "force flexible rings");
  solve->add_flag("--keep-going", keep_going,
                  "finish all cases even when one fails to converge");

  CLI::App* ring = app.add_subcommand(
      "ring-stiffness", "Build the condensed ring stiffness matrices and save them");
  ring->add_option("config", config_path, "JSON configuration file")->required();
  ring->add_option("--out", out_dir, "output directory (default .)");

  CLI::App* curve = app.add_subcommand(
      "stiffness-curve", "Axial force-displacement curve; writes curve.csv");
  curve->add_option("config", config_path, "JSON configuration file")->required();
  curve->add_option("--out", out_dir, "output directory (default .)");
  curve->add_flag("--rigid", rigid, "force rigid rings");
  curve->add_flag("--flexible", flexible, "force flexible rings");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Monte Carlo tolerance sweep over preload values; writes bands.csv");
  sweep->add_option("config", config_path, "JSON configuration file")->required();
  sweep->add_option("--out", out_dir, "output directory (default .)");

  CLI::App* validate = app.add_subcommand(
      "validate-config", "Parse and deep-check a configuration, then exit");
  validate->add_option("config", config_path, "JSON configuration file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (rigid && flexible) {
      throw slewload::ConfigError("--rigid and --flexible are mutually exclusive");
    }
    slewload::RunConfig config = load_config(config_path);
    if (solve->parsed()) {
      apply_mode_override(config, rigid, flexible);
      select_case(config, case_name);
      return slewload::run_solve(config, out_dir, mode == "load", keep_going);
    }
    if (ring->parsed()) {
      return slewload::run_ring_stiffness(config, out_dir);
    }
    if (curve->parsed()) {
      apply_mode_override(config, rigid, flexible);
      return slewload::run_stiffness_curve(config, out_dir);
    }
    if (sweep->parsed()) {
      return slewload::run_sweep(config, out_dir);
    }
    return slewload::run_validate(config);
  } catch (const slewload::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
