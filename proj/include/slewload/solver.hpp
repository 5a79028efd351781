#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "slewload/energy.hpp"

namespace slewload {

struct SolverConfig {
  double gradient_tolerance = 1e-4;  // [N], infinity norm of the energy gradient
  double step_tolerance = 1e-10;     // [mm], stall detection: a step this small
                                     // that also fails to lower the energy
                                     // beyond its roundoff noise ends the solve
  int max_iterations = 500;
  int history = 12;                  // quasi-Newton memory
  double armijo_slope = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
  double max_step = 1.0;             // [mm], cap on the infinity norm of one step
  RingMode ring_mode = RingMode::Rigid;
  Kinematics kinematics = Kinematics::Linearized;
};

struct BallDiagonalRecord {
  int ball = 0;      // 0-based
  int diagonal = 1;  // 1 or 2
  double azimuth = 0.0;
  double interference = 0.0;       // delta_tot, negative = gap [mm]
  double first_deflection = 0.0;   // contact 1 or 2 [mm]
  double second_deflection = 0.0;  // contact 3 or 4 [mm]
  double force = 0.0;              // [N]
  double contact_angle = 0.0;      // [rad]
  bool active = false;
};

struct Solution {
  SolvePhase phase = SolvePhase::Idle;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  double step_norm = 0.0;
  /// Effective gradient tolerance of this solve: the configured value or the
  /// double-precision noise floor of the energy, whichever is larger.
  double tolerance_used = 0.0;

  RigidBodyPose pose;
  Eigen::VectorXd d_out;  // empty in rigid mode
  Eigen::VectorXd d_in;

  double total_energy = 0.0;
  double contact_energy = 0.0;
  double ring_energy = 0.0;
  double load_work = 0.0;
  Eigen::Vector3d reactions = Eigen::Vector3d::Zero();  // along delta_a, delta_r, theta_t
  LoadCase loads;

  std::vector<BallDiagonalRecord> diagonals;  // 2 per ball
  int active_diagonals = 0;
  int active_balls = 0;
  std::vector<std::string> warnings;
};

/// Assembly equilibrium under preload and manufacturing errors, no external
/// load: finds the inner-ring pose (and ring deformations in flexible mode)
/// minimizing the total energy.
Solution solve_idle(const BearingGeometry& geometry, const ErrorMap& errors,
                    const SolverConfig& config, const RingStiffness* outer = nullptr,
                    const RingStiffness* inner = nullptr);

/// Load equilibrium: keeps the idle pose frozen and minimizes over the load
/// displacements (delta_a, delta_r, theta_t), plus ring deformations in
/// flexible mode, warm-started from the idle solution.
Solution solve_loaded(const BearingGeometry& geometry, const ErrorMap& errors,
                      const Solution& idle, const LoadCase& loads,
                      const SolverConfig& config, const RingStiffness* outer = nullptr,
                      const RingStiffness* inner = nullptr);

/// Prescribed load displacements: only the rings relax (nothing at all in
/// rigid mode); the reaction forces report what external load would hold the
/// bearing there.
Solution solve_imposed(const BearingGeometry& geometry, const ErrorMap& errors,
                       const Solution& idle, const ImposedDisplacements& imposed,
                       const SolverConfig& config, const RingStiffness* outer = nullptr,
                       const RingStiffness* inner = nullptr);

struct StiffnessCurvePoint {
  double delta_a = 0.0;     // [mm]
  double axial_force = 0.0; // [N]
  double stiffness = 0.0;   // dF/d(delta_a) [N/mm], central differences on the grid
};

/// Axial force-displacement curve over a strictly increasing grid of imposed
/// delta_a values, warm-starting each point from the previous one. The
/// stiffness column is differentiated from the curve itself (one-sided at the
/// ends).
std::vector<StiffnessCurvePoint> axial_stiffness_curve(
    const BearingGeometry& geometry, const ErrorMap& errors, const Solution& idle,
    const std::vector<double>& delta_a_grid, const SolverConfig& config,
    const RingStiffness* outer = nullptr, const RingStiffness* inner = nullptr);

}  // namespace slewload
