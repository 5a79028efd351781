#pragma once

namespace slewload {

// Houpert's point-contact approximation for steel (E = 2e5 MPa, nu = 0.3),
// valid for osculation ratios s in [0.89, 0.99]. Units are N and mm
// throughout; stiffnesses are N/mm^(3/2).
namespace houpert {
inline constexpr double kDeflectionCoeff = 5.046e-4;
inline constexpr double kDeflectionExponent = 0.2414;
inline constexpr double kStiffnessCoeff = 88220.0;
inline constexpr double kStiffnessExponent = 0.3621;
inline constexpr double kOsculationMin = 0.89;
inline constexpr double kOsculationMax = 0.99;
}  // namespace houpert

/// Contact deflection [mm] under normal force Q [N] for ball diameter D_w [mm]
/// and osculation ratio s. Throws std::domain_error when s is outside the
/// Houpert validity range.
double hertz_deflection(double force, double ball_diameter, double osculation);

/// Contact stiffness K [N/mm^(3/2)]. Traction-only: returns 0 when the
/// interference is not positive.
double hertz_stiffness(double ball_diameter, double osculation, double interference);

/// Series combination of the two contacts on one diagonal:
/// 1/K_tot^(2/3) = 1/K_a^(2/3) + 1/K_b^(2/3). Returns 0 when either side is open.
double series_stiffness(double stiffness_a, double stiffness_b);

/// Normal force Q = K_tot * max(delta_total, 0)^(3/2).
double contact_force(double series_k, double delta_total);

struct InterferenceSplit {
  double delta_a = 0.0;
  double delta_b = 0.0;
};

/// Splits a positive total interference between the two contacts of a diagonal
/// so that both carry the same force. Throws std::invalid_argument on
/// non-positive inputs.
InterferenceSplit split_interference(double delta_total, double stiffness_a,
                                     double stiffness_b);

// Resolved state of one diagonal spring: per-contact stiffnesses are the
// geometric constants, activity and force follow from the total interference.
struct DiagonalContactState {
  double delta_total = 0.0;
  double delta_a = 0.0;      // share of contact i
  double delta_b = 0.0;      // share of contact i+2
  double stiffness_a = 0.0;  // K^i
  double stiffness_b = 0.0;  // K^(i+2)
  double series_k = 0.0;     // K_tot of the diagonal
  double force = 0.0;        // Q
  bool active = false;
};

/// Evaluates one diagonal from its total interference and the two per-contact
/// stiffness constants. Inactive diagonals report the (negative) gap split
/// evenly and zero force.
DiagonalContactState evaluate_diagonal(double delta_total, double stiffness_a,
                                       double stiffness_b);

}  // namespace slewload
