#pragma once

#include <array>
#include <cmath>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace slewload {

// Contacts are numbered 1..4. Contacts 1 and 4 run on the outer ring, 2 and 3
// on the inner ring. Diagonal 1 links contacts 1-3, diagonal 2 links 2-4; each
// diagonal acts as one traction-only series spring between raceway centers.
inline constexpr int kContactCount = 4;
inline constexpr int kDiagonalCount = 2;

constexpr int diagonal_first_contact(int diagonal) { return diagonal; }
constexpr int diagonal_second_contact(int diagonal) { return diagonal + 2; }
constexpr bool contact_on_outer_ring(int contact) { return contact == 1 || contact == 4; }

// Slot of a contact's raceway center inside its ring's 4-per-ball master
// block: [R first, z first, R second, z second]. First center is contact 1
// (outer) / contact 2 (inner), second is contact 4 / contact 3.
constexpr int contact_master_slot(int contact) {
  return (contact == 1 || contact == 2) ? 0 : 2;
}
constexpr int master_index(int ball, int slot) { return 4 * ball + slot; }

struct BearingGeometry {
  double mean_diameter = 0.0;                // [mm]
  double ball_diameter_nominal = 0.0;        // D_w nominal [mm]
  std::array<double, 4> raceway_radius{};    // R_C per contact 1..4 [mm]
  double initial_contact_angle = 0.0;        // [rad]
  int ball_count = 0;                        // B
  double first_ball_azimuth = 0.0;           // [rad]

  /// Throws std::invalid_argument when dimensions or osculation ratios are
  /// outside the validity range of the contact law.
  void validate() const;

  double pitch_radius() const { return 0.5 * mean_diameter; }

  /// Osculation ratio s^i = D_w / (2 R_C^i) with the nominal ball.
  double osculation(int contact) const {
    return ball_diameter_nominal / (2.0 * raceway_radius[contact - 1]);
  }

  /// Azimuth of ball b (0-based).
  double ball_azimuth(int ball) const {
    return first_ball_azimuth + 2.0 * M_PI * ball / ball_count;
  }

  /// Unit vector from ball center towards contact point i in the (R, z) plane.
  Eigen::Vector2d contact_direction(int contact) const;

  /// Nominal raceway-center position (R, z) for contact i; centers sit on the
  /// contact diagonal at distance R_C^i - D_w/2 behind the ball center, which
  /// reproduces zero interference for the error-free, preload-free bearing.
  Eigen::Vector2d nominal_center(int contact) const;
};

struct ErrorMap {
  int ball_count = 0;
  double preload = 0.0;                 // delta_p [mm]
  Eigen::MatrixXd center_radial_dev;    // B x 4, dR_Oini [mm]
  Eigen::MatrixXd center_axial_dev;     // B x 4, dz_Oini [mm]
  Eigen::MatrixXd raceway_radius_dev;   // B x 4, dR_C [mm]
  Eigen::VectorXd ball_diameter_dev;    // B, dD_w [mm]

  static ErrorMap zero(int ball_count);

  /// Ball diameter including deviation and preload: D_w^b = D_w + dD_w^b + delta_p.
  double ball_diameter(const BearingGeometry& geom, int ball) const {
    return geom.ball_diameter_nominal + ball_diameter_dev[ball] + preload;
  }
  double raceway_radius(const BearingGeometry& geom, int ball, int contact) const {
    return geom.raceway_radius[contact - 1] + raceway_radius_dev(ball, contact - 1);
  }
  double osculation(const BearingGeometry& geom, int ball, int contact) const {
    return ball_diameter(geom, ball) / (2.0 * raceway_radius(geom, ball, contact));
  }

  /// Checks finiteness and the positive-ball-diameter invariant (throws), and
  /// returns a warning per deviation larger than 0.5 mm.
  std::vector<std::string> validate(const BearingGeometry& geom) const;
};

// ErrorMap ingestion. Column names are part of the contract:
//   centers CSV: ball,contact,dR_center_mm,dz_center_mm,dRc_mm
//   balls CSV:   ball,dDw_mm
// Ball and contact indices in the files are 1-based. Rows may cover any
// subset; absent entries stay zero. Preload comes from the run configuration.
ErrorMap load_error_map(std::istream& centers_csv, std::istream& balls_csv,
                        int ball_count, double preload);
ErrorMap load_error_map_files(const std::string& centers_path,
                              const std::string& balls_path, int ball_count,
                              double preload);

// Relative position of the inner ring w.r.t. the outer ring: assembly pose
// (X_D, Y_D, Z_D, alpha, beta) plus the external-load displacements
// (delta_a, delta_r, theta_t) along the fixed load direction phi_r.
struct RigidBodyPose {
  double x = 0.0;        // X_D [mm]
  double y = 0.0;        // Y_D [mm]
  double z = 0.0;        // Z_D [mm]
  double alpha = 0.0;    // [rad]
  double beta = 0.0;     // [rad]
  double delta_a = 0.0;  // [mm]
  double delta_r = 0.0;  // [mm]
  double theta_t = 0.0;  // [rad]
  double phi_r = 0.0;    // load direction [rad], fixed, never an unknown

  // Total rotations combining assembly misalignment and tilting.
  double alpha_eff() const { return alpha - theta_t * std::sin(phi_r); }
  double beta_eff() const { return beta + theta_t * std::cos(phi_r); }
};

// Raceway-center coordinates for every ball and contact. The azimuth is
// constant per ball; radial and axial coordinates evolve with pose and ring
// deformation.
struct CenterPositions {
  std::array<Eigen::VectorXd, 4> radial;  // [contact-1][ball]
  std::array<Eigen::VectorXd, 4> axial;
  Eigen::VectorXd azimuth;                // [ball]

  int ball_count() const { return static_cast<int>(azimuth.size()); }
};

enum class Kinematics { Linearized, Exact };

/// Initial raceway-center positions: nominal construction plus measured
/// deviations; azimuths phi_O^b = first_ball_azimuth + 2 pi b / B.
CenterPositions initial_centers(const BearingGeometry& geom, const ErrorMap& errors);

/// Deformed centers in idling conditions. Outer-ring centers (contacts 1, 4)
/// move with the elastic displacements only; inner-ring centers (2, 3) add the
/// rigid-body pose. d_out/d_in are the 4B master displacement vectors in
/// ball-major [R, z, R, z] order; pass empty spans for rigid rings.
CenterPositions deformed_centers_idle(const CenterPositions& init,
                                      const RigidBodyPose& pose,
                                      std::span<const double> d_out,
                                      std::span<const double> d_in,
                                      Kinematics kinematics = Kinematics::Linearized);

/// Deformed centers under external-load displacements (delta_a, delta_r,
/// theta_t). Exact mode keeps the trigonometric form; linearized mode assumes
/// small displacements.
CenterPositions deformed_centers_loaded(const CenterPositions& init,
                                        const RigidBodyPose& pose,
                                        std::span<const double> d_out,
                                        std::span<const double> d_in,
                                        Kinematics kinematics = Kinematics::Linearized);

/// Natural length of the diagonal spring: l_N = R_C^i + R_C^(i+2) - D_w^b with
/// per-ball raceway radius deviations and ball diameter (incl. preload).
/// Throws std::domain_error("degenerate conformity") when not positive.
double natural_length(const BearingGeometry& geom, const ErrorMap& errors,
                      int ball, int diagonal);

/// Distance between the two raceway centers of a diagonal.
double spring_length(const CenterPositions& centers, int ball, int diagonal);

/// delta_tot = l - l_N; negative values are gaps and are preserved.
inline double total_interference(double length, double natural_len) {
  return length - natural_len;
}

/// Inclination of the center-to-center line in the (R, z) half-plane.
/// Throws std::domain_error when the centers coincide.
double contact_angle(const CenterPositions& centers, int ball, int diagonal);

}  // namespace slewload
