#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "slewload/ring_stiffness.hpp"

namespace slewload {

/// Rectangular ring cross-section and the in-section positions of the two
/// raceway centers carried by this ring. Offsets are (dR, dz) from the section
/// centroid, ordered like the master blocks: outer ring contact 1 then 4,
/// inner ring contact 2 then 3. Units: mm, MPa.
struct RingSection {
  double centroid_radius = 0.0;  // [mm]
  double radial_width = 0.0;     // section dimension along R [mm]
  double axial_height = 0.0;     // section dimension along z [mm]
  double young_modulus = 2.1e5;  // [MPa]
  double poisson_ratio = 0.3;
  std::array<Eigen::Vector2d, 2> center_offsets = {Eigen::Vector2d::Zero(),
                                                   Eigen::Vector2d::Zero()};
  int elements_per_ball = 4;

  /// Throws std::invalid_argument on unusable values; returns a warning per
  /// raceway center lying outside the section envelope.
  std::vector<std::string> validate() const;

  double area() const { return radial_width * axial_height; }
  /// Bending about the bearing axis direction (in-plane ovalization).
  double in_plane_inertia() const {
    return axial_height * radial_width * radial_width * radial_width / 12.0;
  }
  /// Bending about the radial direction (out-of-plane dishing).
  double out_of_plane_inertia() const {
    return radial_width * axial_height * axial_height * axial_height / 12.0;
  }
  /// St. Venant torsion constant of the rectangle.
  double torsion_constant() const;
  double shear_modulus() const { return young_modulus / (2.0 * (1.0 + poisson_ratio)); }
};

/// Closed-ring finite element model: straight Euler-Bernoulli beam chords
/// along the centroid circle (bearing axis z, ring in the x-y plane), plus two
/// short connector beams per ball tying the raceway-center nodes to the ring.
/// All degrees of freedom are expressed in each node's cylindrical frame
/// (R, t, z and the matching rotations), which makes the assembled matrix
/// block-circulant in the ball index.
class RingModel {
 public:
  RingModel(const RingSection& section, int ball_count, RingSide side);

  const RingSection& section() const { return section_; }
  RingSide side() const { return side_; }
  int ball_count() const { return ball_count_; }
  int beam_node_count() const { return ball_count_ * section_.elements_per_ball; }
  int node_count() const { return beam_node_count() + 2 * ball_count_; }
  int dof_count() const { return 6 * node_count(); }
  int master_count() const { return 4 * ball_count_; }

  const Eigen::SparseMatrix<double>& system_matrix() const { return system_; }

  /// Global DoF indices of the masters in ball-major order
  /// [R first center, z first, R second, z second].
  std::vector<int> master_dofs() const;

  /// Static (Guyan) condensation onto the master DoF. Interior DoF are
  /// eliminated exactly through a sparse factorization; one auxiliary row pins
  /// mean tangential motion, the only rigid motion the masters cannot see, so
  /// the result keeps the remaining five rigid modes at zero energy.
  RingStiffness condense() const;

  /// Master displacements of the full model under master loads, with all six
  /// mean rigid motions pinned. Reference for validating the condensation.
  Eigen::VectorXd master_response(const Eigen::VectorXd& master_forces) const;

 private:
  RingSection section_;
  int ball_count_;
  RingSide side_;
  Eigen::SparseMatrix<double> system_;

  void assemble();
};

/// The five rigid-body motions visible in the master space (three
/// translations, two tilts), one column each, evaluated at the raceway-center
/// positions. The sixth rigid motion (rotation about the bearing axis) has no
/// master-visible component.
Eigen::MatrixXd ring_rigid_modes(const RingSection& section, int ball_count);

/// Generating blocks computed one azimuthal harmonic at a time on a single
/// ball sector with phase-shifted periodic coupling; exactly circulant by
/// construction and much cheaper than condensing the full model.
std::vector<Eigen::Matrix4d> sector_generating_blocks(const RingSection& section,
                                                      int ball_count, RingSide side);

/// Sector-route ring stiffness; bandwidth -1 keeps all blocks.
RingStiffness build_ring_stiffness(const RingSection& section, int ball_count,
                                   RingSide side, int bandwidth = -1);

}  // namespace slewload
