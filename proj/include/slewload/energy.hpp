#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "slewload/contact.hpp"
#include "slewload/geometry.hpp"
#include "slewload/ring_stiffness.hpp"

namespace slewload {

enum class RingMode { Rigid, Flexible };

/// What is being solved for. Idle finds the assembly pose under preload and
/// manufacturing errors alone; Loaded keeps that pose frozen and finds the
/// load displacements (delta_a, delta_r, theta_t) under external loads;
/// Imposed prescribes the load displacements and only relaxes the rings.
enum class SolvePhase { Idle, Loaded, Imposed };

struct LoadCase {
  std::string name = "case";
  double axial_force = 0.0;     // F_a [N]
  double radial_force = 0.0;    // F_r [N]
  double tilting_moment = 0.0;  // M_t [N mm]
  double radial_azimuth = 0.0;  // phi_r [rad]
};

struct ImposedDisplacements {
  double delta_a = 0.0;  // [mm]
  double delta_r = 0.0;  // [mm]
  double theta_t = 0.0;  // [rad]
  double phi_r = 0.0;    // [rad]
};

/// Packing of the minimization state vector. Rotational unknowns are scaled
/// by the pitch radius so every entry is a length and the problem stays well
/// conditioned. Elastic ring displacements follow the pose block, outer ring
/// first, each 4 entries per ball.
struct StateLayout {
  SolvePhase phase = SolvePhase::Idle;
  RingMode ring_mode = RingMode::Rigid;
  int ball_count = 0;
  double rotation_scale = 1.0;  // [mm]

  int pose_dim() const {
    switch (phase) {
      case SolvePhase::Idle: return 5;    // X, Y, Z, alpha*Lr, beta*Lr
      case SolvePhase::Loaded: return 3;  // delta_a, delta_r, theta_t*Lr
      case SolvePhase::Imposed: return 0;
    }
    return 0;
  }
  int elastic_dim() const { return ring_mode == RingMode::Flexible ? 8 * ball_count : 0; }
  int size() const { return pose_dim() + elastic_dim(); }
  int outer_offset() const { return pose_dim(); }
  int inner_offset() const { return pose_dim() + 4 * ball_count; }
};

/// Total potential energy of the bearing and its exact gradient:
///   U = sum over diagonals of (2/5) K_tot max(delta_tot, 0)^(5/2)
///     + 0.5 D_out' K_out D_out + 0.5 D_in' K_in D_in
///     - (F_a delta_a + F_r delta_r + M_t theta_t)
/// The function is convex, and gaps simply contribute nothing, so a plain
/// descent method finds the unique load distribution.
class EnergyModel {
 public:
  /// Ring matrices may be null in rigid mode and must match the ball count in
  /// flexible mode. Throws on inconsistent input or osculation ratios outside
  /// the contact-law range.
  EnergyModel(const BearingGeometry& geometry, const ErrorMap& errors, RingMode mode,
              Kinematics kinematics, const RingStiffness* outer_stiffness,
              const RingStiffness* inner_stiffness);

  void set_phase_idle();
  void set_phase_loaded(const RigidBodyPose& idle_pose, const LoadCase& loads);
  void set_phase_imposed(const RigidBodyPose& idle_pose,
                         const ImposedDisplacements& imposed);

  const StateLayout& layout() const { return layout_; }
  const BearingGeometry& geometry() const { return geometry_; }
  const LoadCase& loads() const { return loads_; }
  Kinematics kinematics() const { return kinematics_; }

  struct Evaluation {
    double total = 0.0;
    double contact = 0.0;
    double ring = 0.0;
    double load_work = 0.0;  // F_a delta_a + F_r delta_r + M_t theta_t
    Eigen::VectorXd gradient;
    int active_diagonals = 0;
  };
  Evaluation evaluate(const Eigen::VectorXd& state) const;
  double energy(const Eigen::VectorXd& state) const;

  /// Full pose encoded by a state (frozen idle part included).
  RigidBodyPose pose_at(const Eigen::VectorXd& state) const;
  CenterPositions centers_at(const Eigen::VectorXd& state) const;

  /// Per-diagonal contact state, 2 entries per ball ordered
  /// [ball 0 diagonal 1, ball 0 diagonal 2, ball 1 diagonal 1, ...].
  std::vector<DiagonalContactState> diagonal_states(const Eigen::VectorXd& state) const;

  /// Derivatives of the internal energy with respect to (delta_a, delta_r,
  /// theta_t): the forces the bearing reacts with, equal to the applied loads
  /// at a loaded equilibrium and available in any phase.
  Eigen::Vector3d reaction_forces(const Eigen::VectorXd& state) const;

  double natural_len(int ball, int diagonal) const {
    return natural_length_[2 * ball + diagonal - 1];
  }
  double series_k(int ball, int diagonal) const {
    return series_stiffness_[2 * ball + diagonal - 1];
  }
  double contact_k(int ball, int contact) const {
    return contact_stiffness_[4 * ball + contact - 1];
  }

  /// Removes the rigid-body components (three translations, two tilts of the
  /// whole ring) from the elastic blocks of a state, in place. The pose
  /// unknowns carry rigid motion and the elastic unknowns carry pure
  /// deformation; this gauge makes the split unique, keeps the loaded energy
  /// bounded below, and is applied internally to every evaluation, so a state
  /// and its projection give identical energies. No-op in rigid mode.
  void remove_rigid_content(Eigen::VectorXd& state) const;

 private:
  BearingGeometry geometry_;
  ErrorMap errors_;
  Kinematics kinematics_;
  StateLayout layout_;
  const RingStiffness* outer_;
  const RingStiffness* inner_;

  RigidBodyPose frozen_pose_;  // idle pose used by Loaded/Imposed phases
  LoadCase loads_;
  ImposedDisplacements imposed_;

  CenterPositions initial_;
  std::vector<double> natural_length_;    // [2B]
  std::vector<double> contact_stiffness_; // [4B]
  std::vector<double> series_stiffness_;  // [2B]

  // Master-visible rigid modes per ring (4B x 5) and the inverses of their
  // Gram matrices, backing remove_rigid_content.
  Eigen::MatrixXd rigid_basis_[2];
  Eigen::MatrixXd rigid_gram_inv_[2];

  void project_ring(Eigen::Ref<Eigen::VectorXd> d, int ring) const;

  struct Unpacked;
  Unpacked unpack(const Eigen::VectorXd& state) const;
  Evaluation evaluate_impl(const Eigen::VectorXd& state, bool with_gradient,
                           Eigen::Vector3d* reactions) const;
};

}  // namespace slewload
