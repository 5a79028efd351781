#include "slewload/energy.hpp"

#include <Eigen/LU>

#include <cmath>
#include <stdexcept>

namespace slewload {

EnergyModel::EnergyModel(const BearingGeometry& geometry, const ErrorMap& errors,
                         RingMode mode, Kinematics kinematics,
                         const RingStiffness* outer_stiffness,
                         const RingStiffness* inner_stiffness)
    : geometry_(geometry),
      errors_(errors),
      kinematics_(kinematics),
      outer_(outer_stiffness),
      inner_(inner_stiffness) {
  geometry_.validate();
  errors_.validate(geometry_);

  if (mode == RingMode::Flexible) {
    if (outer_ == nullptr || inner_ == nullptr) {
      throw std::invalid_argument("flexible mode needs both ring stiffness matrices");
    }
    if (outer_->ball_count() != geometry_.ball_count ||
        inner_->ball_count() != geometry_.ball_count) {
      throw std::invalid_argument("ring stiffness ball count does not match the bearing");
    }
    if (outer_->side() != RingSide::Outer || inner_->side() != RingSide::Inner) {
      throw std::invalid_argument("ring stiffness matrices are attached to the wrong sides");
    }
  } else {
    outer_ = nullptr;
    inner_ = nullptr;
  }

  layout_.phase = SolvePhase::Idle;
  layout_.ring_mode = mode;
  layout_.ball_count = geometry_.ball_count;
  layout_.rotation_scale = geometry_.pitch_radius();

  initial_ = initial_centers(geometry_, errors_);

  if (layout_.ring_mode == RingMode::Flexible) {
    // Rigid-body modes of one ring evaluated at its raceway-center master
    // DoF: three translations and the two tilts (rotation about the bearing
    // axis has no radial/axial component at the masters). Elastic unknowns
    // are kept orthogonal to these columns; the pose carries rigid motion.
    const int B = geometry_.ball_count;
    for (int ring = 0; ring < 2; ++ring) {
      const int first = ring == 0 ? 1 : 2;
      const int second = ring == 0 ? 4 : 3;
      Eigen::MatrixXd v = Eigen::MatrixXd::Zero(4 * B, 5);
      for (int b = 0; b < B; ++b) {
        const double phi = initial_.azimuth[b];
        const double c = std::cos(phi), s = std::sin(phi);
        for (int m = 0; m < 2; ++m) {
          const int contact = m == 0 ? first : second;
          const double rc = initial_.radial[contact - 1][b];
          const double zc = initial_.axial[contact - 1][b];
          const int row_r = 4 * b + 2 * m;
          const int row_z = row_r + 1;
          v(row_r, 0) = c;          // translation along x
          v(row_r, 1) = s;          // translation along y
          v(row_z, 2) = 1.0;        // translation along z
          v(row_r, 3) = -zc * s;    // tilt about x
          v(row_z, 3) = rc * s;
          v(row_r, 4) = zc * c;     // tilt about y
          v(row_z, 4) = -rc * c;
        }
      }
      rigid_basis_[ring] = std::move(v);
      rigid_gram_inv_[ring] =
          (rigid_basis_[ring].transpose() * rigid_basis_[ring]).inverse();
    }
  }

  const int B = geometry_.ball_count;
  natural_length_.resize(2 * B);
  series_stiffness_.resize(2 * B);
  contact_stiffness_.resize(4 * B);
  for (int b = 0; b < B; ++b) {
    const double dw = errors_.ball_diameter(geometry_, b);
    for (int contact = 1; contact <= kContactCount; ++contact) {
      // Positive sentinel interference: the constant used when a diagonal is
      // in contact. The gap test happens on the series spring instead.
      contact_stiffness_[4 * b + contact - 1] =
          hertz_stiffness(dw, errors_.osculation(geometry_, b, contact), 1.0);
    }
    for (int diag = 1; diag <= kDiagonalCount; ++diag) {
      natural_length_[2 * b + diag - 1] = natural_length(geometry_, errors_, b, diag);
      series_stiffness_[2 * b + diag - 1] =
          series_stiffness(contact_stiffness_[4 * b + diagonal_first_contact(diag) - 1],
                           contact_stiffness_[4 * b + diagonal_second_contact(diag) - 1]);
    }
  }
}

void EnergyModel::set_phase_idle() {
  layout_.phase = SolvePhase::Idle;
  loads_ = LoadCase{};
  imposed_ = ImposedDisplacements{};
}

void EnergyModel::set_phase_loaded(const RigidBodyPose& idle_pose, const LoadCase& loads) {
  layout_.phase = SolvePhase::Loaded;
  frozen_pose_ = idle_pose;
  frozen_pose_.delta_a = 0.0;
  frozen_pose_.delta_r = 0.0;
  frozen_pose_.theta_t = 0.0;
  frozen_pose_.phi_r = loads.radial_azimuth;
  loads_ = loads;
  imposed_ = ImposedDisplacements{};
}

void EnergyModel::set_phase_imposed(const RigidBodyPose& idle_pose,
                                    const ImposedDisplacements& imposed) {
  layout_.phase = SolvePhase::Imposed;
  frozen_pose_ = idle_pose;
  frozen_pose_.delta_a = imposed.delta_a;
  frozen_pose_.delta_r = imposed.delta_r;
  frozen_pose_.theta_t = imposed.theta_t;
  frozen_pose_.phi_r = imposed.phi_r;
  loads_ = LoadCase{};
  imposed_ = imposed;
}

struct EnergyModel::Unpacked {
  RigidBodyPose pose;
  Eigen::VectorXd d_out_store;  // rigid-free copies of the elastic blocks
  Eigen::VectorXd d_in_store;
  std::span<const double> d_out;
  std::span<const double> d_in;
};

EnergyModel::Unpacked EnergyModel::unpack(const Eigen::VectorXd& state) const {
  if (state.size() != layout_.size()) {
    throw std::invalid_argument("state vector size does not match the layout");
  }
  Unpacked u;
  const double scale = layout_.rotation_scale;
  switch (layout_.phase) {
    case SolvePhase::Idle:
      u.pose.x = state[0];
      u.pose.y = state[1];
      u.pose.z = state[2];
      u.pose.alpha = state[3] / scale;
      u.pose.beta = state[4] / scale;
      break;
    case SolvePhase::Loaded:
      u.pose = frozen_pose_;
      u.pose.delta_a = state[0];
      u.pose.delta_r = state[1];
      u.pose.theta_t = state[2] / scale;
      break;
    case SolvePhase::Imposed:
      u.pose = frozen_pose_;
      break;
  }
  if (layout_.ring_mode == RingMode::Flexible) {
    const int n = 4 * layout_.ball_count;
    u.d_out_store = state.segment(layout_.outer_offset(), n);
    u.d_in_store = state.segment(layout_.inner_offset(), n);
    project_ring(u.d_out_store, 0);
    project_ring(u.d_in_store, 1);
    u.d_out = {u.d_out_store.data(), static_cast<std::size_t>(n)};
    u.d_in = {u.d_in_store.data(), static_cast<std::size_t>(n)};
  }
  return u;
}

void EnergyModel::project_ring(Eigen::Ref<Eigen::VectorXd> d, int ring) const {
  const Eigen::MatrixXd& v = rigid_basis_[ring];
  d -= v * (rigid_gram_inv_[ring] * (v.transpose() * d));
}

void EnergyModel::remove_rigid_content(Eigen::VectorXd& state) const {
  if (layout_.ring_mode != RingMode::Flexible) return;
  if (state.size() != layout_.size()) {
    throw std::invalid_argument("state vector size does not match the layout");
  }
  const int n = 4 * layout_.ball_count;
  project_ring(state.segment(layout_.outer_offset(), n), 0);
  project_ring(state.segment(layout_.inner_offset(), n), 1);
}

RigidBodyPose EnergyModel::pose_at(const Eigen::VectorXd& state) const {
  return unpack(state).pose;
}

CenterPositions EnergyModel::centers_at(const Eigen::VectorXd& state) const {
  const Unpacked u = unpack(state);
  return deformed_centers_loaded(initial_, u.pose, u.d_out, u.d_in, kinematics_);
}

EnergyModel::Evaluation EnergyModel::evaluate_impl(const Eigen::VectorXd& state,
                                                   bool with_gradient,
                                                   Eigen::Vector3d* reactions) const {
  const Unpacked u = unpack(state);
  const RigidBodyPose& pose = u.pose;
  const int B = layout_.ball_count;
  const double scale = layout_.rotation_scale;
  const bool flexible = layout_.ring_mode == RingMode::Flexible;
  const bool exact = kinematics_ == Kinematics::Exact;

  Evaluation ev;
  if (with_gradient) ev.gradient = Eigen::VectorXd::Zero(layout_.size());
  if (reactions != nullptr) reactions->setZero();

  const double alpha = pose.alpha_eff();
  const double beta = pose.beta_eff();
  const double sin_a = std::sin(alpha), cos_a = std::cos(alpha);
  const double sin_b = std::sin(beta), cos_b = std::cos(beta);
  const double sin_pr = std::sin(pose.phi_r), cos_pr = std::cos(pose.phi_r);

  for (int b = 0; b < B; ++b) {
    const double phi = initial_.azimuth[b];
    const double cos_p = std::cos(phi), sin_p = std::sin(phi);

    // Current center coordinates and, for the inner ring, the chain-rule rows
    // of (R, z) against the unknowns that move the ring as a whole.
    double radial[4], axial[4];
    double dR_da[4] = {0, 0, 0, 0}, dz_da[4] = {0, 0, 0, 0};    // alpha_eff
    double dR_db[4] = {0, 0, 0, 0}, dz_db[4] = {0, 0, 0, 0};    // beta_eff
    for (int contact = 1; contact <= kContactCount; ++contact) {
      const int i = contact - 1;
      const double r0 = initial_.radial[i][b];
      const double z0 = initial_.axial[i][b];
      const std::span<const double> d = contact_on_outer_ring(contact) ? u.d_out : u.d_in;
      const int slot = contact_master_slot(contact);
      const double dr = d.empty() ? 0.0 : d[master_index(b, slot)];
      const double dz = d.empty() ? 0.0 : d[master_index(b, slot + 1)];
      if (contact_on_outer_ring(contact)) {
        radial[i] = r0 + dr;
        axial[i] = z0 + dz;
        continue;
      }
      const double radial_load = pose.delta_r * std::cos(pose.phi_r - phi);
      if (exact) {
        radial[i] = r0 * (cos_a * sin_p * sin_p + cos_b * cos_p * cos_p) +
                    (pose.x + z0 * sin_b) * cos_p + (pose.y - z0 * sin_a) * sin_p +
                    radial_load + dr;
        axial[i] = z0 * cos_a * cos_b + r0 * (sin_a * sin_p - sin_b * cos_p) + pose.z -
                   pose.delta_a + dz;
        dR_da[i] = -r0 * sin_a * sin_p * sin_p - z0 * cos_a * sin_p;
        dR_db[i] = -r0 * sin_b * cos_p * cos_p + z0 * cos_b * cos_p;
        dz_da[i] = -z0 * sin_a * cos_b + r0 * cos_a * sin_p;
        dz_db[i] = -z0 * cos_a * sin_b - r0 * cos_b * cos_p;
      } else {
        radial[i] = r0 + (pose.x + z0 * beta) * cos_p + (pose.y - z0 * alpha) * sin_p +
                    radial_load + dr;
        axial[i] = z0 + r0 * (alpha * sin_p - beta * cos_p) + pose.z - pose.delta_a + dz;
        dR_da[i] = -z0 * sin_p;
        dR_db[i] = z0 * cos_p;
        dz_da[i] = r0 * sin_p;
        dz_db[i] = -r0 * cos_p;
      }
    }

    for (int diag = 1; diag <= kDiagonalCount; ++diag) {
      const int first = diagonal_first_contact(diag);
      const int second = diagonal_second_contact(diag);
      const double dr = radial[second - 1] - radial[first - 1];
      const double dz = axial[second - 1] - axial[first - 1];
      const double length = std::hypot(dr, dz);
      const double interference = length - natural_length_[2 * b + diag - 1];
      if (!(interference > 0.0)) continue;

      const double k_tot = series_stiffness_[2 * b + diag - 1];
      const double root = std::sqrt(interference);
      ev.contact += 0.4 * k_tot * interference * interference * root;
      ++ev.active_diagonals;
      if (!with_gradient && reactions == nullptr) continue;

      const double force = k_tot * interference * root;
      const double w = force / length;
      const double g_r = w * dr;  // dU/dR of the second center; first gets -g
      const double g_z = w * dz;

      for (int side = 0; side < 2; ++side) {
        const int contact = side == 0 ? first : second;
        const double sign = side == 0 ? -1.0 : 1.0;
        const double gr = sign * g_r;
        const double gz = sign * g_z;
        const int i = contact - 1;

        if (with_gradient && flexible) {
          const int offset = contact_on_outer_ring(contact) ? layout_.outer_offset()
                                                            : layout_.inner_offset();
          const int slot = contact_master_slot(contact);
          ev.gradient[offset + master_index(b, slot)] += gr;
          ev.gradient[offset + master_index(b, slot + 1)] += gz;
        }
        if (contact_on_outer_ring(contact)) continue;

        // Pose terms only exist for inner-ring centers.
        const double dR_dtheta = dR_da[i] * (-sin_pr) + dR_db[i] * cos_pr;
        const double dz_dtheta = dz_da[i] * (-sin_pr) + dz_db[i] * cos_pr;
        if (reactions != nullptr) {
          (*reactions)[0] += gz * -1.0;                                   // delta_a
          (*reactions)[1] += gr * std::cos(pose.phi_r - phi);             // delta_r
          (*reactions)[2] += gr * dR_dtheta + gz * dz_dtheta;             // theta_t
        }
        if (!with_gradient) continue;
        switch (layout_.phase) {
          case SolvePhase::Idle:
            ev.gradient[0] += gr * cos_p;
            ev.gradient[1] += gr * sin_p;
            ev.gradient[2] += gz;
            ev.gradient[3] += (gr * dR_da[i] + gz * dz_da[i]) / scale;
            ev.gradient[4] += (gr * dR_db[i] + gz * dz_db[i]) / scale;
            break;
          case SolvePhase::Loaded:
            ev.gradient[0] += gz * -1.0;
            ev.gradient[1] += gr * std::cos(pose.phi_r - phi);
            ev.gradient[2] += (gr * dR_dtheta + gz * dz_dtheta) / scale;
            break;
          case SolvePhase::Imposed:
            break;
        }
      }
    }
  }

  if (flexible) {
    ev.ring = outer_->energy(u.d_out) + inner_->energy(u.d_in);
    if (with_gradient) {
      const int n = 4 * B;
      outer_->multiply_add(u.d_out,
                           {ev.gradient.data() + layout_.outer_offset(),
                            static_cast<std::size_t>(n)});
      inner_->multiply_add(u.d_in,
                           {ev.gradient.data() + layout_.inner_offset(),
                            static_cast<std::size_t>(n)});
      // The energy sees only the rigid-free part of the elastic blocks, so
      // the chain rule projects the elastic gradient the same way.
      project_ring(ev.gradient.segment(layout_.outer_offset(), n), 0);
      project_ring(ev.gradient.segment(layout_.inner_offset(), n), 1);
    }
  }

  if (layout_.phase == SolvePhase::Loaded) {
    ev.load_work = loads_.axial_force * pose.delta_a + loads_.radial_force * pose.delta_r +
                   loads_.tilting_moment * pose.theta_t;
    if (with_gradient) {
      ev.gradient[0] -= loads_.axial_force;
      ev.gradient[1] -= loads_.radial_force;
      ev.gradient[2] -= loads_.tilting_moment / scale;
    }
  }

  ev.total = ev.contact + ev.ring - ev.load_work;
  return ev;
}

EnergyModel::Evaluation EnergyModel::evaluate(const Eigen::VectorXd& state) const {
  return evaluate_impl(state, true, nullptr);
}

double EnergyModel::energy(const Eigen::VectorXd& state) const {
  return evaluate_impl(state, false, nullptr).total;
}

Eigen::Vector3d EnergyModel::reaction_forces(const Eigen::VectorXd& state) const {
  Eigen::Vector3d reactions;
  evaluate_impl(state, false, &reactions);
  return reactions;
}

std::vector<DiagonalContactState> EnergyModel::diagonal_states(
    const Eigen::VectorXd& state) const {
  const CenterPositions centers = centers_at(state);
  const int B = layout_.ball_count;
  std::vector<DiagonalContactState> result;
  result.reserve(2 * B);
  for (int b = 0; b < B; ++b) {
    for (int diag = 1; diag <= kDiagonalCount; ++diag) {
      const double length = spring_length(centers, b, diag);
      const double interference = length - natural_length_[2 * b + diag - 1];
      result.push_back(evaluate_diagonal(
          interference, contact_stiffness_[4 * b + diagonal_first_contact(diag) - 1],
          contact_stiffness_[4 * b + diagonal_second_contact(diag) - 1]));
    }
  }
  return result;
}

}  // namespace slewload
