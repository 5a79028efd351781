#include "slewload/ring_model.hpp"

#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

namespace slewload {

namespace {

using Matrix12d = Eigen::Matrix<double, 12, 12>;
using Triplet = Eigen::Triplet<double>;

/// Two-node Euler-Bernoulli space beam, local frame, DoF order
/// [u_x u_y u_z r_x r_y r_z] per node with x along the beam.
Matrix12d beam_local_stiffness(double E, double G, double A, double L, double Iy,
                               double Iz, double J) {
  Matrix12d K = Matrix12d::Zero();
  const double axial = E * A / L;
  const double torsion = G * J / L;
  K(0, 0) = axial;
  K(0, 6) = -axial;
  K(6, 6) = axial;
  K(3, 3) = torsion;
  K(3, 9) = -torsion;
  K(9, 9) = torsion;
  {
    // Bending in the x-y plane (curvature about local z).
    const double a = 12.0 * E * Iz / (L * L * L);
    const double b = 6.0 * E * Iz / (L * L);
    const double c = 4.0 * E * Iz / L;
    const double d = 2.0 * E * Iz / L;
    K(1, 1) = a;
    K(1, 5) = b;
    K(1, 7) = -a;
    K(1, 11) = b;
    K(5, 5) = c;
    K(5, 7) = -b;
    K(5, 11) = d;
    K(7, 7) = a;
    K(7, 11) = -b;
    K(11, 11) = c;
  }
  {
    // Bending in the x-z plane (curvature about local y).
    const double a = 12.0 * E * Iy / (L * L * L);
    const double b = 6.0 * E * Iy / (L * L);
    const double c = 4.0 * E * Iy / L;
    const double d = 2.0 * E * Iy / L;
    K(2, 2) = a;
    K(2, 4) = -b;
    K(2, 8) = -a;
    K(2, 10) = -b;
    K(4, 4) = c;
    K(4, 8) = b;
    K(4, 10) = d;
    K(8, 8) = a;
    K(8, 10) = b;
    K(10, 10) = c;
  }
  return Matrix12d(K.selfadjointView<Eigen::Upper>());
}

/// Cylindrical node frame at azimuth phi: columns are the radial, tangential
/// and axial unit vectors in Cartesian coordinates.
Eigen::Matrix3d node_frame(double phi) {
  Eigen::Matrix3d Q;
  const double c = std::cos(phi), s = std::sin(phi);
  Q << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return Q;
}

/// Element matrix expressed in the two end nodes' cylindrical frames.
/// Re maps local element axes to Cartesian, Qa/Qb the node frames.
Matrix12d element_in_node_frames(const Matrix12d& local, const Eigen::Matrix3d& Re,
                                 const Eigen::Matrix3d& Qa, const Eigen::Matrix3d& Qb) {
  const Eigen::Matrix3d Ta = Re.transpose() * Qa;
  const Eigen::Matrix3d Tb = Re.transpose() * Qb;
  Matrix12d T = Matrix12d::Zero();
  T.block<3, 3>(0, 0) = Ta;
  T.block<3, 3>(3, 3) = Ta;
  T.block<3, 3>(6, 6) = Tb;
  T.block<3, 3>(9, 9) = Tb;
  return T.transpose() * local * T;
}

struct ElementGeometry {
  Matrix12d matrix;  // in the end nodes' cylindrical frames
};

/// Ring chord between two centroid-circle nodes.
ElementGeometry chord_element(const RingSection& sec, double phi_a, double phi_b) {
  const double R = sec.centroid_radius;
  const Eigen::Vector3d pa(R * std::cos(phi_a), R * std::sin(phi_a), 0.0);
  const Eigen::Vector3d pb(R * std::cos(phi_b), R * std::sin(phi_b), 0.0);
  const Eigen::Vector3d chord = pb - pa;
  const double L = chord.norm();
  const Eigen::Vector3d x = chord / L;
  const Eigen::Vector3d y = Eigen::Vector3d::UnitZ().cross(x).normalized();
  const Eigen::Vector3d z = x.cross(y);
  Eigen::Matrix3d Re;
  Re.col(0) = x;
  Re.col(1) = y;
  Re.col(2) = z;
  // Local y is (anti)radial and local z axial, so in-plane bending pairs with
  // the local-z inertia and out-of-plane bending with the local-y inertia.
  const Matrix12d local =
      beam_local_stiffness(sec.young_modulus, sec.shear_modulus(), sec.area(), L,
                           sec.out_of_plane_inertia(), sec.in_plane_inertia(),
                           sec.torsion_constant());
  return {element_in_node_frames(local, Re, node_frame(phi_a), node_frame(phi_b))};
}

/// Short connector tying a raceway-center node to its ring node. The stub
/// reuses the ring section; its length is floored at a quarter of the smaller
/// section dimension so nearly coincident nodes stay well conditioned, which
/// makes the link semi-rigid rather than ideal. That standing in for local
/// section compliance is intentional.
ElementGeometry connector_element(const RingSection& sec, double phi,
                                  const Eigen::Vector2d& offset) {
  const double e = offset.norm();
  Eigen::Vector3d x_rz(offset.x(), 0.0, offset.y());
  if (e < 1e-12) {
    x_rz = Eigen::Vector3d::UnitX();  // degenerate offset: point radially
  } else {
    x_rz /= e;
  }
  // x_rz holds (radial, tangential, axial) components; rotate into Cartesian.
  const Eigen::Matrix3d Q = node_frame(phi);
  const Eigen::Vector3d x = Q * x_rz;
  const Eigen::Vector3d y = Q.col(1);  // tangential, perpendicular to any (R,z) chord
  const Eigen::Vector3d z = x.cross(y);
  Eigen::Matrix3d Re;
  Re.col(0) = x;
  Re.col(1) = y;
  Re.col(2) = z;
  const double L = std::max(e, 0.25 * std::min(sec.radial_width, sec.axial_height));
  const Matrix12d local =
      beam_local_stiffness(sec.young_modulus, sec.shear_modulus(), sec.area(), L,
                           sec.out_of_plane_inertia(), sec.in_plane_inertia(),
                           sec.torsion_constant());
  return {element_in_node_frames(local, Re, Q, Q)};
}

void scatter_element(std::vector<Triplet>& triplets, const Matrix12d& K, int node_a,
                     int node_b) {
  const int base[2] = {6 * node_a, 6 * node_b};
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12; ++j) {
      const double v = K(i, j);
      if (v != 0.0) {
        triplets.emplace_back(base[i / 6] + i % 6, base[j / 6] + j % 6, v);
      }
    }
  }
}

}  // namespace

double RingSection::torsion_constant() const {
  const double a = std::max(radial_width, axial_height);
  const double b = std::min(radial_width, axial_height);
  const double ratio = b / a;
  return a * b * b * b *
         (1.0 / 3.0 - 0.21 * ratio * (1.0 - std::pow(ratio, 4) / 12.0));
}

std::vector<std::string> RingSection::validate() const {
  auto fail = [](const char* msg) { throw std::invalid_argument(msg); };
  if (!(centroid_radius > 0.0)) fail("ring centroid radius must be positive");
  if (!(radial_width > 0.0) || !(axial_height > 0.0)) {
    fail("ring section dimensions must be positive");
  }
  if (!(young_modulus > 0.0)) fail("Young modulus must be positive");
  if (!(poisson_ratio >= 0.0) || !(poisson_ratio < 0.5)) {
    fail("Poisson ratio must lie in [0, 0.5)");
  }
  if (elements_per_ball < 2) fail("at least 2 ring elements per ball span are required");
  if (!(centroid_radius > radial_width)) {
    fail("ring centroid radius must exceed the section radial width");
  }

  std::vector<std::string> warnings;
  for (int m = 0; m < 2; ++m) {
    const Eigen::Vector2d& off = center_offsets[m];
    if (std::abs(off.x()) > 0.5 * radial_width || std::abs(off.y()) > 0.5 * axial_height) {
      std::ostringstream msg;
      msg << "raceway center " << (m + 1) << " offset (" << off.x() << ", " << off.y()
          << ") mm lies outside the section envelope";
      warnings.push_back(msg.str());
    }
  }
  return warnings;
}

RingModel::RingModel(const RingSection& section, int ball_count, RingSide side)
    : section_(section), ball_count_(ball_count), side_(side) {
  if (ball_count_ < 3) {
    throw std::invalid_argument("ring model needs at least 3 balls");
  }
  section_.validate();
  assemble();
}

void RingModel::assemble() {
  const int epb = section_.elements_per_ball;
  const int n_beam = ball_count_ * epb;
  const double node_step = 2.0 * M_PI / n_beam;

  std::vector<Triplet> triplets;
  triplets.reserve(144 * (n_beam + 2 * ball_count_));

  for (int n = 0; n < n_beam; ++n) {
    const double phi_a = node_step * n;
    const double phi_b = node_step * (n + 1);
    const ElementGeometry elem = chord_element(section_, phi_a, phi_b);
    scatter_element(triplets, elem.matrix, n, (n + 1) % n_beam);
  }
  for (int b = 0; b < ball_count_; ++b) {
    const double phi = node_step * (b * epb);
    for (int m = 0; m < 2; ++m) {
      const ElementGeometry elem =
          connector_element(section_, phi, section_.center_offsets[m]);
      scatter_element(triplets, elem.matrix, b * epb, n_beam + 2 * b + m);
    }
  }

  system_.resize(dof_count(), dof_count());
  system_.setFromTriplets(triplets.begin(), triplets.end());
  system_.makeCompressed();
}

std::vector<int> RingModel::master_dofs() const {
  std::vector<int> dofs;
  dofs.reserve(master_count());
  const int n_beam = beam_node_count();
  for (int b = 0; b < ball_count_; ++b) {
    for (int m = 0; m < 2; ++m) {
      const int base = 6 * (n_beam + 2 * b + m);
      dofs.push_back(base + 0);  // u_R
      dofs.push_back(base + 2);  // u_z
    }
  }
  return dofs;
}

RingStiffness RingModel::condense() const {
  const int total = dof_count();
  const std::vector<int> masters = master_dofs();
  const int n_m = static_cast<int>(masters.size());

  std::vector<int> role(total, -1);  // slave position, or -2 for masters
  for (int i = 0; i < n_m; ++i) role[masters[i]] = -2;
  std::vector<int> master_pos(total, -1);
  for (int i = 0; i < n_m; ++i) master_pos[masters[i]] = i;
  int n_s = 0;
  for (int dof = 0; dof < total; ++dof) {
    if (role[dof] == -1) role[dof] = n_s++;
  }

  // Slave system bordered with one row pinning mean tangential motion: that
  // rigid motion leaves every master at rest, so without the pin the interior
  // solve would be singular.
  std::vector<Triplet> triplets;
  triplets.reserve(system_.nonZeros() + 2 * total / 6);
  Eigen::MatrixXd k_sm = Eigen::MatrixXd::Zero(n_s + 1, n_m);
  Eigen::MatrixXd k_mm = Eigen::MatrixXd::Zero(n_m, n_m);
  for (int col = 0; col < system_.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(system_, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = col;
      const bool r_master = role[r] == -2;
      const bool c_master = role[c] == -2;
      if (r_master && c_master) {
        k_mm(master_pos[r], master_pos[c]) = it.value();
      } else if (!r_master && c_master) {
        k_sm(role[r], master_pos[c]) = it.value();
      } else if (!r_master && !c_master) {
        triplets.emplace_back(role[r], role[c], it.value());
      }
    }
  }
  for (int dof = 1; dof < total; dof += 6) {
    if (role[dof] == -2) continue;  // tangential DoF are never masters
    triplets.emplace_back(n_s, role[dof], 1.0);
    triplets.emplace_back(role[dof], n_s, 1.0);
  }

  Eigen::SparseMatrix<double> k_ss(n_s + 1, n_s + 1);
  k_ss.setFromTriplets(triplets.begin(), triplets.end());
  k_ss.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(k_ss);
  if (lu.info() != Eigen::Success) {
    throw std::runtime_error("ring condensation: interior factorization failed");
  }
  const Eigen::MatrixXd x = lu.solve(k_sm);
  const Eigen::MatrixXd condensed =
      k_mm - k_sm.topRows(n_s).transpose() * x.topRows(n_s);
  const Eigen::MatrixXd sym = 0.5 * (condensed + condensed.transpose());
  return RingStiffness::from_dense(side_, sym);
}

namespace {

/// Rigid-body motion components in a node's cylindrical frame. Columns:
/// translations x, y, z and unit rotations about x, y, z.
Eigen::Matrix<double, 6, 6> rigid_motion_at(double radius, double z, double phi) {
  const double c = std::cos(phi), s = std::sin(phi);
  Eigen::Matrix<double, 6, 6> V = Eigen::Matrix<double, 6, 6>::Zero();
  // Translations.
  V(0, 0) = c;
  V(1, 0) = -s;
  V(0, 1) = s;
  V(1, 1) = c;
  V(2, 2) = 1.0;
  // Rotation about x: u = e_x cross r, plus the rotation vector itself.
  V(0, 3) = -z * s;
  V(1, 3) = -z * c;
  V(2, 3) = radius * s;
  V(3, 3) = c;
  V(4, 3) = -s;
  // Rotation about y.
  V(0, 4) = z * c;
  V(1, 4) = -z * s;
  V(2, 4) = -radius * c;
  V(3, 4) = s;
  V(4, 4) = c;
  // Rotation about z.
  V(1, 5) = radius;
  V(5, 5) = 1.0;
  return V;
}

}  // namespace

Eigen::VectorXd RingModel::master_response(const Eigen::VectorXd& master_forces) const {
  const std::vector<int> masters = master_dofs();
  if (master_forces.size() != static_cast<Eigen::Index>(masters.size())) {
    throw std::invalid_argument("master force vector size does not match the model");
  }
  const int total = dof_count();
  const int epb = section_.elements_per_ball;
  const int n_beam = beam_node_count();

  // All six mean rigid motions are pinned through Lagrange multipliers; the
  // system matrix itself is floating.
  Eigen::MatrixXd modes = Eigen::MatrixXd::Zero(total, 6);
  for (int node = 0; node < node_count(); ++node) {
    double radius = section_.centroid_radius, z = 0.0, phi = 0.0;
    if (node < n_beam) {
      phi = 2.0 * M_PI * node / n_beam;
    } else {
      const int b = (node - n_beam) / 2;
      const Eigen::Vector2d& off = section_.center_offsets[(node - n_beam) % 2];
      phi = 2.0 * M_PI * (b * epb) / n_beam;
      radius += off.x();
      z = off.y();
    }
    modes.block<6, 6>(6 * node, 0) = rigid_motion_at(radius, z, phi);
  }

  std::vector<Triplet> triplets;
  triplets.reserve(system_.nonZeros() + 12 * total);
  for (int col = 0; col < system_.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(system_, col); it; ++it) {
      triplets.emplace_back(static_cast<int>(it.row()), col, it.value());
    }
  }
  for (int dof = 0; dof < total; ++dof) {
    for (int mode = 0; mode < 6; ++mode) {
      const double v = modes(dof, mode);
      if (v != 0.0) {
        triplets.emplace_back(dof, total + mode, v);
        triplets.emplace_back(total + mode, dof, v);
      }
    }
  }
  Eigen::SparseMatrix<double> bordered(total + 6, total + 6);
  bordered.setFromTriplets(triplets.begin(), triplets.end());
  bordered.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(bordered);
  if (lu.info() != Eigen::Success) {
    throw std::runtime_error("ring response: factorization failed");
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(total + 6);
  for (std::size_t i = 0; i < masters.size(); ++i) {
    rhs[masters[i]] = master_forces[static_cast<Eigen::Index>(i)];
  }
  const Eigen::VectorXd solution = lu.solve(rhs);

  Eigen::VectorXd response(masters.size());
  for (std::size_t i = 0; i < masters.size(); ++i) {
    response[static_cast<Eigen::Index>(i)] = solution[masters[i]];
  }
  return response;
}

Eigen::MatrixXd ring_rigid_modes(const RingSection& section, int ball_count) {
  Eigen::MatrixXd modes = Eigen::MatrixXd::Zero(4 * ball_count, 5);
  for (int b = 0; b < ball_count; ++b) {
    const double phi = 2.0 * M_PI * b / ball_count;
    const double c = std::cos(phi), s = std::sin(phi);
    for (int m = 0; m < 2; ++m) {
      const double radius = section.centroid_radius + section.center_offsets[m].x();
      const double z = section.center_offsets[m].y();
      const int row = 4 * b + 2 * m;
      modes(row, 0) = c;            // translation x
      modes(row, 1) = s;            // translation y
      modes(row + 1, 2) = 1.0;      // translation z
      modes(row, 3) = -z * s;       // rotation about x
      modes(row + 1, 3) = radius * s;
      modes(row, 4) = z * c;        // rotation about y
      modes(row + 1, 4) = -radius * c;
    }
  }
  return modes;
}

std::vector<Eigen::Matrix4d> sector_generating_blocks(const RingSection& section,
                                                      int ball_count, RingSide side) {
  (void)side;  // the blocks depend only on the section; the side labels them
  if (ball_count < 3) {
    throw std::invalid_argument("sector condensation needs at least 3 balls");
  }
  section.validate();
  const int epb = section.elements_per_ball;
  const int n_nodes = epb + 3;  // beam nodes 0..epb plus two center nodes
  const int n_dof = 6 * n_nodes;
  const double node_step = 2.0 * M_PI / (ball_count * epb);

  // One ball span of the ring, assembled dense in cylindrical node frames.
  Eigen::MatrixXd sector = Eigen::MatrixXd::Zero(n_dof, n_dof);
  auto add_element = [&sector](const Matrix12d& K, int node_a, int node_b) {
    const int base[2] = {6 * node_a, 6 * node_b};
    for (int i = 0; i < 12; ++i) {
      for (int j = 0; j < 12; ++j) {
        sector(base[i / 6] + i % 6, base[j / 6] + j % 6) += K(i, j);
      }
    }
  };
  for (int k = 0; k < epb; ++k) {
    add_element(chord_element(section, node_step * k, node_step * (k + 1)).matrix, k,
                k + 1);
  }
  for (int m = 0; m < 2; ++m) {
    add_element(connector_element(section, 0.0, section.center_offsets[m]).matrix, 0,
                epb + 1 + m);
  }

  // Reduced DoF: beam nodes 0..epb-1 plus the two centers; the closing node
  // epb is the next sector's node 0 and folds back with the harmonic phase.
  const int n_red = 6 * (n_nodes - 1);
  std::vector<int> red_full(n_red);
  for (int i = 0; i < 6 * epb; ++i) red_full[i] = i;
  for (int i = 0; i < 12; ++i) red_full[6 * epb + i] = 6 * (epb + 1) + i;

  const int center_base = 6 * epb;  // reduced index of the first center node
  const std::array<int, 4> master_red = {center_base + 0, center_base + 2,
                                         center_base + 6, center_base + 8};
  std::vector<int> slave_red;
  slave_red.reserve(n_red - 4);
  for (int i = 0; i < n_red; ++i) {
    if (i != master_red[0] && i != master_red[1] && i != master_red[2] &&
        i != master_red[3]) {
      slave_red.push_back(i);
    }
  }
  const int n_slave = static_cast<int>(slave_red.size());

  using ComplexMatrix = Eigen::MatrixXcd;
  std::vector<Eigen::Matrix4cd> harmonic(ball_count);
  for (int j = 0; j < ball_count; ++j) {
    const double angle = 2.0 * M_PI * j / ball_count;
    const std::complex<double> mu(std::cos(angle), std::sin(angle));

    ComplexMatrix fold = ComplexMatrix::Zero(n_dof, n_red);
    for (int i = 0; i < n_red; ++i) fold(red_full[i], i) = 1.0;
    for (int comp = 0; comp < 6; ++comp) fold(6 * epb + comp, comp) = mu;
    const ComplexMatrix reduced = fold.adjoint() * sector * fold;

    const bool pin_rotation = j == 0;  // mean tangential motion is rigid here
    const int n_aug = n_slave + (pin_rotation ? 1 : 0);
    ComplexMatrix k_ss = ComplexMatrix::Zero(n_aug, n_aug);
    ComplexMatrix k_sm = ComplexMatrix::Zero(n_aug, 4);
    Eigen::Matrix4cd k_mm;
    for (int r = 0; r < n_slave; ++r) {
      for (int c = 0; c < n_slave; ++c) k_ss(r, c) = reduced(slave_red[r], slave_red[c]);
      for (int c = 0; c < 4; ++c) k_sm(r, c) = reduced(slave_red[r], master_red[c]);
    }
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) k_mm(r, c) = reduced(master_red[r], master_red[c]);
    }
    if (pin_rotation) {
      for (int r = 0; r < n_slave; ++r) {
        if (slave_red[r] % 6 == 1) {  // tangential displacement components
          k_ss(n_slave, r) = 1.0;
          k_ss(r, n_slave) = 1.0;
        }
      }
    }

    const Eigen::PartialPivLU<ComplexMatrix> lu(k_ss);
    const ComplexMatrix x = lu.solve(k_sm);
    Eigen::Matrix4cd condensed =
        k_mm - k_sm.topRows(n_slave).adjoint() * x.topRows(n_slave);
    harmonic[j] = 0.5 * (condensed + condensed.adjoint());
  }

  // Inverse discrete Fourier transform back to block index space.
  std::vector<Eigen::Matrix4d> blocks(ball_count);
  double scale = 0.0;
  double imag_norm = 0.0;
  for (int k = 0; k < ball_count; ++k) {
    Eigen::Matrix4cd sum = Eigen::Matrix4cd::Zero();
    for (int j = 0; j < ball_count; ++j) {
      const double angle = -2.0 * M_PI * j * k / ball_count;
      sum += harmonic[j] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    sum /= static_cast<double>(ball_count);
    blocks[k] = sum.real();
    scale = std::max(scale, blocks[k].norm());
    imag_norm = std::max(imag_norm, sum.imag().norm());
  }
  if (imag_norm > 1e-8 * std::max(scale, 1.0)) {
    throw std::runtime_error("sector condensation produced a non-real ring stiffness");
  }
  return blocks;
}

RingStiffness build_ring_stiffness(const RingSection& section, int ball_count,
                                   RingSide side, int bandwidth) {
  return RingStiffness::from_blocks(side, sector_generating_blocks(section, ball_count, side),
                                    bandwidth);
}

}  // namespace slewload
