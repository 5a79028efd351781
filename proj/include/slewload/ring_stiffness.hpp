#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace slewload {

enum class RingSide { Outer, Inner };

const char* ring_side_name(RingSide side);

/// Condensed ring stiffness acting on the 4B raceway-center displacements of
/// one ring (ball-major [R first, z first, R second, z second], units N/mm).
///
/// The preferred storage is block-circulant: K(b1, b2) = G[(b2 - b1) mod B]
/// with 4x4 generating blocks, which azimuthal periodicity guarantees for
/// matrices built by the internal ring model. A dense fallback covers imported
/// matrices that are not circulant. A bandwidth w keeps only blocks whose
/// circular distance min(k, B - k) is at most w; untruncated means w = B / 2.
class RingStiffness {
 public:
  RingStiffness() = default;

  /// Builds from B generating blocks (block k couples ball b to ball b + k).
  /// Verifies the symmetry pairing G[k] = G[B - k]^T to 1e-6 relative and then
  /// enforces it exactly. bandwidth < 0 keeps all blocks.
  static RingStiffness from_blocks(RingSide side, std::vector<Eigen::Matrix4d> blocks,
                                   int bandwidth = -1);

  /// Wraps a dense 4B x 4B matrix. Detects block-circulant structure (1e-6
  /// relative) and converts to generating blocks when it holds.
  static RingStiffness from_dense(RingSide side, const Eigen::MatrixXd& full);

  int ball_count() const { return ball_count_; }
  int master_count() const { return 4 * ball_count_; }
  bool is_circulant() const { return circulant_; }
  RingSide side() const { return side_; }

  /// Effective half-bandwidth in block distances; ball_count/2 when untruncated.
  int bandwidth() const { return bandwidth_; }
  int max_bandwidth() const { return ball_count_ / 2; }

  const std::vector<Eigen::Matrix4d>& blocks() const;
  Eigen::MatrixXd to_dense() const;

  /// Elastic energy 0.5 d^T K d over the banded storage.
  double energy(std::span<const double> d) const;

  /// y += K d.
  void multiply_add(std::span<const double> d, std::span<double> y) const;

  /// Copy with blocks beyond the given circular distance dropped. Bandwidths
  /// of ball_count/2 or more are clamped to the untruncated value.
  RingStiffness truncated(int bandwidth) const;

  /// Smallest bandwidth whose dropped blocks all have Frobenius norm below
  /// tol * ||G0||.
  int suggest_bandwidth(double tol = 1e-3) const;

  /// Extreme eigenvalues; circulant matrices are diagonalized per harmonic
  /// through 4x4 Hermitian blocks, dense ones directly.
  struct Spectrum {
    double min_eigenvalue;
    double max_eigenvalue;
  };
  Spectrum spectrum() const;

  /// Relative symmetry defect max_k ||G[k] - G[B-k]^T|| / ||G0|| (or the dense
  /// equivalent), measured before any exact symmetrization.
  static double symmetry_defect(const std::vector<Eigen::Matrix4d>& blocks);

  /// File exchange. The format is a one-line JSON header
  ///   {"ring":"outer","balls":B,"bandwidth":w,
  ///    "dof_layout":["R1","z1","R4","z4"],"units":"N/mm","storage":"circulant"}
  /// followed by CSV: one 4x4 generating block per block index (4 rows of 4
  /// values) for storage "circulant", or 4B rows of 4B values for "dense".
  /// Numbers use shortest round-trip formatting, so save/load is bitwise
  /// stable. load() also accepts a raw dense CSV without a header line, in
  /// which case the matrix is attributed to side_if_headerless.
  void save(const std::string& path) const;
  static RingStiffness load(const std::string& path,
                            RingSide side_if_headerless = RingSide::Outer);

 private:
  RingSide side_ = RingSide::Outer;
  int ball_count_ = 0;
  int bandwidth_ = 0;
  bool circulant_ = true;
  std::vector<Eigen::Matrix4d> blocks_;  // all B blocks; truncation zeroes some
  Eigen::MatrixXd dense_;                // only for non-circulant imports

  bool block_active(int k) const;
};

/// Expands sector-level generating blocks (distances 0..w) into a full ring
/// matrix: G[k] = sector[k], G[B-k] = sector[k]^T. Bandwidths of B/2 or more
/// are clamped; a note is appended to *warnings when that happens.
RingStiffness expand_from_sector(RingSide side,
                                 const std::vector<Eigen::Matrix4d>& sector_blocks,
                                 int ball_count, std::vector<std::string>* warnings = nullptr);

}  // namespace slewload
