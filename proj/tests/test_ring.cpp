#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <doctest.h>

#include "slewload/ring_model.hpp"
#include "slewload/ring_stiffness.hpp"
#include "support.hpp"

using namespace slewload;

namespace {

// Thin uniform section with both raceway centers on the centroid axis, so the
// condensed response can be compared against closed-form ring bending.
RingSection thin_section(double radius, double width, double height, int epb) {
  RingSection sec;
  sec.centroid_radius = radius;
  sec.radial_width = width;
  sec.axial_height = height;
  sec.center_offsets = {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  sec.elements_per_ball = epb;
  return sec;
}

// Sum of the radial displacements of the two load points under a diametral
// pinch: +P on the first raceway center of ball 0 and of ball B/2. The sum is
// gauge-invariant (every rigid mode cancels between opposite azimuths).
double pinch_diameter_change(const RingSection& sec, int ball_count, double load) {
  const RingStiffness k = RingModel(sec, ball_count, RingSide::Outer).condense();
  const Eigen::MatrixXd dense = k.to_dense();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(dense.rows());
  const int opposite = ball_count / 2;
  f[0] = load;                 // ball 0, first center, R
  f[4 * opposite] = load;      // ball B/2, first center, R
  // Minimum-norm solution of the singular (rigid-mode) system.
  const Eigen::VectorXd d =
      dense.completeOrthogonalDecomposition().solve(f);
  return d[0] + d[4 * opposite];
}

}  // namespace

TEST_SUITE("ring") {

TEST_CASE("section properties and validation") {
  RingSection sec = testsup::small_outer_section(testsup::small_bearing());
  CHECK(sec.area() == doctest::Approx(49.0 * 60.0).epsilon(1e-12));
  CHECK(sec.in_plane_inertia() == doctest::Approx(60.0 * 49.0 * 49.0 * 49.0 / 12.0).epsilon(1e-12));
  CHECK(sec.out_of_plane_inertia() == doctest::Approx(49.0 * 60.0 * 60.0 * 60.0 / 12.0).epsilon(1e-12));
  CHECK(sec.shear_modulus() == doctest::Approx(2.1e5 / 2.6).epsilon(1e-12));
  // St. Venant constant of a rectangle is positive and below the polar moment.
  CHECK(sec.torsion_constant() > 0.0);
  CHECK(sec.torsion_constant() < sec.in_plane_inertia() + sec.out_of_plane_inertia());
  CHECK(sec.validate().empty());

  SUBCASE("rejects unusable values") {
    RingSection bad = sec;
    bad.radial_width = 0.0;
    CHECK_THROWS_AS((void)bad.validate(), std::invalid_argument);
    bad = sec;
    bad.centroid_radius = -1.0;
    CHECK_THROWS_AS((void)bad.validate(), std::invalid_argument);
    bad = sec;
    bad.poisson_ratio = 0.5;
    CHECK_THROWS_AS((void)bad.validate(), std::invalid_argument);
    bad = sec;
    bad.elements_per_ball = 1;
    CHECK_THROWS_AS((void)bad.validate(), std::invalid_argument);
  }

  SUBCASE("warns when a raceway center leaves the envelope") {
    RingSection odd = sec;
    odd.center_offsets[1] = Eigen::Vector2d(30.0, 0.0);  // width/2 = 24.5
    const auto warnings = odd.validate();
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("raceway center 2") != std::string::npos);
    CHECK(warnings[0].find("outside the section envelope") != std::string::npos);
  }
}

TEST_CASE("model dimensions follow the mesh layout") {
  const RingSection sec = testsup::small_outer_section(testsup::small_bearing());
  const RingModel model(sec, 32, RingSide::Outer);
  CHECK(model.ball_count() == 32);
  CHECK(model.beam_node_count() == 32 * 4);
  CHECK(model.node_count() == 32 * 4 + 2 * 32);
  CHECK(model.dof_count() == 6 * (32 * 4 + 2 * 32));
  CHECK(model.master_count() == 128);

  const auto masters = model.master_dofs();
  REQUIRE(static_cast<int>(masters.size()) == model.master_count());
  std::vector<int> sorted = masters;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK(sorted.front() >= 0);
  CHECK(sorted.back() < model.dof_count());

  CHECK_THROWS_AS(RingModel(sec, 2, RingSide::Outer), std::invalid_argument);
}

TEST_CASE("condensed matrix is symmetric, circulant, and positive semidefinite") {
  const RingSection sec = thin_section(300.0, 30.0, 40.0, 4);
  const RingStiffness k = RingModel(sec, 12, RingSide::Inner).condense();
  CHECK(k.side() == RingSide::Inner);
  CHECK(k.ball_count() == 12);
  CHECK(k.is_circulant());
  CHECK(k.bandwidth() == 6);

  const Eigen::MatrixXd dense = k.to_dense();
  REQUIRE(dense.rows() == 48);
  CHECK((dense - dense.transpose()).norm() <= 1e-10 * dense.norm());
  CHECK(RingStiffness::symmetry_defect(k.blocks()) <= 1e-12);

  const auto spec = k.spectrum();
  CHECK(spec.max_eigenvalue > 0.0);
  CHECK(spec.min_eigenvalue >= -1e-8 * spec.max_eigenvalue);

  // The five master-visible rigid motions cost no elastic energy.
  const Eigen::MatrixXd rigid = ring_rigid_modes(sec, 12);
  REQUIRE(rigid.rows() == 48);
  REQUIRE(rigid.cols() == 5);
  for (int c = 0; c < rigid.cols(); ++c) {
    const Eigen::VectorXd mode = rigid.col(c) / rigid.col(c).norm();
    const double quad = mode.dot(dense * mode);
    CHECK(std::abs(quad) <= 1e-8 * spec.max_eigenvalue);
  }
}

TEST_CASE("condensation reproduces the full model response exactly") {
  // Guyan condensation of a linear model is exact: K_c * d_full = f for any
  // master load f that is orthogonal to the rigid modes.
  const RingSection sec = thin_section(300.0, 30.0, 40.0, 4);
  const int balls = 12;
  const RingModel model(sec, balls, RingSide::Outer);
  const RingStiffness k = model.condense();
  const Eigen::MatrixXd dense = k.to_dense();

  const Eigen::MatrixXd rigid = ring_rigid_modes(sec, balls);
  const Eigen::MatrixXd gram = rigid.transpose() * rigid;

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd f(4 * balls);
    for (int i = 0; i < f.size(); ++i) f[i] = 1000.0 * unif(rng);
    // Self-equilibrate: remove every rigid-mode component from the load.
    f -= rigid * gram.ldlt().solve(rigid.transpose() * f);

    const Eigen::VectorXd d = model.master_response(f);
    const Eigen::VectorXd residual = dense * d - f;
    CHECK(residual.norm() <= 1e-9 * f.norm());
  }
}

TEST_CASE("thin ring pinch matches curved-beam bending theory") {
  // Two opposite radial loads P change the load-line diameter by
  // P R^3 / (E I) * (pi/4 - 2/pi); the straight-chord mesh must land within
  // 2% and be mesh-converged to better than 0.5% on refinement.
  const double radius = 500.0;
  const double width = 10.0;
  const double height = 10.0;
  const double load = 100.0;
  const RingSection coarse = thin_section(radius, width, height, 8);
  const double inertia = coarse.in_plane_inertia();
  const double coeff = 3.14159265358979323846 / 4.0 - 2.0 / 3.14159265358979323846;
  const double theory =
      load * radius * radius * radius / (coarse.young_modulus * inertia) * coeff;

  const double measured = pinch_diameter_change(coarse, 16, load);
  CHECK(std::abs(measured - theory) <= 0.02 * theory);

  RingSection fine = coarse;
  fine.elements_per_ball = 16;
  const double refined = pinch_diameter_change(fine, 16, load);
  CHECK(std::abs(refined - measured) <= 0.005 * theory);
}

TEST_CASE("sector route equals direct condensation") {
  for (const int balls : {8, 12}) {
    RingSection sec = testsup::small_outer_section(testsup::small_bearing());
    sec.elements_per_ball = 3;
    const Eigen::MatrixXd direct =
        RingModel(sec, balls, RingSide::Outer).condense().to_dense();
    const RingStiffness sector = build_ring_stiffness(sec, balls, RingSide::Outer);
    CHECK(sector.is_circulant());
    const double diff = (sector.to_dense() - direct).norm();
    CHECK(diff <= 1e-10 * direct.norm());
  }
}

TEST_CASE("generating blocks tile the dense matrix") {
  const RingStiffness k =
      build_ring_stiffness(testsup::small_inner_section(testsup::small_bearing()), 8, RingSide::Inner);
  const auto& blocks = k.blocks();
  REQUIRE(static_cast<int>(blocks.size()) == 8);
  const Eigen::MatrixXd dense = k.to_dense();
  for (int b1 = 0; b1 < 8; ++b1) {
    for (int b2 = 0; b2 < 8; ++b2) {
      const Eigen::Matrix4d tile = dense.block<4, 4>(4 * b1, 4 * b2);
      const int shift = (b2 - b1 + 8) % 8;
      CHECK((tile - blocks[shift]).norm() <= 1e-9 * blocks[0].norm());
    }
  }
}

TEST_CASE("four-ball toy circulant has a closed-form spectrum") {
  // G0 = I, G1 = G3 = -I/4, G2 = 0: eigenvalues 1 - cos(2 pi j / 4) / 2.
  std::vector<Eigen::Matrix4d> blocks(4, Eigen::Matrix4d::Zero());
  blocks[0] = Eigen::Matrix4d::Identity();
  blocks[1] = -0.25 * Eigen::Matrix4d::Identity();
  blocks[3] = -0.25 * Eigen::Matrix4d::Identity();
  const RingStiffness k = RingStiffness::from_blocks(RingSide::Outer, blocks);

  const auto spec = k.spectrum();
  CHECK(spec.min_eigenvalue == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(spec.max_eigenvalue == doctest::Approx(1.5).epsilon(1e-12));

  // Same numbers from the dense view.
  const Eigen::MatrixXd dense = k.to_dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
  CHECK(eig.eigenvalues().minCoeff() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(eig.eigenvalues().maxCoeff() == doctest::Approx(1.5).epsilon(1e-12));

  // Distance-2 block is zero, so bandwidth 1 loses nothing.
  CHECK(k.suggest_bandwidth(1e-3) == 1);
  const RingStiffness trimmed = k.truncated(1);
  CHECK(trimmed.bandwidth() == 1);
  CHECK((trimmed.to_dense() - dense).norm() == 0.0);

  // Dense import detects the circulant structure again.
  const RingStiffness reimport = RingStiffness::from_dense(RingSide::Outer, dense);
  CHECK(reimport.is_circulant());
  for (int i = 0; i < 4; ++i) {
    CHECK((reimport.blocks()[i] - blocks[i]).norm() <= 1e-12);
  }
}

TEST_CASE("energy and products agree with the dense quadratic form") {
  const RingStiffness k =
      build_ring_stiffness(testsup::small_outer_section(testsup::small_bearing()), 10, RingSide::Outer);
  const Eigen::MatrixXd dense = k.to_dense();

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-0.05, 0.05);
  Eigen::VectorXd d(40);
  for (int i = 0; i < d.size(); ++i) d[i] = unif(rng);

  const double reference = 0.5 * d.dot(dense * d);
  const double banded = k.energy(std::span<const double>(d.data(), d.size()));
  CHECK(banded == doctest::Approx(reference).epsilon(1e-12));

  Eigen::VectorXd y = Eigen::VectorXd::Zero(40);
  k.multiply_add(std::span<const double>(d.data(), d.size()),
                 std::span<double>(y.data(), y.size()));
  CHECK((y - dense * d).norm() <= 1e-12 * (dense * d).norm());

  const std::vector<double> zeros(40, 0.0);
  CHECK(k.energy(zeros) == 0.0);

  // U(d) = U(-d) for a quadratic form.
  Eigen::VectorXd neg = -d;
  CHECK(k.energy(std::span<const double>(neg.data(), neg.size())) ==
        doctest::Approx(banded).epsilon(1e-12));
}

TEST_CASE("truncation keeps the near band and nothing else") {
  const RingStiffness full =
      build_ring_stiffness(testsup::small_outer_section(testsup::small_bearing()), 16, RingSide::Outer);
  CHECK(full.bandwidth() == 8);

  // Truncating at or past ball_count/2 changes nothing.
  const RingStiffness same = full.truncated(8);
  CHECK(same.bandwidth() == 8);
  CHECK((same.to_dense() - full.to_dense()).norm() == 0.0);
  const RingStiffness clamped = full.truncated(100);
  CHECK(clamped.bandwidth() == 8);

  const RingStiffness trimmed = full.truncated(2);
  CHECK(trimmed.bandwidth() == 2);
  const auto& blocks = trimmed.blocks();
  for (int k = 3; k <= 14; ++k) {
    if (std::min(k, 16 - k) > 2) CHECK(blocks[k].norm() == 0.0);
  }
  // Suggested bandwidth reflects the strong interaction decay of a stiff ring.
  CHECK(full.suggest_bandwidth() >= 1);
  CHECK(full.suggest_bandwidth() <= 8);
}

TEST_CASE("from_blocks enforces the circulant symmetry pairing") {
  std::vector<Eigen::Matrix4d> blocks(6, Eigen::Matrix4d::Zero());
  blocks[0] = Eigen::Matrix4d::Identity();
  blocks[1] << 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0;
  // Pairing demands blocks[5] = blocks[1]^T; leave it zero to break it.
  CHECK_THROWS_WITH_AS(
      RingStiffness::from_blocks(RingSide::Outer, blocks),
      doctest::Contains("circulant symmetry pairing"), std::invalid_argument);

  blocks[5] = blocks[1].transpose();
  CHECK_NOTHROW(RingStiffness::from_blocks(RingSide::Outer, blocks));

  CHECK_THROWS_AS(RingStiffness::from_blocks(
                      RingSide::Outer, std::vector<Eigen::Matrix4d>(2)),
                  std::invalid_argument);
}

TEST_CASE("dense import validates shape and symmetry") {
  CHECK_THROWS_AS(RingStiffness::from_dense(RingSide::Outer, Eigen::MatrixXd::Identity(10, 10)),
                  std::invalid_argument);
  Eigen::MatrixXd skew = Eigen::MatrixXd::Identity(12, 12);
  skew(0, 1) = 5.0;
  CHECK_THROWS_WITH_AS(RingStiffness::from_dense(RingSide::Outer, skew),
                       doctest::Contains("not symmetric"), std::invalid_argument);

  // A symmetric but non-circulant matrix falls back to dense storage.
  Eigen::MatrixXd lumpy = Eigen::MatrixXd::Identity(12, 12);
  lumpy(0, 0) = 3.0;
  const RingStiffness k = RingStiffness::from_dense(RingSide::Inner, lumpy);
  CHECK_FALSE(k.is_circulant());
  CHECK(k.side() == RingSide::Inner);
  CHECK_THROWS_AS((void)k.blocks(), std::logic_error);
  CHECK_THROWS_AS((void)k.truncated(1), std::logic_error);
  const std::vector<double> e0 = [] {
    std::vector<double> v(12, 0.0);
    v[0] = 1.0;
    return v;
  }();
  CHECK(k.energy(e0) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("save and load round-trip bitwise") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "slewload_ring_io";
  fs::create_directories(dir);

  const RingStiffness k =
      build_ring_stiffness(testsup::small_inner_section(testsup::small_bearing()), 9, RingSide::Inner);
  const fs::path file = dir / "inner.k";
  k.save(file.string());

  const RingStiffness back = RingStiffness::load(file.string());
  CHECK(back.side() == RingSide::Inner);
  CHECK(back.ball_count() == 9);
  CHECK(back.bandwidth() == k.bandwidth());
  REQUIRE(back.is_circulant());
  for (int i = 0; i < 9; ++i) {
    // Bitwise: shortest round-trip formatting loses nothing.
    CHECK((back.blocks()[i].array() == k.blocks()[i].array()).all());
  }

  SUBCASE("headerless dense CSV is attributed to the caller's side") {
    const Eigen::MatrixXd dense = k.to_dense();
    const fs::path raw = dir / "raw.csv";
    std::ofstream out(raw);
    out.precision(17);
    for (int r = 0; r < dense.rows(); ++r) {
      for (int c = 0; c < dense.cols(); ++c) {
        out << (c ? "," : "") << dense(r, c);
      }
      out << "\n";
    }
    out.close();
    const RingStiffness imported = RingStiffness::load(raw.string(), RingSide::Inner);
    CHECK(imported.side() == RingSide::Inner);
    CHECK(imported.ball_count() == 9);
    CHECK((imported.to_dense() - dense).norm() <= 1e-9 * dense.norm());
  }

  SUBCASE("missing file and bad header are rejected") {
    CHECK_THROWS_AS(RingStiffness::load((dir / "absent.k").string()), std::runtime_error);
    const fs::path bad = dir / "bad.k";
    std::ofstream out(bad);
    out << "{\"ring\":\"sideways\",\"balls\":9,\"bandwidth\":4,"
        << "\"dof_layout\":[\"R2\",\"z2\",\"R3\",\"z3\"],\"units\":\"N/mm\","
        << "\"storage\":\"circulant\"}\n";
    out.close();
    CHECK_THROWS_WITH_AS(RingStiffness::load(bad.string()),
                         doctest::Contains("'outer' or 'inner'"), std::invalid_argument);
  }
}

TEST_CASE("sector expansion mirrors the far blocks") {
  std::vector<Eigen::Matrix4d> sector(3);
  sector[0] = 4.0 * Eigen::Matrix4d::Identity();
  sector[1] << 1, 2, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1;
  sector[2] = 0.5 * Eigen::Matrix4d::Identity();

  const RingStiffness k = expand_from_sector(RingSide::Outer, sector, 8);
  CHECK(k.ball_count() == 8);
  CHECK(k.bandwidth() == 2);
  const auto& blocks = k.blocks();
  CHECK((blocks[1] - sector[1]).norm() == 0.0);
  CHECK((blocks[7] - sector[1].transpose()).norm() == 0.0);
  CHECK(blocks[3].norm() == 0.0);
  CHECK(blocks[4].norm() == 0.0);

  SUBCASE("oversized sector bandwidth is clamped with a warning") {
    std::vector<Eigen::Matrix4d> wide(6, Eigen::Matrix4d::Zero());
    wide[0] = Eigen::Matrix4d::Identity();
    std::vector<std::string> warnings;
    const RingStiffness clamped = expand_from_sector(RingSide::Inner, wide, 8, &warnings);
    CHECK(clamped.bandwidth() == 4);
    CHECK(warnings.size() == 1);
  }

  CHECK_THROWS_AS(expand_from_sector(RingSide::Outer, {}, 8), std::invalid_argument);
}

}  // TEST_SUITE("ring")
