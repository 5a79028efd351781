#pragma once

// Shared fixtures for the test suites: the two reference bearings, companion
// ring cross-sections, and a finite-difference gradient helper.

#include <slewload/energy.hpp>
#include <slewload/error_gen.hpp>
#include <slewload/geometry.hpp>
#include <slewload/ring_model.hpp>

#include <cmath>
#include <utility>

namespace testsup {

/// 541 mm / 25 mm / 13.25 mm / 45 deg reference bearing.
inline slewload::BearingGeometry small_bearing(int ball_count = 32) {
  slewload::BearingGeometry g;
  g.mean_diameter = 541.0;
  g.ball_diameter_nominal = 25.0;
  g.raceway_radius = {13.25, 13.25, 13.25, 13.25};
  g.initial_contact_angle = 45.0 * M_PI / 180.0;
  g.ball_count = ball_count;
  g.validate();
  return g;
}

/// 1500 mm / 35 mm / 18.56 mm / 45 deg reference bearing.
inline slewload::BearingGeometry large_bearing(int ball_count = 90) {
  slewload::BearingGeometry g;
  g.mean_diameter = 1500.0;
  g.ball_diameter_nominal = 35.0;
  g.raceway_radius = {18.56, 18.56, 18.56, 18.56};
  g.initial_contact_angle = 45.0 * M_PI / 180.0;
  g.ball_count = ball_count;
  g.validate();
  return g;
}

/// Rectangular section whose raceway-center offsets follow the bearing's
/// nominal construction.
inline slewload::RingSection ring_section(const slewload::BearingGeometry& g,
                                          slewload::RingSide side, double centroid_radius,
                                          double width, double height) {
  slewload::RingSection sec;
  sec.centroid_radius = centroid_radius;
  sec.radial_width = width;
  sec.axial_height = height;
  const int first = side == slewload::RingSide::Outer ? 1 : 2;
  const int second = side == slewload::RingSide::Outer ? 4 : 3;
  sec.center_offsets[0] =
      g.nominal_center(first) - Eigen::Vector2d(centroid_radius, 0.0);
  sec.center_offsets[1] =
      g.nominal_center(second) - Eigen::Vector2d(centroid_radius, 0.0);
  return sec;
}

inline slewload::RingSection small_outer_section(const slewload::BearingGeometry& g) {
  return ring_section(g, slewload::RingSide::Outer, 294.0, 49.0, 60.0);
}
inline slewload::RingSection small_inner_section(const slewload::BearingGeometry& g) {
  return ring_section(g, slewload::RingSide::Inner, 247.0, 49.0, 60.0);
}
inline slewload::RingSection large_outer_section(const slewload::BearingGeometry& g) {
  return ring_section(g, slewload::RingSide::Outer, 788.0, 80.0, 100.0);
}
inline slewload::RingSection large_inner_section(const slewload::BearingGeometry& g) {
  return ring_section(g, slewload::RingSide::Inner, 712.0, 80.0, 100.0);
}

/// Both condensed ring matrices for a bearing, untruncated.
inline std::pair<slewload::RingStiffness, slewload::RingStiffness> build_rings(
    const slewload::BearingGeometry& g, const slewload::RingSection& outer,
    const slewload::RingSection& inner) {
  return {slewload::build_ring_stiffness(outer, g.ball_count, slewload::RingSide::Outer),
          slewload::build_ring_stiffness(inner, g.ball_count, slewload::RingSide::Inner)};
}

/// A copy of a ring matrix with every block scaled; used for the rigid-limit
/// checks (stiffness x 1e8 must reproduce rigid-ring results).
inline slewload::RingStiffness scaled_ring(const slewload::RingStiffness& k,
                                           double factor) {
  if (k.is_circulant()) {
    std::vector<Eigen::Matrix4d> blocks = k.blocks();
    for (Eigen::Matrix4d& b : blocks) b *= factor;
    return slewload::RingStiffness::from_blocks(k.side(), std::move(blocks));
  }
  return slewload::RingStiffness::from_dense(k.side(), factor * k.to_dense());
}

/// Central finite differences of the model energy; the oracle for the
/// analytic gradient.
inline Eigen::VectorXd fd_gradient(const slewload::EnergyModel& model,
                                   const Eigen::VectorXd& x, double step = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (int i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = model.energy(probe);
    probe[i] = x[i] - step;
    const double down = model.energy(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Harmonic raceway error pattern with 10 micrometer amplitude, the standard
/// "measured bearing" stand-in used by the trend checks.
inline slewload::ErrorGeneratorSpec harmonic_error_spec(std::uint64_t seed = 42) {
  slewload::ErrorGeneratorSpec spec;
  spec.seed = seed;
  slewload::RacewayErrorSpec outer_race;
  outer_race.contact = 1;
  outer_race.center_axial = {{2, 0.010, 0.0}, {3, 0.004, 1.1}};
  outer_race.center_radial = {{2, 0.006, 0.7}};
  slewload::RacewayErrorSpec inner_race;
  inner_race.contact = 3;
  inner_race.center_axial = {{2, 0.008, 2.3}};
  spec.raceways = {outer_race, inner_race};
  spec.ball_diameter.standard_deviation = 0.002;
  spec.ball_diameter.min = -0.005;
  spec.ball_diameter.max = 0.005;
  return spec;
}

}  // namespace testsup
