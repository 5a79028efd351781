#pragma once

#include <cstdint>
#include <vector>

#include "slewload/geometry.hpp"

namespace slewload {

/// One Fourier term of a deviation pattern around the ring:
/// amplitude * cos(order * phi + phase).
struct HarmonicTerm {
  int order = 0;
  double amplitude = 0.0;  // [mm]
  double phase = 0.0;      // [rad]
};

/// Synthetic deviation patterns for one contact's raceway, sampled at the
/// ball azimuths.
struct RacewayErrorSpec {
  int contact = 1;  // 1..4
  std::vector<HarmonicTerm> center_radial;
  std::vector<HarmonicTerm> center_axial;
  std::vector<HarmonicTerm> raceway_radius;
};

/// Ball diameter scatter: normal distribution truncated to [min, max].
struct BallDiameterSpec {
  double standard_deviation = 0.0;  // [mm]; 0 disables the scatter
  double min = 0.0;                 // [mm]
  double max = 0.0;                 // [mm]
};

struct ErrorGeneratorSpec {
  std::uint64_t seed = 0;
  std::vector<RacewayErrorSpec> raceways;
  BallDiameterSpec ball_diameter;
};

/// Samples the spec into a concrete error map. Identical inputs produce
/// identical maps: the generator owns its random stream and never consults
/// global state.
ErrorMap generate_errors(const ErrorGeneratorSpec& spec, const BearingGeometry& geometry,
                         double preload);

/// Stable per-stream seed derivation for independent samples.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace slewload
