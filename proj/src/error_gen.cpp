#include "slewload/error_gen.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace slewload {

namespace {

double evaluate_harmonics(const std::vector<HarmonicTerm>& terms, double phi) {
  double value = 0.0;
  for (const HarmonicTerm& term : terms) {
    value += term.amplitude * std::cos(term.order * phi + term.phase);
  }
  return value;
}

/// Uniform double in (0, 1] from the top 53 bits of the generator.
double next_uniform(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

/// Box-Muller sample, truncated by rejection. Implemented by hand so the
/// stream is identical across standard libraries.
double truncated_normal(std::mt19937_64& rng, double sigma, double lo, double hi) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double u1 = next_uniform(rng);
    const double u2 = next_uniform(rng);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double value = sigma * radius * std::cos(2.0 * M_PI * u2);
    if (value >= lo && value <= hi) return value;
    // The second Box-Muller value is discarded on purpose: one draw per
    // attempt keeps the stream layout trivial to reason about.
  }
  throw std::runtime_error(
      "ball diameter truncation bounds reject practically every sample");
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 of the combined value; decorrelates neighbouring streams.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

ErrorMap generate_errors(const ErrorGeneratorSpec& spec, const BearingGeometry& geometry,
                         double preload) {
  ErrorMap map = ErrorMap::zero(geometry.ball_count);
  map.preload = preload;

  for (const RacewayErrorSpec& raceway : spec.raceways) {
    if (raceway.contact < 1 || raceway.contact > kContactCount) {
      throw std::invalid_argument("raceway error spec: contact must be 1..4");
    }
    const int col = raceway.contact - 1;
    for (int b = 0; b < geometry.ball_count; ++b) {
      const double phi = geometry.ball_azimuth(b);
      map.center_radial_dev(b, col) += evaluate_harmonics(raceway.center_radial, phi);
      map.center_axial_dev(b, col) += evaluate_harmonics(raceway.center_axial, phi);
      map.raceway_radius_dev(b, col) += evaluate_harmonics(raceway.raceway_radius, phi);
    }
  }

  const BallDiameterSpec& balls = spec.ball_diameter;
  if (balls.standard_deviation > 0.0) {
    if (!(balls.max > balls.min)) {
      throw std::invalid_argument("ball diameter truncation needs min < max");
    }
    std::mt19937_64 rng(spec.seed);
    for (int b = 0; b < geometry.ball_count; ++b) {
      map.ball_diameter_dev[b] =
          truncated_normal(rng, balls.standard_deviation, balls.min, balls.max);
    }
  } else if (balls.standard_deviation < 0.0) {
    throw std::invalid_argument("ball diameter standard deviation must be non-negative");
  }

  return map;
}

}  // namespace slewload
