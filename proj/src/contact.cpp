#include "slewload/contact.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace slewload {

namespace {

void check_osculation(double s) {
  if (!(s >= houpert::kOsculationMin && s <= houpert::kOsculationMax)) {
    std::ostringstream msg;
    msg << "osculation out of Houpert range: s = " << s << " not in ["
        << houpert::kOsculationMin << ", " << houpert::kOsculationMax << "]";
    throw std::domain_error(msg.str());
  }
}

}  // namespace

double hertz_deflection(double force, double ball_diameter, double osculation) {
  check_osculation(osculation);
  if (force < 0.0) throw std::invalid_argument("hertz_deflection: negative force");
  if (ball_diameter <= 0.0)
    throw std::invalid_argument("hertz_deflection: non-positive ball diameter");
  return houpert::kDeflectionCoeff *
         std::pow(1.0 - osculation, houpert::kDeflectionExponent) *
         std::pow(force, 2.0 / 3.0) / std::cbrt(ball_diameter);
}

double hertz_stiffness(double ball_diameter, double osculation, double interference) {
  check_osculation(osculation);
  if (interference <= 0.0) return 0.0;
  return houpert::kStiffnessCoeff * std::sqrt(ball_diameter) /
         std::pow(1.0 - osculation, houpert::kStiffnessExponent);
}

double series_stiffness(double stiffness_a, double stiffness_b) {
  if (stiffness_a < 0.0 || stiffness_b < 0.0)
    throw std::invalid_argument("series_stiffness: negative stiffness");
  if (stiffness_a == 0.0 || stiffness_b == 0.0) return 0.0;
  const double inv = std::pow(stiffness_a, -2.0 / 3.0) + std::pow(stiffness_b, -2.0 / 3.0);
  return std::pow(inv, -1.5);
}

double contact_force(double series_k, double delta_total) {
  if (delta_total <= 0.0 || series_k <= 0.0) return 0.0;
  return series_k * delta_total * std::sqrt(delta_total);
}

InterferenceSplit split_interference(double delta_total, double stiffness_a,
                                     double stiffness_b) {
  if (delta_total <= 0.0 || stiffness_a <= 0.0 || stiffness_b <= 0.0)
    throw std::invalid_argument("split_interference: non-positive input");
  const double k_tot = series_stiffness(stiffness_a, stiffness_b);
  InterferenceSplit split;
  split.delta_a = delta_total * std::pow(k_tot / stiffness_a, 2.0 / 3.0);
  split.delta_b = delta_total * std::pow(k_tot / stiffness_b, 2.0 / 3.0);
  return split;
}

DiagonalContactState evaluate_diagonal(double delta_total, double stiffness_a,
                                       double stiffness_b) {
  DiagonalContactState state;
  state.delta_total = delta_total;
  state.stiffness_a = stiffness_a;
  state.stiffness_b = stiffness_b;
  state.active = delta_total > 0.0 && stiffness_a > 0.0 && stiffness_b > 0.0;
  if (state.active) {
    state.series_k = series_stiffness(stiffness_a, stiffness_b);
    const auto split = split_interference(delta_total, stiffness_a, stiffness_b);
    state.delta_a = split.delta_a;
    state.delta_b = split.delta_b;
    state.force = contact_force(state.series_k, delta_total);
  } else {
    // gap: no force, split reported evenly for diagnostics
    state.delta_a = 0.5 * delta_total;
    state.delta_b = 0.5 * delta_total;
  }
  return state;
}

}  // namespace slewload
