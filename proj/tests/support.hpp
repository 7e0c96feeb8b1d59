#pragma once

#include <cmath>
#include <complex>
#include <random>

#include "rotapol/params.hpp"

namespace testsupport {

// Scaled reference set: cos^2(theta) = 1e-5 exactly, v_g = 3e3 m/s,
// l_abs = 1 cm, nu = 628.3 rad/s, R = 1 cm.
inline rotapol::MediumParams p0_medium() {
  rotapol::MediumParams p;
  p.speed_of_light = 3.0e8;
  p.probe_wavelength = 1.0e-6;
  p.gamma = 1.0e7;
  p.delta_single = 1.0e7;
  p.delta_two_photon = 0.0;
  p.coupling_gsqrt_n = std::sqrt(p.speed_of_light * p.gamma / 0.01); // l_abs = 1 cm
  const double omega = p.coupling_gsqrt_n / std::sqrt(99999.0);      // tan^2 = 1/cos2 - 1
  p.rabi_plus = omega / std::sqrt(2.0);
  p.rabi_minus = omega / std::sqrt(2.0);
  return p;
}

inline rotapol::RotationGeometry p0_geometry() {
  rotapol::RotationGeometry g;
  g.nu = 628.3;
  g.radius = 0.01;
  g.medium_length = 0.1;
  g.polariton_length = 0.3;
  return g;
}

inline bool close_rel(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

inline bool close_abs(double a, double b, double abs) { return std::abs(a - b) <= abs; }

} // namespace testsupport
