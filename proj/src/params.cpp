#include "rotapol/params.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace rotapol {

const char* err_name(Err e) {
  switch (e) {
    case Err::ConfigInvalid: return "ConfigInvalid";
    case Err::ZeroControlField: return "ZeroControlField";
    case Err::DegenerateGroupVelocity: return "DegenerateGroupVelocity";
    case Err::UndefinedField: return "UndefinedField";
    case Err::NonFiniteField: return "NonFiniteField";
    case Err::GridMismatch: return "GridMismatch";
    case Err::EdgeLeakage: return "EdgeLeakage";
    case Err::ZeroNorm: return "ZeroNorm";
    case Err::BadMagic: return "BadMagic";
    case Err::VersionMismatch: return "VersionMismatch";
    case Err::TruncatedFile: return "TruncatedFile";
    case Err::StepTooLarge: return "StepTooLarge";
    case Err::UnsupportedLoss: return "UnsupportedLoss";
    case Err::NoConvergence: return "NoConvergence";
    case Err::NonHermitianConfig: return "NonHermitianConfig";
    case Err::EmptyInput: return "EmptyInput";
    case Err::InsufficientSamples: return "InsufficientSamples";
    case Err::DegenerateOrbit: return "DegenerateOrbit";
    case Err::AmbiguousRotation: return "AmbiguousRotation";
    case Err::NonPositiveNorm: return "NonPositiveNorm";
    case Err::NumericsFailure: return "NumericsFailure";
    case Err::IoError: return "IoError";
  }
  return "UnknownError";
}

int err_exit_code(Err e) {
  switch (e) {
    case Err::ConfigInvalid:
    case Err::ZeroControlField:
    case Err::UnsupportedLoss:
    case Err::NonHermitianConfig:
      return 2;
    case Err::IoError:
    case Err::BadMagic:
    case Err::VersionMismatch:
    case Err::TruncatedFile:
      return 4;
    default:
      return 3;
  }
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) fail(Err::ConfigInvalid, what);
}

bool finite(double x) { return std::isfinite(x); }

} // namespace

double MediumParams::k_probe() const { return 2.0 * M_PI / probe_wavelength; }

void MediumParams::validate() const {
  require(finite(coupling_gsqrt_n) && coupling_gsqrt_n >= 0.0, "coupling_gsqrt_n must be >= 0");
  require(finite(rabi_plus) && rabi_plus >= 0.0, "rabi_plus must be >= 0");
  require(finite(rabi_minus) && rabi_minus >= 0.0, "rabi_minus must be >= 0");
  require(finite(gamma) && gamma >= 0.0, "gamma must be >= 0");
  require(finite(delta_single), "delta_single must be finite");
  require(finite(delta_two_photon), "delta_two_photon must be finite");
  require(finite(probe_wavelength) && probe_wavelength > 0.0, "probe_wavelength must be > 0");
  require(finite(speed_of_light) && speed_of_light > 0.0, "speed_of_light must be > 0");
}

void RotationGeometry::validate() const {
  require(finite(nu), "nu must be finite");
  require(finite(radius) && radius > 0.0, "radius must be > 0");
  require(finite(medium_length) && medium_length > 0.0, "medium_length must be > 0");
  require(finite(polariton_length) && polariton_length >= 0.0, "polariton_length must be >= 0");
}

MixingAngles mixing_angles(const MediumParams& p) {
  p.validate();
  const double omega_sq = p.rabi_total_sq();
  if (omega_sq <= 0.0) fail(Err::ZeroControlField, "both control Rabi frequencies are zero");
  const double gsq = p.coupling_gsqrt_n * p.coupling_gsqrt_n;

  MixingAngles a;
  a.theta = std::atan2(p.coupling_gsqrt_n, std::sqrt(omega_sq));
  a.phi = std::atan2(p.rabi_minus, p.rabi_plus);
  a.cos2_theta = omega_sq / (omega_sq + gsq);
  a.sin2_theta = 1.0 - a.cos2_theta; // exact complement by construction
  return a;
}

DerivedQuantities derive_quantities(const MediumParams& p, const RotationGeometry& g) {
  g.validate();

  DerivedQuantities d;
  d.medium = p;
  d.geom = g;
  d.angles = mixing_angles(p);

  if (d.angles.cos2_theta <= 0.0)
    fail(Err::DegenerateGroupVelocity, "cos^2(theta) underflowed to zero; v_g undefined");

  const double c = p.speed_of_light;
  const double s2 = d.angles.sin2_theta;
  const double c2 = d.angles.cos2_theta;
  const double gsq_n = p.coupling_gsqrt_n * p.coupling_gsqrt_n;

  d.v_group = c * c2;
  d.m_perp = constants::hbar * p.k_probe() / d.v_group;
  d.b_field = 2.0 * d.m_perp * g.nu * s2;
  d.omega_c = d.b_field / d.m_perp;
  d.v_rot = g.nu * g.radius;

  if (gsq_n > 0.0 && p.gamma > 0.0) {
    const double l_abs = c * p.gamma / gsq_n;
    d.l_abs = l_abs;
    d.d_diff = d.v_group * l_abs;
    d.gamma_rot = std::complex<double>(1.0, p.delta_single / p.gamma) *
                  ((l_abs / d.v_group) * g.nu * g.nu * s2 * c2 * c2);
    if (p.delta_single != 0.0)
      d.m_par = constants::hbar * p.gamma / (2.0 * d.v_group * l_abs * p.delta_single);
  }

  if (d.b_field != 0.0) {
    const double l_mag_sq = constants::hbar / std::abs(d.b_field);
    d.l_mag = std::sqrt(l_mag_sq);
    d.degeneracy = g.radius * g.radius / (2.0 * l_mag_sq);
  }
  return d;
}

double filling_factor(const DerivedQuantities& d, double n_polaritons, FillingConvention conv) {
  if (!(std::isfinite(n_polaritons) && n_polaritons >= 0.0))
    fail(Err::ConfigInvalid, "n_polaritons must be >= 0");
  if (d.b_field == 0.0 || !d.degeneracy)
    fail(Err::UndefinedField, "filling factor undefined at zero magnetic field");

  switch (conv) {
    case FillingConvention::PaperLiteral:
      return 0.5 * n_polaritons * (d.medium.probe_wavelength / d.geom.radius) *
             (d.v_group / std::abs(d.v_rot));
    case FillingConvention::DiskDensity:
      return n_polaritons / *d.degeneracy;
  }
  fail(Err::ConfigInvalid, "unknown filling convention");
}

double deflection_angle(const DerivedQuantities& d, double rho, double length) {
  if (!(std::isfinite(rho) && rho >= 0.0)) fail(Err::ConfigInvalid, "rho must be >= 0");
  if (!(std::isfinite(length) && length >= 0.0)) fail(Err::ConfigInvalid, "length must be >= 0");
  return d.omega_c * rho * length / d.v_group;
}

FeasibilityReport adiabaticity_window(const DerivedQuantities& d, double margin) {
  if (!(std::isfinite(margin) && margin > 0.0)) fail(Err::ConfigInvalid, "margin must be > 0");
  if (!d.l_abs) fail(Err::UndefinedField, "adiabaticity window needs l_abs (coupling and gamma > 0)");
  if (d.geom.polariton_length <= 0.0)
    fail(Err::ConfigInvalid, "adiabaticity window needs polariton_length > 0");

  const double l_abs = *d.l_abs;
  const double rate = d.v_group / l_abs;
  const double c2 = d.angles.cos2_theta;
  const double ratio = l_abs / d.geom.polariton_length;
  const double abs_nu = std::abs(d.geom.nu);

  FeasibilityReport r;
  r.margin = margin;
  r.nu_min = 0.5 * rate * ratio * ratio;
  r.nu_max_scale = rate / (c2 * c2);
  r.margin_low = abs_nu / r.nu_min;
  r.margin_high = abs_nu > 0.0 ? r.nu_max_scale / abs_nu
                               : std::numeric_limits<double>::infinity();
  // Closed form of Re(gamma_rot)/|omega_c|; well defined as nu -> 0.
  r.loss_ratio = 0.5 * (l_abs / d.v_group) * abs_nu * c2 * c2;
  r.feasible = r.margin_low > margin && r.margin_high > margin && r.loss_ratio < 1.0 / margin;
  return r;
}

} // namespace rotapol
