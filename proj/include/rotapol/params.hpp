#pragma once

#include <complex>
#include <optional>

#include "rotapol/constants.hpp"
#include "rotapol/errors.hpp"

namespace rotapol {

// Atomic medium and control-field inputs. Angular rates throughout; SI units
// unless a scaled (nondimensional) parameter set is supplied consistently.
struct MediumParams {
  double coupling_gsqrt_n = 0.0; // g*sqrt(n) collective coupling [rad/s]
  double rabi_plus = 0.0;        // Omega_+ [rad/s]
  double rabi_minus = 0.0;       // Omega_- [rad/s]
  double gamma = 0.0;            // excited-state coherence decay [rad/s]
  double delta_single = 0.0;     // one-photon detuning Delta [rad/s]
  double delta_two_photon = 0.0; // two-photon detuning delta [rad/s]
  double probe_wavelength = 0.0; // lambda [m]
  double speed_of_light = constants::c_vacuum; // [m/s]

  double rabi_total_sq() const { return rabi_plus * rabi_plus + rabi_minus * rabi_minus; }
  double k_probe() const;

  void validate() const; // throws Error(Err::ConfigInvalid)
};

struct RotationGeometry {
  double nu = 0.0;               // rotation rate [rad/s], sign = sense
  double radius = 0.0;           // medium radius R [m]
  double medium_length = 0.0;    // medium length L [m]
  double polariton_length = 0.0; // stored polariton length L_p [m]

  void validate() const;
};

struct MixingAngles {
  double theta = 0.0;      // tan(theta) = g*sqrt(n)/Omega
  double phi = 0.0;        // tan(phi) = Omega_-/Omega_+
  double cos2_theta = 0.0; // cos^2(theta)
  double sin2_theta = 0.0; // constructed as 1 - cos2_theta
};

// Closed-form quantities of the dark-state polariton. Fields that lose meaning
// for a parameter set (nu = 0, Delta = 0, vanishing coupling) are left empty
// instead of holding infinities.
struct DerivedQuantities {
  MediumParams medium;
  RotationGeometry geom;
  MixingAngles angles;

  double v_group = 0.0;  // c cos^2(theta) [m/s]
  double m_perp = 0.0;   // hbar k_p / v_g [kg]
  double b_field = 0.0;  // 2 m_perp nu sin^2(theta) [kg/s], signed like nu
  double omega_c = 0.0;  // b_field / m_perp [rad/s]
  double v_rot = 0.0;    // nu * R [m/s]

  std::optional<double> l_abs;     // c gamma / (g^2 n) [m]
  std::optional<double> m_par;     // hbar gamma / (2 v_g l_abs Delta) [kg]
  std::optional<double> d_diff;    // v_g * l_abs [m^2/s]
  std::optional<std::complex<double>> gamma_rot; // rotational loss rate [rad/s]
  std::optional<double> l_mag;     // sqrt(hbar/|B|) [m]
  std::optional<double> degeneracy; // R^2 / (2 l_mag^2)
};

struct FeasibilityReport {
  double nu_min = 0.0;       // lower adiabaticity bound [rad/s]
  double nu_max_scale = 0.0; // upper adiabaticity scale [rad/s]
  double margin_low = 0.0;   // |nu| / nu_min
  double margin_high = 0.0;  // nu_max_scale / |nu|
  double loss_ratio = 0.0;   // Re(gamma_rot) / |omega_c|
  double margin = 10.0;      // required factor M
  bool feasible = false;
};

enum class FillingConvention {
  PaperLiteral, // (1/2) N (lambda/R) (v_g/v_rot)
  DiskDensity,  // N / degeneracy
};

MixingAngles mixing_angles(const MediumParams& p);

DerivedQuantities derive_quantities(const MediumParams& p, const RotationGeometry& g);

double filling_factor(const DerivedQuantities& d, double n_polaritons, FillingConvention conv);

// Beam offset rho and propagation length L; returns omega_c * rho * L / v_g,
// signed by the rotation sense.
double deflection_angle(const DerivedQuantities& d, double rho, double length);

FeasibilityReport adiabaticity_window(const DerivedQuantities& d, double margin = 10.0);

} // namespace rotapol
