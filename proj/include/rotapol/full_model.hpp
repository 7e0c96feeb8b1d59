#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "rotapol/grid.hpp"

namespace rotapol {

// Coefficient form of the coupled three-field transverse system for the dark
// polariton psi and the two damped companions phi1, phi2.  The longitudinal
// derivative is replaced by a single mode, d/dz -> i kz.  With
// G = i sin cos (nu l_z + c_over_2kp Lap) the right-hand sides read
//   d psi  = i c_over_2kp cos^2 Lap psi - i nu sin^2 l_z psi
//            + i c_light cos kz phi1 + G phi2
//            + i delta (sin^2 psi - sin cos phi2)
//   d phi1 = i c_over_2kp Lap phi1 + i c_light cos kz psi
//            + i c_light sin kz phi2 - (gsq_n / Gamma) phi1
//   d phi2 = -i nu cos^2 l_z phi2 + i c_over_2kp sin^2 Lap phi2 + G psi
//            + i c_light sin kz phi1 - ((gsq_n + W) / Gamma) phi2
// with Gamma = gamma + i detuning and W the squared control Rabi frequency,
// which the strong-coupling approximation (default) drops against gsq_n.
// All coefficients are plain rates and lengths; the caller fixes the unit
// system.  sin_theta = 0 (no medium in the dark field) is rejected.
struct FullConfig {
  double c_over_2kp = 0.5; // c / (2 k_p)
  double c_light = 1.0;    // c, enters only the kz couplings
  double sin_theta = 0.0;  // mixing amplitudes, sin^2 + cos^2 = 1
  double cos_theta = 1.0;
  double nu = 0.0;         // rotation rate, signed
  double delta = 0.0;      // two-photon detuning
  double gamma = 0.0;      // excited-state decay rate
  double detuning = 0.0;   // single-photon detuning
  double gsq_n = 0.0;      // collective coupling g^2 n
  double kz = 0.0;         // longitudinal wavenumber
  // keep only gsq_n in the phi2 damping; off restores the exact
  // (gsq_n + control^2) / Gamma with control^2 = gsq_n cos^2 / sin^2
  bool strong_coupling = true;

  void validate() const;
  std::complex<double> gamma_total() const { return {gamma, detuning}; }
  // stiff damping rates of the companion fields
  std::complex<double> damping_phi1() const; // gsq_n / Gamma
  std::complex<double> damping_phi2() const; // flag-resolved
  double stiffness() const;                  // max |damping|
};

struct FullState {
  ComplexField2D psi;
  ComplexField2D phi1;
  ComplexField2D phi2;

  double time() const { return psi.time; }
  void require_consistent() const; // same grid everywhere
};

// Full right-hand side including the stiff damping terms, for oracles and
// diagnostics.  No leak checks.
FullState rhs_full(const FullConfig& cfg, const FullState& s);

// Companion fields slaved to psi at leading order in the adiabaticity
// parameter: phi1 from the kz coupling, then phi2 from G psi plus the kz
// feed-through of phi1.  Requires gsq_n > 0.
FullState adiabatic_init(const FullConfig& cfg, const ComplexField2D& psi);

// One step of the integrating-factor RK4: the stiff diagonal advances by its
// exact exponential, the rest by classic RK4 in the transformed frame.
void step_full(const FullConfig& cfg, FullState& s, double dt);

struct FullEvolveOptions {
  double dt = 0.0;  // <= 0 selects the automatic step
  std::size_t sample_every = 10;
  std::size_t leak_check_every = 50; // 0 disables the psi leak check
  double leak_tol = 1e-8;
};

struct FullSample {
  double t = 0.0;
  double norm2_psi = 0.0;
  double norm2_phi1 = 0.0;
  double norm2_phi2 = 0.0;
  double x = 0.0; // psi centroid
  double y = 0.0;
};

struct FullTrajectory {
  std::vector<FullSample> samples;
  double dt = 0.0;
  std::size_t steps = 0;
};

// Automatic step: the smaller of 0.1 / |damping| (the slaved manifold must be
// resolved even though the exponential itself is exact) and 0.2 over the
// largest non-stiff rate.
double default_full_time_step(const FullConfig& cfg, const TransverseGrid& grid);

FullTrajectory evolve_full(const FullConfig& cfg, FullState& s, double t_final,
                           const FullEvolveOptions& opts = {});

// L2 distance between the two fields after normalizing each.
double normalized_l2_deviation(const ComplexField2D& a, const ComplexField2D& b);

struct CompareScan {
  double gsqn_min = 0.0;
  double gsqn_max = 0.0;
  std::size_t points = 6; // log-spaced in gsq_n
};

struct ComparePoint {
  double gsq_n = 0.0;
  double epsilon = 0.0;   // |Gamma| max(rot, kinetic) rate of psi0 / gsq_n
  double deviation = 0.0; // max over checkpoints of the normalized psi distance
};

struct CompareResult {
  std::vector<ComparePoint> points;
  double slope = 0.0; // d ln(deviation) / d ln(epsilon)
};

struct CompareModelsOptions {
  double t_final = 1.0;
  std::size_t checkpoints = 5;
  double leak_tol = 1e-8;
};

// Scan gsq_n holding the mixing angle fixed (control power co-scaled), evolve
// the three-field system and the adiabatically reduced single-field model
// from the same initial state, and fit how the worst-case deviation scales
// with the adiabaticity parameter.  Transverse sector only: base.kz must be
// zero.  The reduced model runs with the rotational loss and mass correction
// implied by the scan point.
CompareResult compare_models(const FullConfig& base, const ComplexField2D& psi0,
                             const CompareScan& scan,
                             const CompareModelsOptions& opts = {});

} // namespace rotapol
