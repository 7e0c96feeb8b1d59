#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "rotapol/grid.hpp"

namespace rotapol {

// Which parts of the co-rotating-frame potential enter the Hamiltonian.
//   Full        : the gauge-quadratic and the compensating trap cancel exactly;
//                 what remains is kinetic + omega_rot L_z + the two-photon shift.
//   Compensated : the trap is switched off while the gauge quadratic stays,
//                 leaving a Landau Hamiltonian with cyclotron frequency
//                 2 * omega_rot.
//   None        : no scalar potential at all (kinetic + omega_rot L_z).
enum class PotentialMode { Full, Compensated, None };

// Coefficient form of the effective transverse field equation
//   i d/dt psi = [ -kinetic_coeff Lap + omega_rot l_z + quad rho^2 + const ] psi
//                - i lz2_rate l_z^2 psi
// with l_z = -i (x d_y - y d_x) (integer eigenvalues).  All coefficients are
// frequencies or carry explicit powers of length; no hbar appears.  The
// longitudinal sector enters only through exact per-step scalar factors
// exp(-(i kz_phase_rate + kz_damp_rate) dt).
struct EffectiveConfig {
  double kinetic_coeff = 0.5;  // hbar / (2 m_perp), i.e. v_g / (2 k_p)
  double omega_rot = 0.0;      // nu sin^2(theta), signed by rotation sense
  double delta_term = 0.0;     // two-photon shift frequency, delta sin^2(theta)
  PotentialMode potential = PotentialMode::Full;

  bool include_rot_loss = false;        // real part of gamma_rot (decay)
  bool include_mass_correction = false; // imaginary part (Hermitian l_z^2 shift)
  std::complex<double> gamma_rot{0.0, 0.0}; // rotational l_z^2 rate

  double kz = 0.0;             // longitudinal wavenumber, bookkeeping only
  double kz_phase_rate = 0.0;  // scalar phase advance rate
  double kz_damp_rate = 0.0;   // scalar amplitude decay rate, D_par kz^2

  void validate() const;

  // mode-resolved rho^2 coefficient; positive only in Compensated mode
  double quad_coeff() const;
  // mode-resolved constant frequency offset
  double const_term() const;
  // flag-resolved l_z^2 amplitude rate: real part decays, imaginary part is a
  // Hermitian energy shift
  std::complex<double> lz2_rate() const;
};

// Largest frequency on the grid, using the box corner for the quadratic term.
// Controls RK4 stability and the automatic step.
double corner_rate(const EffectiveConfig& cfg, const TransverseGrid& grid);
// Same, but with the quadratic term capped at the safety disk where fields are
// required to live.  Controls the accuracy guard for the split-step path.
double disk_rate(const EffectiveConfig& cfg, const TransverseGrid& grid);
// 0.2 / corner_rate
double default_time_step(const EffectiveConfig& cfg, const TransverseGrid& grid);

// (H / hbar) f: the Hermitian part only, including the mass-correction l_z^2
// shift when enabled.  No leak checks; frequency units.
ComplexField2D apply_hamiltonian(const EffectiveConfig& cfg, const ComplexField2D& f);
// d f / dt = -i (H/hbar) f - Re(lz2_rate) l_z^2 f, without the kz scalars
ComplexField2D apply_rhs(const EffectiveConfig& cfg, const ComplexField2D& f);

// Classic RK4 step on apply_rhs, then the exact kz scalar factor.
void step_rk4(const EffectiveConfig& cfg, ComplexField2D& f, double dt);
// Symmetric split step V/2 . H1/2 . H2 . H1/2 . V/2 with H1 diagonal in
// (kx, y) and H2 in (x, ky); every stage is a pure phase, so the norm is
// preserved to roundoff.  Throws UnsupportedLoss if any l_z^2 rate is active.
void step_strang(const EffectiveConfig& cfg, ComplexField2D& f, double dt);

enum class Integrator { Strang, Rk4 };

struct EvolveOptions {
  double dt = 0.0;  // <= 0 selects default_time_step
  Integrator integrator = Integrator::Strang;
  std::size_t sample_every = 10;     // record every N steps (plus first/last)
  std::size_t leak_check_every = 50; // finite + leakage check cadence
  double leak_tol = 1e-8;
};

// Norm-weighted moments of the evolving field; moments are normalized by the
// instantaneous norm so they stay meaningful under loss.  energy is
// Re<H>/hbar in frequency units.
struct TrajectorySample {
  double t = 0.0;
  double norm2 = 0.0;
  double x = 0.0;
  double y = 0.0;
  double lz = 0.0;
  double lz2 = 0.0;
  double energy = 0.0;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  double dt = 0.0;         // actual step after rounding to land on t_final
  std::size_t steps = 0;
};

// Advance f in place to f.time + t_final and record sampled moments.
Trajectory evolve(const EffectiveConfig& cfg, ComplexField2D& f, double t_final,
                  const EvolveOptions& opts = {});

struct GroundStateOptions {
  double tol = 1e-8;           // residual ||(H - E) f|| <= tol * max(1, |E|)
  std::size_t max_iters = 20000;
  bool allow_unconfined = false; // permit quad_coeff() == 0 (box-limited result)
  double dt = 0.0;             // imaginary-time step; <= 0 selects default
};

struct GroundStateResult {
  ComplexField2D state;
  double energy = 0.0;     // Re<H>/hbar at convergence
  std::size_t iterations = 0;
};

// Imaginary-time relaxation with per-step renormalization.  Requires a
// Hermitian configuration (rotational loss off); the kz scalars are ignored.
GroundStateResult ground_state(const EffectiveConfig& cfg, const TransverseGrid& grid,
                               const GroundStateOptions& opts = {},
                               const ComplexField2D* seed = nullptr);

} // namespace rotapol
