#include "rotapol/effective_model.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>

#include "rotapol/errors.hpp"

namespace rotapol {

namespace {

using cplx = std::complex<double>;

void require_finite_value(double v, const char* what) {
  if (!std::isfinite(v)) fail(Err::ConfigInvalid, std::string(what) + " must be finite");
}

// out += a * f
void axpy(ComplexField2D& out, cplx a, const ComplexField2D& f) {
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += a * f.values[i];
}

void scale(ComplexField2D& f, cplx a) {
  for (auto& v : f.values) v *= a;
}

// out += factor * (quad rho^2 + c) f
void add_potential(ComplexField2D& out, const ComplexField2D& f, cplx factor,
                   double quad, double c) {
  const TransverseGrid& g = f.grid;
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    const double y2 = g.y(iy) * g.y(iy);
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const double x = g.x(ix);
      out.at(ix, iy) += factor * (quad * (x * x + y2) + c) * f.at(ix, iy);
    }
  }
}

void apply_kz_factor(const EffectiveConfig& cfg, ComplexField2D& f, double dt) {
  if (cfg.kz_phase_rate == 0.0 && cfg.kz_damp_rate == 0.0) return;
  const cplx s = std::exp(cplx(-cfg.kz_damp_rate * dt, -cfg.kz_phase_rate * dt));
  scale(f, s);
}

double rate_common(const EffectiveConfig& cfg, const TransverseGrid& grid) {
  const double kmax2 = grid.kx_max() * grid.kx_max() + grid.ky_max() * grid.ky_max();
  // m_est = 16 bounds the angular-momentum content of intended states
  const double m_est = 16.0;
  return cfg.kinetic_coeff * kmax2 + std::abs(cfg.const_term()) +
         m_est * std::abs(cfg.omega_rot) + m_est * m_est * std::abs(cfg.lz2_rate()) +
         std::abs(cfg.kz_phase_rate) + cfg.kz_damp_rate;
}

} // namespace

void EffectiveConfig::validate() const {
  require_finite_value(kinetic_coeff, "kinetic_coeff");
  require_finite_value(omega_rot, "omega_rot");
  require_finite_value(delta_term, "delta_term");
  require_finite_value(gamma_rot.real(), "gamma_rot");
  require_finite_value(gamma_rot.imag(), "gamma_rot");
  require_finite_value(kz, "kz");
  require_finite_value(kz_phase_rate, "kz_phase_rate");
  require_finite_value(kz_damp_rate, "kz_damp_rate");
  if (kinetic_coeff <= 0.0) fail(Err::ConfigInvalid, "kinetic_coeff must be positive");
  if (kz_damp_rate < 0.0) fail(Err::ConfigInvalid, "kz_damp_rate must not be negative");
  if (include_rot_loss && gamma_rot.real() < 0.0)
    fail(Err::ConfigInvalid, "rotational loss rate must not be negative");
}

double EffectiveConfig::quad_coeff() const {
  if (potential != PotentialMode::Compensated) return 0.0;
  return omega_rot * omega_rot / (4.0 * kinetic_coeff);
}

double EffectiveConfig::const_term() const {
  return potential == PotentialMode::Full ? delta_term : 0.0;
}

cplx EffectiveConfig::lz2_rate() const {
  return cplx(include_rot_loss ? gamma_rot.real() : 0.0,
              include_mass_correction ? gamma_rot.imag() : 0.0);
}

double corner_rate(const EffectiveConfig& cfg, const TransverseGrid& grid) {
  const double cx = 0.5 * grid.extent_x, cy = 0.5 * grid.extent_y;
  return rate_common(cfg, grid) + cfg.quad_coeff() * (cx * cx + cy * cy);
}

double disk_rate(const EffectiveConfig& cfg, const TransverseGrid& grid) {
  const double r = grid.safety_radius();
  return rate_common(cfg, grid) + cfg.quad_coeff() * r * r;
}

double default_time_step(const EffectiveConfig& cfg, const TransverseGrid& grid) {
  return 0.2 / corner_rate(cfg, grid);
}

ComplexField2D apply_hamiltonian(const EffectiveConfig& cfg, const ComplexField2D& f) {
  cfg.validate();
  ComplexField2D out = laplacian_transverse(f);
  scale(out, -cfg.kinetic_coeff);
  const double shift = cfg.lz2_rate().imag();
  if (cfg.omega_rot != 0.0 || shift != 0.0) {
    ComplexField2D lzf = apply_lz_unchecked(f);
    if (cfg.omega_rot != 0.0) axpy(out, cfg.omega_rot, lzf);
    if (shift != 0.0) axpy(out, shift, apply_lz_unchecked(lzf));
  }
  const double quad = cfg.quad_coeff(), c = cfg.const_term();
  if (quad != 0.0 || c != 0.0) add_potential(out, f, 1.0, quad, c);
  return out;
}

ComplexField2D apply_rhs(const EffectiveConfig& cfg, const ComplexField2D& f) {
  cfg.validate();
  constexpr cplx I{0.0, 1.0};
  ComplexField2D out = laplacian_transverse(f);
  scale(out, I * cfg.kinetic_coeff);
  const cplx lz2 = cfg.lz2_rate();
  if (cfg.omega_rot != 0.0 || lz2 != cplx{}) {
    ComplexField2D lzf = apply_lz_unchecked(f);
    if (cfg.omega_rot != 0.0) axpy(out, -I * cfg.omega_rot, lzf);
    if (lz2 != cplx{}) axpy(out, -lz2, apply_lz_unchecked(lzf));
  }
  const double quad = cfg.quad_coeff(), c = cfg.const_term();
  if (quad != 0.0 || c != 0.0) add_potential(out, f, -I, quad, c);
  return out;
}

void step_rk4(const EffectiveConfig& cfg, ComplexField2D& f, double dt) {
  ComplexField2D k1 = apply_rhs(cfg, f);
  ComplexField2D u = f;
  axpy(u, 0.5 * dt, k1);
  ComplexField2D k2 = apply_rhs(cfg, u);
  u = f;
  axpy(u, 0.5 * dt, k2);
  ComplexField2D k3 = apply_rhs(cfg, u);
  u = f;
  axpy(u, dt, k3);
  ComplexField2D k4 = apply_rhs(cfg, u);
  const double w = dt / 6.0;
  for (std::size_t i = 0; i < f.values.size(); ++i)
    f.values[i] += w * (k1.values[i] + 2.0 * (k2.values[i] + k3.values[i]) + k4.values[i]);
  apply_kz_factor(cfg, f, dt);
  f.time += dt;
}

void step_strang(const EffectiveConfig& cfg, ComplexField2D& f, double dt) {
  cfg.validate();
  if (cfg.lz2_rate() != cplx{})
    fail(Err::UnsupportedLoss, "split-step path requires the l_z^2 rates disabled");

  const TransverseGrid& g = f.grid;
  const double quad = cfg.quad_coeff(), c = cfg.const_term();
  const double kin = cfg.kinetic_coeff, wr = cfg.omega_rot;

  auto potential_half = [&] {
    if (quad == 0.0 && c == 0.0) return;
    for (std::size_t iy = 0; iy < g.ny; ++iy) {
      const double y2 = g.y(iy) * g.y(iy);
      for (std::size_t ix = 0; ix < g.nx; ++ix) {
        const double x = g.x(ix);
        const double phase = (quad * (x * x + y2) + c) * 0.5 * dt;
        f.at(ix, iy) *= cplx(std::cos(phase), -std::sin(phase));
      }
    }
  };
  // H1 = kin kx^2 - wr y kx, diagonal in (kx, y)
  auto h1_half = [&] {
    fft::forward_x(f);
    for (std::size_t iy = 0; iy < g.ny; ++iy) {
      const double y = g.y(iy);
      for (std::size_t ix = 0; ix < g.nx; ++ix) {
        const double kx = g.kx(ix);
        const double phase = (kin * kx * kx - wr * y * kx) * 0.5 * dt;
        f.at(ix, iy) *= cplx(std::cos(phase), -std::sin(phase));
      }
    }
    fft::inverse_x(f);
  };
  // H2 = kin ky^2 + wr x ky, diagonal in (x, ky)
  auto h2_full = [&] {
    fft::forward_y(f);
    for (std::size_t iy = 0; iy < g.ny; ++iy) {
      const double ky = g.ky(iy);
      for (std::size_t ix = 0; ix < g.nx; ++ix) {
        const double phase = (kin * ky * ky + wr * g.x(ix) * ky) * dt;
        f.at(ix, iy) *= cplx(std::cos(phase), -std::sin(phase));
      }
    }
    fft::inverse_y(f);
  };

  potential_half();
  h1_half();
  h2_full();
  h1_half();
  potential_half();
  apply_kz_factor(cfg, f, dt);
  f.time += dt;
}

Trajectory evolve(const EffectiveConfig& cfg, ComplexField2D& f, double t_final,
                  const EvolveOptions& opts) {
  cfg.validate();
  f.grid.validate();
  require_finite(f);
  if (!std::isfinite(t_final) || t_final < 0.0)
    fail(Err::ConfigInvalid, "evolution time must be finite and not negative");

  const double dt_req = opts.dt > 0.0 ? opts.dt : default_time_step(cfg, f.grid);
  const double guard_rate = opts.integrator == Integrator::Rk4 ? corner_rate(cfg, f.grid)
                                                               : disk_rate(cfg, f.grid);
  if (dt_req * guard_rate > 2.0) {
    char msg[128];
    std::snprintf(msg, sizeof msg, "dt %.3e exceeds stability bound %.3e", dt_req,
                  2.0 / guard_rate);
    fail(Err::StepTooLarge, msg);
  }

  const std::size_t steps =
      t_final > 0.0 ? std::size_t(std::ceil(t_final / dt_req - 1e-12)) : 0;
  const double dt = steps > 0 ? t_final / double(steps) : 0.0;

  Trajectory traj;
  traj.dt = dt;
  traj.steps = steps;

  auto record = [&] {
    const double n2 = field_norm_sq(f);
    if (!(n2 > 0.0)) fail(Err::ZeroNorm, "field norm vanished during evolution");
    TrajectorySample s;
    s.t = f.time;
    s.norm2 = n2;
    s.x = expectation(f, Observable::X).real() / n2;
    s.y = expectation(f, Observable::Y).real() / n2;
    s.lz = expectation(f, Observable::Lz).real() / n2;
    s.lz2 = expectation(f, Observable::Lz2).real() / n2;
    s.energy = inner_product(f, apply_hamiltonian(cfg, f)).real() / n2;
    traj.samples.push_back(s);
  };

  record();
  for (std::size_t k = 1; k <= steps; ++k) {
    if (opts.integrator == Integrator::Rk4)
      step_rk4(cfg, f, dt);
    else
      step_strang(cfg, f, dt);
    if (opts.leak_check_every > 0 &&
        (k % opts.leak_check_every == 0 || k == steps)) {
      require_finite(f);
      const double leak = leakage_fraction(f);
      if (leak > opts.leak_tol) {
        char msg[128];
        std::snprintf(msg, sizeof msg, "fraction %.6e outside the safety disk at t %.6e",
                      leak, f.time);
        fail(Err::EdgeLeakage, msg);
      }
    }
    if ((opts.sample_every > 0 && k % opts.sample_every == 0) || k == steps) record();
  }
  return traj;
}

GroundStateResult ground_state(const EffectiveConfig& cfg, const TransverseGrid& grid,
                               const GroundStateOptions& opts,
                               const ComplexField2D* seed) {
  cfg.validate();
  grid.validate();
  if (cfg.lz2_rate().real() != 0.0)
    fail(Err::NonHermitianConfig, "ground-state search requires rotational loss disabled");
  const double quad = cfg.quad_coeff();
  if (quad <= 0.0 && !opts.allow_unconfined)
    fail(Err::ConfigInvalid,
         "potential does not confine; set allow_unconfined for a box-limited result");

  ComplexField2D f;
  if (seed) {
    if (!seed->grid.same_shape(grid)) fail(Err::GridMismatch, "seed grid differs");
    f = *seed;
    normalize(f);
  } else {
    const double sigma = quad > 0.0
                             ? std::pow(cfg.kinetic_coeff / (4.0 * quad), 0.25)
                             : std::min(grid.extent_x, grid.extent_y) / 8.0;
    f = make_gaussian(grid, sigma);
  }

  // In imaginary time RK4 damps every mode as long as rate * dt stays below
  // 2.78 on the negative real axis, so the default step can sit near the
  // stability edge instead of the accuracy-driven real-time default.
  const double rate = corner_rate(cfg, grid);
  const double dt = opts.dt > 0.0 ? opts.dt : 2.0 / rate;
  if (dt * rate > 2.7) {
    char msg[128];
    std::snprintf(msg, sizeof msg, "dt %.3e exceeds relaxation stability bound %.3e", dt,
                  2.7 / rate);
    fail(Err::StepTooLarge, msg);
  }

  auto imag_rhs = [&](const ComplexField2D& u) {
    ComplexField2D r = apply_hamiltonian(cfg, u);
    scale(r, -1.0);
    return r;
  };

  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    ComplexField2D k1 = imag_rhs(f);
    ComplexField2D u = f;
    axpy(u, 0.5 * dt, k1);
    ComplexField2D k2 = imag_rhs(u);
    u = f;
    axpy(u, 0.5 * dt, k2);
    ComplexField2D k3 = imag_rhs(u);
    u = f;
    axpy(u, dt, k3);
    ComplexField2D k4 = imag_rhs(u);
    const double w = dt / 6.0;
    for (std::size_t i = 0; i < f.values.size(); ++i)
      f.values[i] += w * (k1.values[i] + 2.0 * (k2.values[i] + k3.values[i]) + k4.values[i]);
    normalize(f);

    if (it % 10 == 0 || it == opts.max_iters) {
      ComplexField2D hf = apply_hamiltonian(cfg, f);
      const double e = inner_product(f, hf).real();
      axpy(hf, -e, f);
      const double res = std::sqrt(field_norm_sq(hf));
      if (res <= opts.tol * std::max(1.0, std::abs(e)))
        return GroundStateResult{std::move(f), e, it};
    }
  }
  fail(Err::NoConvergence, "imaginary-time relaxation did not reach the residual target");
}

} // namespace rotapol
