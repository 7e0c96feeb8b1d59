#include "rotapol/full_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>

#include "rotapol/effective_model.hpp"
#include "rotapol/errors.hpp"

namespace rotapol {

namespace {

using cd = std::complex<double>;
constexpr cd kI{0.0, 1.0};

bool finite(double v) { return std::isfinite(v); }

std::array<std::vector<cd>*, 3> arrays(FullState& s) {
  return {&s.psi.values, &s.phi1.values, &s.phi2.values};
}

std::array<const std::vector<cd>*, 3> arrays(const FullState& s) {
  return {&s.psi.values, &s.phi1.values, &s.phi2.values};
}

void set_times(FullState& s, double t) {
  s.psi.time = t;
  s.phi1.time = t;
  s.phi2.time = t;
}

// out = a + w * b, per field
void axpy(FullState& out, const FullState& a, double w, const FullState& b) {
  auto po = arrays(out);
  auto pa = arrays(a);
  auto pb = arrays(b);
  for (int f = 0; f < 3; ++f) {
    const std::size_t n = pa[f]->size();
    for (std::size_t i = 0; i < n; ++i) (*po[f])[i] = (*pa[f])[i] + w * (*pb[f])[i];
  }
}

// multiply the companion fields by scalars, the dark field stays untouched
void scale_companions(FullState& s, cd f1, cd f2) {
  for (auto& v : s.phi1.values) v *= f1;
  for (auto& v : s.phi2.values) v *= f2;
}

// Right-hand side shared by the oracle-facing rhs_full and the integrator,
// which handles the stiff damping through its exact exponential instead.
FullState rhs_impl(const FullConfig& cfg, const FullState& s, bool include_damping) {
  const double sc = cfg.sin_theta * cfg.cos_theta;
  const double s2 = cfg.sin_theta * cfg.sin_theta;
  const double c2 = cfg.cos_theta * cfg.cos_theta;

  const cd psi_lap = kI * cfg.c_over_2kp * c2;
  const cd psi_lz = -kI * cfg.nu * s2;
  const cd psi_phi1 = kI * cfg.c_light * cfg.cos_theta * cfg.kz;
  const cd g_lz = kI * sc * cfg.nu;
  const cd g_lap = kI * sc * cfg.c_over_2kp;
  const cd psi_delta_self = kI * cfg.delta * s2;
  const cd psi_delta_cross = -kI * cfg.delta * sc;
  const cd phi1_lap = kI * cfg.c_over_2kp;
  const cd phi1_phi2 = kI * cfg.c_light * cfg.sin_theta * cfg.kz;
  const cd phi2_lz = -kI * cfg.nu * c2;
  const cd phi2_lap = kI * cfg.c_over_2kp * s2;
  const cd damp1 = include_damping ? cfg.damping_phi1() : cd{0.0, 0.0};
  const cd damp2 = include_damping ? cfg.damping_phi2() : cd{0.0, 0.0};

  const ComplexField2D lap_psi = laplacian_transverse(s.psi);
  const ComplexField2D lap_phi1 = laplacian_transverse(s.phi1);
  const ComplexField2D lap_phi2 = laplacian_transverse(s.phi2);
  const bool need_lz = cfg.nu != 0.0;
  ComplexField2D lz_psi, lz_phi2;
  if (need_lz) {
    lz_psi = apply_lz_unchecked(s.psi);
    lz_phi2 = apply_lz_unchecked(s.phi2);
  }

  FullState out{ComplexField2D(s.psi.grid), ComplexField2D(s.psi.grid),
                ComplexField2D(s.psi.grid)};
  set_times(out, s.time());
  const std::size_t n = s.psi.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    const cd psi = s.psi.values[i];
    const cd phi1 = s.phi1.values[i];
    const cd phi2 = s.phi2.values[i];
    cd dpsi = psi_lap * lap_psi.values[i] + psi_phi1 * phi1 + g_lap * lap_phi2.values[i] +
              psi_delta_self * psi + psi_delta_cross * phi2;
    cd dphi1 = phi1_lap * lap_phi1.values[i] + psi_phi1 * psi + phi1_phi2 * phi2 - damp1 * phi1;
    cd dphi2 = phi2_lap * lap_phi2.values[i] + g_lap * lap_psi.values[i] + phi1_phi2 * phi1 -
               damp2 * phi2;
    if (need_lz) {
      dpsi += psi_lz * lz_psi.values[i] + g_lz * lz_phi2.values[i];
      dphi2 += phi2_lz * lz_phi2.values[i] + g_lz * lz_psi.values[i];
    }
    out.psi.values[i] = dpsi;
    out.phi1.values[i] = dphi1;
    out.phi2.values[i] = dphi2;
  }
  return out;
}

double nonstiff_rate(const FullConfig& cfg, const TransverseGrid& grid) {
  const double k2 = grid.kx_max() * grid.kx_max() + grid.ky_max() * grid.ky_max();
  return cfg.c_over_2kp * k2 + 16.0 * std::abs(cfg.nu) +
         cfg.c_light * std::abs(cfg.kz) * (std::abs(cfg.sin_theta) + std::abs(cfg.cos_theta)) +
         std::abs(cfg.delta);
}

} // namespace

void FullConfig::validate() const {
  if (!(finite(c_over_2kp) && c_over_2kp > 0.0))
    fail(Err::ConfigInvalid, "photon dispersion coefficient must be positive");
  if (!(finite(c_light) && c_light >= 0.0))
    fail(Err::ConfigInvalid, "light speed must be non-negative");
  if (!(finite(sin_theta) && finite(cos_theta)))
    fail(Err::ConfigInvalid, "mixing amplitudes must be finite");
  const double unit = sin_theta * sin_theta + cos_theta * cos_theta;
  if (std::abs(unit - 1.0) > 1e-12)
    fail(Err::ConfigInvalid, "mixing amplitudes must satisfy sin^2 + cos^2 = 1");
  if (!(sin_theta > 0.0) || cos_theta < 0.0)
    fail(Err::ConfigInvalid, "mixing angle must lie in (0, pi/2]: a dark field needs a medium");
  if (!(finite(nu) && finite(delta) && finite(kz)))
    fail(Err::ConfigInvalid, "rates must be finite");
  if (!(finite(gamma) && gamma >= 0.0))
    fail(Err::ConfigInvalid, "decay rate must be non-negative");
  if (!finite(detuning)) fail(Err::ConfigInvalid, "detuning must be finite");
  if (!(finite(gsq_n) && gsq_n >= 0.0))
    fail(Err::ConfigInvalid, "collective coupling must be non-negative");
  if (gsq_n > 0.0 && std::abs(gamma_total()) == 0.0)
    fail(Err::ConfigInvalid, "damping gsq_n / Gamma needs gamma or detuning nonzero");
}

std::complex<double> FullConfig::damping_phi1() const {
  if (gsq_n == 0.0) return {0.0, 0.0};
  return gsq_n / gamma_total();
}

std::complex<double> FullConfig::damping_phi2() const {
  if (gsq_n == 0.0) return {0.0, 0.0};
  if (strong_coupling) return gsq_n / gamma_total();
  const double control_sq = gsq_n * cos_theta * cos_theta / (sin_theta * sin_theta);
  return (gsq_n + control_sq) / gamma_total();
}

double FullConfig::stiffness() const {
  return std::max(std::abs(damping_phi1()), std::abs(damping_phi2()));
}

void FullState::require_consistent() const {
  if (!psi.grid.same_shape(phi1.grid) || !psi.grid.same_shape(phi2.grid))
    fail(Err::GridMismatch, "three-field state spans different grids");
  psi.grid.validate();
}

FullState rhs_full(const FullConfig& cfg, const FullState& s) {
  cfg.validate();
  s.require_consistent();
  require_finite(s.psi);
  require_finite(s.phi1);
  require_finite(s.phi2);
  return rhs_impl(cfg, s, true);
}

FullState adiabatic_init(const FullConfig& cfg, const ComplexField2D& psi) {
  cfg.validate();
  psi.grid.validate();
  require_finite(psi);
  if (!(cfg.gsq_n > 0.0))
    fail(Err::ConfigInvalid, "adiabatic initialization needs a dissipative medium");
  const cd slave1 = 1.0 / cfg.damping_phi1();
  const cd slave2 = 1.0 / cfg.damping_phi2();
  const double sc = cfg.sin_theta * cfg.cos_theta;

  FullState s{psi, ComplexField2D(psi.grid), ComplexField2D(psi.grid)};
  set_times(s, psi.time);

  const cd kz_psi = kI * cfg.c_light * cfg.cos_theta * cfg.kz;
  for (std::size_t i = 0; i < psi.values.size(); ++i)
    s.phi1.values[i] = slave1 * kz_psi * psi.values[i];

  const ComplexField2D lap_psi = laplacian_transverse(psi);
  ComplexField2D lz_psi;
  const bool need_lz = cfg.nu != 0.0 && sc != 0.0;
  if (need_lz) lz_psi = apply_lz_unchecked(psi);
  const cd g_lap = kI * sc * cfg.c_over_2kp;
  const cd g_lz = kI * sc * cfg.nu;
  const cd kz_phi1 = kI * cfg.c_light * cfg.sin_theta * cfg.kz;
  for (std::size_t i = 0; i < psi.values.size(); ++i) {
    cd drive = g_lap * lap_psi.values[i] + kz_phi1 * s.phi1.values[i];
    if (need_lz) drive += g_lz * lz_psi.values[i];
    s.phi2.values[i] = slave2 * drive;
  }
  return s;
}

void step_full(const FullConfig& cfg, FullState& s, double dt) {
  // Lawson scheme: v = exp(-L t) u turns the stiff diagonal into exact
  // exponential factors and leaves classic RK4 for the couplings.
  const cd lam1 = -cfg.damping_phi1();
  const cd lam2 = -cfg.damping_phi2();
  const cd e1_full = std::exp(lam1 * dt);
  const cd e2_full = std::exp(lam2 * dt);
  const cd e1_half = std::exp(lam1 * (0.5 * dt));
  const cd e2_half = std::exp(lam2 * (0.5 * dt));
  const double t0 = s.time();

  const FullState k1 = rhs_impl(cfg, s, false);

  FullState stage = s;
  axpy(stage, s, 0.5 * dt, k1);
  scale_companions(stage, e1_half, e2_half);
  const FullState k2 = rhs_impl(cfg, stage, false);

  FullState half = s;
  scale_companions(half, e1_half, e2_half);
  axpy(stage, half, 0.5 * dt, k2);
  const FullState k3 = rhs_impl(cfg, stage, false);

  FullState full = s;
  scale_companions(full, e1_full, e2_full);
  {
    FullState k3s = k3;
    scale_companions(k3s, e1_half, e2_half);
    axpy(stage, full, dt, k3s);
  }
  const FullState k4 = rhs_impl(cfg, stage, false);

  auto ps = arrays(s);
  auto pf = arrays(full);
  auto p1 = arrays(k1);
  auto p2 = arrays(k2);
  auto p3 = arrays(k3);
  auto p4 = arrays(k4);
  const std::array<cd, 3> ef{cd{1.0, 0.0}, e1_full, e2_full};
  const std::array<cd, 3> eh{cd{1.0, 0.0}, e1_half, e2_half};
  const double w = dt / 6.0;
  for (int f = 0; f < 3; ++f) {
    const std::size_t n = ps[f]->size();
    for (std::size_t i = 0; i < n; ++i)
      (*ps[f])[i] = (*pf[f])[i] + w * (ef[f] * (*p1[f])[i] +
                                       2.0 * eh[f] * ((*p2[f])[i] + (*p3[f])[i]) + (*p4[f])[i]);
  }
  set_times(s, t0 + dt);
}

double default_full_time_step(const FullConfig& cfg, const TransverseGrid& grid) {
  cfg.validate();
  grid.validate();
  double dt = 0.2 / nonstiff_rate(cfg, grid);
  const double stiff = cfg.stiffness();
  if (stiff > 0.0) dt = std::min(dt, 0.1 / stiff);
  return dt;
}

FullTrajectory evolve_full(const FullConfig& cfg, FullState& s, double t_final,
                           const FullEvolveOptions& opts) {
  cfg.validate();
  s.require_consistent();
  if (!(finite(t_final) && t_final >= 0.0))
    fail(Err::ConfigInvalid, "evolution time must be non-negative");
  if (opts.sample_every == 0) fail(Err::ConfigInvalid, "sample cadence must be positive");

  double dt = opts.dt > 0.0 ? opts.dt : default_full_time_step(cfg, s.psi.grid);
  const double stiff = cfg.stiffness();
  if (stiff > 0.0 && dt * stiff > 0.1 * (1.0 + 1e-9))
    fail(Err::StepTooLarge, "time step does not resolve the slaved companion dynamics");
  if (dt * nonstiff_rate(cfg, s.psi.grid) > 2.0)
    fail(Err::StepTooLarge, "time step exceeds the transverse stability limit");

  std::size_t steps = 0;
  if (t_final > 0.0) {
    steps = std::size_t(std::ceil(t_final / dt - 1e-12));
    if (steps == 0) steps = 1;
    dt = t_final / double(steps);
  }

  FullTrajectory traj;
  traj.dt = dt;
  traj.steps = steps;

  auto check = [&]() {
    require_finite(s.psi);
    require_finite(s.phi1);
    require_finite(s.phi2);
    if (opts.leak_check_every != 0 && field_norm_sq(s.psi) > 0.0 &&
        leakage_fraction(s.psi) > opts.leak_tol)
      fail(Err::EdgeLeakage, "dark field reached the edge of the safety disk");
  };
  auto record = [&]() {
    FullSample smp;
    smp.t = s.time();
    smp.norm2_psi = field_norm_sq(s.psi);
    smp.norm2_phi1 = field_norm_sq(s.phi1);
    smp.norm2_phi2 = field_norm_sq(s.phi2);
    const double total = smp.norm2_psi + smp.norm2_phi1 + smp.norm2_phi2;
    if (!(total > 0.0)) fail(Err::ZeroNorm, "three-field state lost all its norm");
    if (smp.norm2_psi > 0.0) {
      smp.x = expectation(s.psi, Observable::X).real() / smp.norm2_psi;
      smp.y = expectation(s.psi, Observable::Y).real() / smp.norm2_psi;
    }
    traj.samples.push_back(smp);
  };

  check();
  record();
  for (std::size_t step = 1; step <= steps; ++step) {
    step_full(cfg, s, dt);
    const std::size_t cadence = opts.leak_check_every == 0 ? 0 : opts.leak_check_every;
    if (cadence != 0 && (step % cadence == 0)) check();
    if (step == steps || step % opts.sample_every == 0) {
      require_finite(s.psi);
      record();
    }
  }
  return traj;
}

double normalized_l2_deviation(const ComplexField2D& a, const ComplexField2D& b) {
  if (!a.grid.same_shape(b.grid))
    fail(Err::GridMismatch, "deviation needs fields on the same grid");
  const double na = field_norm_sq(a);
  const double nb = field_norm_sq(b);
  if (!(na > 0.0) || !(nb > 0.0)) fail(Err::ZeroNorm, "deviation of a zero field");
  const double overlap = inner_product(a, b).real() / std::sqrt(na * nb);
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * overlap));
}

CompareResult compare_models(const FullConfig& base, const ComplexField2D& psi0,
                             const CompareScan& scan, const CompareModelsOptions& opts) {
  base.validate();
  psi0.grid.validate();
  require_finite(psi0);
  if (base.kz != 0.0)
    fail(Err::ConfigInvalid, "model comparison covers the transverse sector, kz must be zero");
  if (!(scan.gsqn_min > 0.0) || !(scan.gsqn_max > scan.gsqn_min))
    fail(Err::ConfigInvalid, "scan needs 0 < gsqn_min < gsqn_max");
  if (scan.points < 2) fail(Err::ConfigInvalid, "scan needs at least two points");
  if (!(opts.t_final > 0.0) || opts.checkpoints == 0)
    fail(Err::ConfigInvalid, "comparison needs a positive horizon and checkpoints");

  const double n2 = field_norm_sq(psi0);
  if (!(n2 > 0.0)) fail(Err::ZeroNorm, "comparison needs a nonzero initial state");
  const double s2 = base.sin_theta * base.sin_theta;
  const double c2 = base.cos_theta * base.cos_theta;
  const double m_rms =
      std::sqrt(std::max(0.0, expectation(psi0, Observable::Lz2).real() / n2));
  const double k2_mean = 2.0 * expectation(psi0, Observable::KineticPerp).real() / n2;
  const double rate_psi =
      std::max(std::abs(base.nu) * s2 * m_rms, base.c_over_2kp * c2 * k2_mean);
  if (!(rate_psi > 0.0))
    fail(Err::ConfigInvalid, "initial state has no transverse dynamics to compare");

  const cd big_gamma = base.gamma_total();
  const double seg = opts.t_final / double(opts.checkpoints);

  CompareResult result;
  for (std::size_t p = 0; p < scan.points; ++p) {
    const double frac = double(p) / double(scan.points - 1);
    const double g = scan.gsqn_min * std::pow(scan.gsqn_max / scan.gsqn_min, frac);

    FullConfig fc = base;
    fc.gsq_n = g;

    EffectiveConfig ec;
    ec.kinetic_coeff = base.c_over_2kp * c2;
    ec.omega_rot = base.nu * s2;
    // eliminating the verbatim three-field system puts the two-photon shift
    // into the reduced Hamiltonian with a minus sign
    ec.delta_term = -base.delta * s2;
    ec.potential = PotentialMode::Full;
    ec.include_rot_loss = true;
    ec.include_mass_correction = true;
    ec.gamma_rot = base.nu * base.nu * s2 * c2 * (1.0 / fc.damping_phi2());

    FullState fs = adiabatic_init(fc, psi0);
    ComplexField2D ef = psi0;

    FullEvolveOptions fopts;
    fopts.leak_tol = opts.leak_tol;
    fopts.sample_every = std::size_t(-1);
    EvolveOptions eopts;
    eopts.integrator = Integrator::Rk4;
    eopts.leak_tol = opts.leak_tol;
    eopts.sample_every = std::size_t(-1);

    double deviation = 0.0;
    for (std::size_t k = 0; k < opts.checkpoints; ++k) {
      evolve_full(fc, fs, seg, fopts);
      evolve(ec, ef, seg, eopts);
      deviation = std::max(deviation, normalized_l2_deviation(fs.psi, ef));
    }

    ComparePoint pt;
    pt.gsq_n = g;
    pt.epsilon = std::abs(big_gamma) * rate_psi / g;
    pt.deviation = deviation;
    if (!(pt.deviation > 0.0))
      fail(Err::NumericsFailure, "model deviation vanished, nothing to fit");
    result.points.push_back(pt);
  }

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = double(result.points.size());
  for (const auto& pt : result.points) {
    const double x = std::log(pt.epsilon);
    const double y = std::log(pt.deviation);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  if (!(std::abs(den) > 0.0)) fail(Err::NumericsFailure, "degenerate scan spacing");
  result.slope = (n * sxy - sx * sy) / den;
  return result;
}

} // namespace rotapol
