#include "rotapol/observables.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>

#include "rotapol/errors.hpp"

namespace rotapol {

namespace {

void require_finite_samples(const std::vector<TrajectorySample>& samples) {
  for (const auto& s : samples)
    if (!std::isfinite(s.t) || !std::isfinite(s.x) || !std::isfinite(s.y) ||
        !std::isfinite(s.norm2))
      fail(Err::NumericsFailure, "trajectory samples must be finite");
}

double wrap_angle(double a) {
  return std::remainder(a, 2.0 * M_PI);
}

// least-squares slope of y against x
double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  if (den <= 0.0) fail(Err::NumericsFailure, "time samples do not span an interval");
  return (n * sxy - sx * sy) / den;
}

} // namespace

Centroid centroid(const ComplexField2D& f) {
  const double n2 = field_norm_sq(f);
  if (n2 <= 0.0) fail(Err::ZeroNorm, "centroid of a zero field");
  return Centroid{expectation(f, Observable::X).real() / n2,
                  expectation(f, Observable::Y).real() / n2};
}

CyclotronFit fit_cyclotron(const std::vector<TrajectorySample>& samples,
                           const CyclotronFitOptions& opts) {
  if (samples.empty()) fail(Err::EmptyInput, "no trajectory samples");
  if (samples.size() < 8)
    fail(Err::InsufficientSamples, "circle fit needs at least 8 samples");
  require_finite_samples(samples);

  // center the data for conditioning
  double mx = 0.0, my = 0.0;
  for (const auto& s : samples) {
    mx += s.x;
    my += s.y;
  }
  mx /= double(samples.size());
  my /= double(samples.size());

  double span_x = 0.0, span_y = 0.0;
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (const auto& s : samples) {
    const double x = s.x - mx, y = s.y - my;
    span_x = std::max(span_x, std::abs(x));
    span_y = std::max(span_y, std::abs(y));
    const double r2 = x * x + y * y;
    a(0, 0) += x * x;
    a(0, 1) += x * y;
    a(0, 2) += x;
    a(1, 1) += y * y;
    a(1, 2) += y;
    a(2, 2) += 1.0;
    b(0) -= x * r2;
    b(1) -= y * r2;
    b(2) -= r2;
  }
  a(1, 0) = a(0, 1);
  a(2, 0) = a(0, 2);
  a(2, 1) = a(1, 2);

  const double span = 2.0 * std::hypot(span_x, span_y);
  if (span == 0.0) fail(Err::DegenerateOrbit, "all samples coincide");

  Eigen::FullPivLU<Eigen::Matrix3d> lu(a);
  if (!lu.isInvertible()) fail(Err::DegenerateOrbit, "circle fit is singular");
  const Eigen::Vector3d def = lu.solve(b);

  CyclotronFit fit;
  const double cx = -0.5 * def(0), cy = -0.5 * def(1);
  fit.center_x = cx + mx;
  fit.center_y = cy + my;
  fit.radius = std::sqrt(std::max(0.0, cx * cx + cy * cy - def(2)));
  if (fit.radius < opts.min_radius)
    fail(Err::DegenerateOrbit, "fitted radius below the resolvable minimum");
  fit.straight_line = fit.radius > opts.straight_line_factor * span;

  double res2 = 0.0;
  for (const auto& s : samples) {
    const double d = std::hypot(s.x - fit.center_x, s.y - fit.center_y) - fit.radius;
    res2 += d * d;
  }
  fit.residual_rms = std::sqrt(res2 / double(samples.size()));

  std::vector<double> ts, phis;
  ts.reserve(samples.size());
  phis.reserve(samples.size());
  double prev = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double phi =
        std::atan2(samples[i].y - fit.center_y, samples[i].x - fit.center_x);
    if (i == 0)
      acc = phi;
    else
      acc += wrap_angle(phi - prev);
    prev = phi;
    ts.push_back(samples[i].t);
    phis.push_back(acc);
  }
  fit.omega = ls_slope(ts, phis);
  return fit;
}

RotationEstimate image_rotation_angle(const ComplexField2D& reference,
                                      const ComplexField2D& rotated,
                                      const RotationSearchOptions& opts) {
  if (!reference.grid.same_shape(rotated.grid))
    fail(Err::GridMismatch, "rotation search needs matching grids");
  if (reference.grid.nx != reference.grid.ny ||
      reference.grid.extent_x != reference.grid.extent_y)
    fail(Err::GridMismatch, "rotation search needs a square grid");
  if (opts.coarse_samples < 16)
    fail(Err::ConfigInvalid, "rotation search needs at least 16 coarse samples");

  ComplexField2D ref = reference, img = rotated;
  normalize(ref);
  normalize(img);

  auto overlap_at = [&](double theta) {
    return std::abs(inner_product(rotate_field(ref, theta, opts.leak_tol), img));
  };

  const std::size_t n = opts.coarse_samples;
  const double step = 2.0 * M_PI / double(n);
  std::vector<double> theta(n), val(n);
  for (std::size_t k = 0; k < n; ++k) {
    theta[k] = -M_PI + step * double(k + 1);
    val[k] = overlap_at(theta[k]);
  }

  std::vector<std::size_t> maxima;
  for (std::size_t k = 0; k < n; ++k) {
    const double left = val[(k + n - 1) % n], right = val[(k + 1) % n];
    if (val[k] > left && val[k] >= right) maxima.push_back(k);
  }
  if (maxima.empty())
    fail(Err::AmbiguousRotation, "overlap is flat; the image has no angular structure");

  std::size_t best = maxima.front();
  for (std::size_t k : maxima)
    if (val[k] > val[best]) best = k;

  bool twin = false;
  for (std::size_t k : maxima) {
    if (k == best) continue;
    const double sep = std::abs(wrap_angle(theta[k] - theta[best]));
    const bool is_twin = std::abs(sep - M_PI) <= 2.0 * step;
    if (is_twin) {
      if (val[k] >= (1.0 - opts.ambiguity_ratio) * val[best]) twin = true;
    } else if (val[k] >= (1.0 - opts.ambiguity_ratio) * val[best]) {
      fail(Err::AmbiguousRotation, "two unrelated rotation angles match equally well");
    }
  }

  // golden-section refinement inside the bracketing coarse interval
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = theta[best] - step, hi = theta[best] + step;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = overlap_at(x1), f2 = overlap_at(x2);
  while (hi - lo > opts.tol) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = overlap_at(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = overlap_at(x1);
    }
  }

  RotationEstimate est;
  est.angle = wrap_angle(0.5 * (lo + hi));
  if (est.angle <= -M_PI) est.angle += 2.0 * M_PI;
  est.overlap = overlap_at(est.angle);
  est.twin_folded = twin;
  if (est.overlap < opts.min_overlap)
    fail(Err::AmbiguousRotation, "no rotation aligns the images");
  if (twin) {
    while (est.angle > 0.5 * M_PI) est.angle -= M_PI;
    while (est.angle <= -0.5 * M_PI) est.angle += M_PI;
  }
  return est;
}

double norm_decay_rate(const std::vector<TrajectorySample>& samples) {
  if (samples.empty()) fail(Err::EmptyInput, "no trajectory samples");
  if (samples.size() < 2)
    fail(Err::InsufficientSamples, "decay fit needs at least 2 samples");
  std::vector<double> ts, logs;
  ts.reserve(samples.size());
  logs.reserve(samples.size());
  for (const auto& s : samples) {
    if (!(s.norm2 > 0.0))
      fail(Err::NonPositiveNorm, "norm must stay positive for a decay fit");
    if (!std::isfinite(s.t) || !std::isfinite(s.norm2))
      fail(Err::NumericsFailure, "trajectory samples must be finite");
    ts.push_back(s.t);
    logs.push_back(std::log(s.norm2));
  }
  return -0.5 * ls_slope(ts, logs);
}

} // namespace rotapol
