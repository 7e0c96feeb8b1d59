#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "rotapol/grid.hpp"
#include "rotapol/observables.hpp"
#include "support.hpp"

using namespace rotapol;
using testsupport::close_abs;
using testsupport::close_rel;

namespace {

TransverseGrid square_grid(std::uint32_t n, double extent) {
  return TransverseGrid{n, n, extent, extent};
}

std::vector<TrajectorySample> circle_track(double cx, double cy, double radius,
                                           double omega, double phi0, std::size_t n,
                                           double dt) {
  std::vector<TrajectorySample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = dt * double(i);
    out[i].t = t;
    out[i].x = cx + radius * std::cos(phi0 + omega * t);
    out[i].y = cy + radius * std::sin(phi0 + omega * t);
    out[i].norm2 = 1.0;
  }
  return out;
}

} // namespace

TEST_CASE("circle fit recovers an exact clockwise orbit") {
  auto track = circle_track(0.4, -0.7, 2.3, -1.7, 0.3, 200, 0.05);
  CyclotronFit fit = fit_cyclotron(track);
  CHECK(close_abs(fit.center_x, 0.4, 1e-10));
  CHECK(close_abs(fit.center_y, -0.7, 1e-10));
  CHECK(close_rel(fit.radius, 2.3, 1e-10));
  CHECK(close_rel(fit.omega, -1.7, 1e-10));
  CHECK(fit.residual_rms < 1e-10);
  CHECK(!fit.straight_line);
}

TEST_CASE("circle fit tolerates small perturbations and keeps the sign") {
  auto track = circle_track(-1.0, 0.5, 1.8, 0.9, -0.2, 400, 0.02);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 1e-3);
  for (auto& s : track) {
    s.x += noise(rng);
    s.y += noise(rng);
  }
  CyclotronFit fit = fit_cyclotron(track);
  CHECK(close_rel(fit.radius, 1.8, 1e-2));
  CHECK(close_rel(fit.omega, 0.9, 1e-2));
  CHECK(fit.omega > 0.0);
  CHECK(fit.residual_rms < 5e-3);
  CHECK(fit.residual_rms > 1e-5);
}

TEST_CASE("circle fit input guards") {
  auto short_track = circle_track(0.0, 0.0, 1.0, 1.0, 0.0, 7, 0.1);
  CHECK_THROWS_AS(fit_cyclotron(short_track), Error);
  try {
    fit_cyclotron(short_track);
  } catch (const Error& e) {
    CHECK(e.code() == Err::InsufficientSamples);
  }
  CHECK_THROWS_AS(fit_cyclotron({}), Error);

  auto tiny = circle_track(0.0, 0.0, 1e-6, 1.0, 0.0, 50, 0.1);
  CyclotronFitOptions opts;
  opts.min_radius = 1e-3;
  CHECK_THROWS_AS(fit_cyclotron(tiny, opts), Error);
  try {
    fit_cyclotron(tiny, opts);
  } catch (const Error& e) {
    CHECK(e.code() == Err::DegenerateOrbit);
  }

  std::vector<TrajectorySample> same(20);
  for (std::size_t i = 0; i < same.size(); ++i) {
    same[i].t = double(i);
    same[i].x = 1.0;
    same[i].y = 2.0;
    same[i].norm2 = 1.0;
  }
  CHECK_THROWS_AS(fit_cyclotron(same), Error);
}

TEST_CASE("straight tracks are flagged") {
  std::vector<TrajectorySample> line(40);
  for (std::size_t i = 0; i < line.size(); ++i) {
    const double t = 0.1 * double(i);
    line[i].t = t;
    line[i].x = -2.0 + 1.3 * t;
    line[i].y = 1.0 + 0.39 * t + 1e-5 * t * t; // hair of curvature keeps the fit finite
    line[i].norm2 = 1.0;
  }
  CyclotronFit fit = fit_cyclotron(line);
  CHECK(fit.straight_line);
  CHECK(fit.radius > 1e3);
}

TEST_CASE("rotation angle is recovered to the requested tolerance") {
  const TransverseGrid g = square_grid(64, 16.0);
  ComplexField2D ref = make_gaussian(g, 0.35, 0.8, 0.0);
  for (double angle : {0.37, -1.9, 3.0}) {
    ComplexField2D img = rotate_field(ref, angle);
    RotationEstimate est = image_rotation_angle(ref, img);
    CHECK(close_abs(est.angle, angle, 1e-4));
    CHECK(est.overlap > 0.9999);
    CHECK(!est.twin_folded);
  }
}

TEST_CASE("two-fold symmetric images fold into the half circle") {
  const TransverseGrid g = square_grid(128, 32.0);
  ComplexField2D ref = make_hermite_gaussian(g, 1, 0, 0.8);

  ComplexField2D img = rotate_field(ref, 0.3);
  RotationEstimate est = image_rotation_angle(ref, img);
  CHECK(est.twin_folded);
  CHECK(close_abs(est.angle, 0.3, 1e-4));

  ComplexField2D far = rotate_field(ref, 2.0);
  RotationEstimate est2 = image_rotation_angle(ref, far);
  CHECK(est2.twin_folded);
  CHECK(close_abs(est2.angle, 2.0 - M_PI, 1e-4));
}

TEST_CASE("rotationally featureless or unrelated images are rejected") {
  const TransverseGrid g = square_grid(64, 32.0);
  ComplexField2D vortex = make_vortex(g, 1, 0.8);
  CHECK_THROWS_AS(image_rotation_angle(vortex, vortex), Error);
  try {
    image_rotation_angle(vortex, vortex);
  } catch (const Error& e) {
    CHECK(e.code() == Err::AmbiguousRotation);
  }

  ComplexField2D bump = make_gaussian(g, 0.6, 1.5, 0.0);
  ComplexField2D ring = make_vortex(g, 2, 0.8);
  CHECK_THROWS_AS(image_rotation_angle(bump, ring), Error);

  const TransverseGrid other = square_grid(128, 32.0);
  ComplexField2D mismatch = make_gaussian(other, 0.6, 1.5, 0.0);
  CHECK_THROWS_AS(image_rotation_angle(bump, mismatch), Error);
}

TEST_CASE("norm decay fit inverts the exponential law") {
  std::vector<TrajectorySample> track(60);
  for (std::size_t i = 0; i < track.size(); ++i) {
    const double t = 0.25 * double(i);
    track[i].t = t;
    track[i].norm2 = 7.0 * std::exp(-2.0 * 0.13 * t);
  }
  CHECK(close_rel(norm_decay_rate(track), 0.13, 1e-12));

  track[30].norm2 = 0.0;
  CHECK_THROWS_AS(norm_decay_rate(track), Error);
  try {
    norm_decay_rate(track);
  } catch (const Error& e) {
    CHECK(e.code() == Err::NonPositiveNorm);
  }
  CHECK_THROWS_AS(norm_decay_rate({track.front()}), Error);
}

TEST_CASE("centroid reads back the construction point") {
  const TransverseGrid g = square_grid(64, 16.0);
  ComplexField2D f = make_gaussian(g, 0.45, 0.9, -0.3);
  Centroid c = centroid(f);
  CHECK(close_abs(c.x, 0.9, 1e-8));
  CHECK(close_abs(c.y, -0.3, 1e-8));
}
