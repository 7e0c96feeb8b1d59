#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "rotapol/effective_model.hpp"
#include "rotapol/errors.hpp"
#include "rotapol/grid.hpp"
#include "rotapol/spectra.hpp"
#include "support.hpp"

using namespace rotapol;
using testsupport::close_abs;
using testsupport::close_rel;

namespace {

using cplx = std::complex<double>;

TransverseGrid square_grid(std::uint32_t n, double extent) {
  return TransverseGrid{n, n, extent, extent};
}

// Landau Hamiltonian: trap off, gauge quadratic kept; cyclotron frequency
// 2 * omega_rot and oscillator scale <rho^2> = (2n + |m| + 1) / omega_rot
// at kinetic_coeff = 1/2.
OperatorHandle landau_handle(std::uint32_t n, double extent, double omega_rot) {
  OperatorHandle op;
  op.grid = square_grid(n, extent);
  op.config.kinetic_coeff = 0.5;
  op.config.omega_rot = omega_rot;
  op.config.potential = PotentialMode::Compensated;
  return op;
}

template <typename Fn>
Err thrown_code(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<Err>(-1);  // sentinel: nothing was thrown
}

EigenPair synthetic_pair(double value, ComplexField2D vec) {
  EigenPair p;
  p.value = value;
  p.residual = 0.0;
  p.vector = std::move(vec);
  return p;
}

double pair_overlap(const EigenPair& a, const EigenPair& b) {
  return std::abs(inner_product(a.vector, b.vector));
}

}  // namespace

TEST_CASE("operator handle is hermitian and rejects decay channels") {
  const TransverseGrid g = square_grid(64, 12.0);
  ComplexField2D f = make_gaussian(g, 0.9, 0.4, -0.3, 0.6, -0.2);
  ComplexField2D h = make_vortex(g, 1, 0.8);

  OperatorHandle op = landau_handle(64, 12.0, 0.7);
  SUBCASE("compensated mode") {}
  SUBCASE("full mode with two-photon shift and mass correction") {
    op.config.potential = PotentialMode::Full;
    op.config.delta_term = -0.37;
    op.config.include_mass_correction = true;
    op.config.gamma_rot = cplx(0.0, 0.11);
  }
  SUBCASE("bare rotation") {
    op.config.potential = PotentialMode::None;
    op.config.omega_rot = -0.9;
  }
  op.validate();
  // inner_product conjugates its first argument, so hermiticity reads
  // <h, H f> == <H h, f> with no extra conjugation
  const cplx lhs = inner_product(h, op.apply(f));
  const cplx rhs = inner_product(op.apply(h), f);
  CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(lhs)));
}

TEST_CASE("operator handle validation gates") {
  OperatorHandle op = landau_handle(32, 12.0, 0.5);

  OperatorHandle lossy = op;
  lossy.config.include_rot_loss = true;
  lossy.config.gamma_rot = cplx(0.1, 0.0);
  CHECK_THROWS_AS(lossy.validate(), Error);
  CHECK(thrown_code([&] { lossy.validate(); }) == Err::NonHermitianConfig);

  OperatorHandle damped = op;
  damped.config.kz_damp_rate = 0.2;
  CHECK(thrown_code([&] { damped.validate(); }) == Err::NonHermitianConfig);

  OperatorHandle phased = op;
  phased.config.kz_phase_rate = 0.5;
  CHECK(thrown_code([&] { phased.validate(); }) == Err::ConfigInvalid);

  // hermitian imaginary-part mass correction is allowed
  OperatorHandle shifted = op;
  shifted.config.include_mass_correction = true;
  shifted.config.gamma_rot = cplx(0.4, 0.02);  // real part ignored by the flag
  shifted.validate();
}

TEST_CASE("flux count through the safety disk") {
  OperatorHandle op = landau_handle(64, 24.0, 0.5);
  // R = 4.8, B/hbar = |omega|/kinetic = 1: flux = 0.5 * 4.8^2 / (2 * 0.5)
  CHECK(close_rel(op.flux_count(), 11.52, 1e-12));
  op.config.omega_rot = -0.5;
  CHECK(close_rel(op.flux_count(), 11.52, 1e-12));
  op.config.omega_rot = 0.0;
  CHECK(op.flux_count() == 0.0);
}

TEST_CASE("free box spectrum with exact plane-wave multiplicities") {
  OperatorHandle op;
  op.grid = square_grid(32, 8.0);
  op.config.kinetic_coeff = 0.5;
  op.config.omega_rot = 0.0;
  op.config.potential = PotentialMode::None;

  EigenOptions opts;
  opts.k = 9;
  auto pairs = lowest_eigenpairs(op, opts);
  REQUIRE(pairs.size() == 9);

  // (2 pi / 8)^2 / 2
  const double e1 = 0.30842513753404246;
  CHECK(std::abs(pairs[0].value) <= 1e-9);
  for (int i = 1; i <= 4; ++i) CHECK(close_abs(pairs[i].value, e1, 1e-8));
  for (int i = 5; i <= 8; ++i) CHECK(close_abs(pairs[i].value, 2.0 * e1, 1e-8));
  for (const auto& p : pairs) CHECK(p.residual <= 1e-8);
  for (std::size_t i = 0; i + 1 < pairs.size(); ++i) CHECK(pairs[i].value <= pairs[i + 1].value);

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(close_rel(field_norm_sq(pairs[i].vector), 1.0, 1e-10));
    for (std::size_t j = i + 1; j < pairs.size(); ++j)
      CHECK(pair_overlap(pairs[i], pairs[j]) <= 1e-8);
  }
}

TEST_CASE("dense oracle agrees with the iterative path on a Landau operator") {
  OperatorHandle op = landau_handle(32, 12.0, 1.0);

  auto dense = dense_spectrum(op, 12);
  REQUIRE(dense.size() == 12);
  for (const auto& p : dense) CHECK(p.residual <= 1e-9);

  EigenOptions opts;
  opts.k = 12;
  auto iter = lowest_eigenpairs(op, opts);
  REQUIRE(iter.size() == 12);

  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(close_abs(iter[i].value, dense[i].value, 5e-8));
    CHECK(iter[i].residual <= 1e-8);
  }
  // the twelve lowest states are all lowest-Landau-level copies at E = omega_c/2 = 1
  CHECK(close_abs(dense[0].value, 1.0, 2e-3));
  CHECK(dense[11].value <= 1.05);
}

TEST_CASE("dense path is gated to small grids") {
  OperatorHandle op = landau_handle(64, 12.0, 1.0);
  CHECK(thrown_code([&] { dense_spectrum(op, 4); }) == Err::ConfigInvalid);
  OperatorHandle small = landau_handle(16, 12.0, 1.0);
  CHECK(thrown_code([&] { dense_spectrum(small, 0); }) == Err::ConfigInvalid);
  CHECK(thrown_code([&] { dense_spectrum(small, 300); }) == Err::ConfigInvalid);
}

TEST_CASE("greedy clustering on plain values") {
  auto clusters = cluster_eigenvalues({1.0, 1.05, 1.2, 3.0}, 0.1);
  REQUIRE(clusters.size() == 3);
  CHECK(close_rel(clusters[0].center, 1.025, 1e-12));
  CHECK(clusters[0].count == 2);
  CHECK(close_abs(clusters[0].spread, 0.05, 1e-12));
  CHECK(clusters[1].count == 1);
  CHECK(close_rel(clusters[1].center, 1.2, 1e-12));
  CHECK(clusters[2].count == 1);

  CHECK(cluster_eigenvalues({}, 0.5).empty());
  CHECK(thrown_code([&] { cluster_eigenvalues({2.0, 1.0}, 0.5); }) == Err::ConfigInvalid);
  CHECK(thrown_code([&] { cluster_eigenvalues({1.0}, -0.1); }) == Err::ConfigInvalid);
}

TEST_CASE("landau analysis on synthetic clusters") {
  OperatorHandle op;
  op.grid = square_grid(32, 10.0);  // safety radius 2
  op.config.kinetic_coeff = 0.5;
  op.config.potential = PotentialMode::None;

  // orthogonal oscillator modes, all well inside the disk:
  // <rho^2> = 2 sigma^2 {1, 2, 2, 3} at sigma = 0.6
  std::vector<EigenPair> pairs;
  pairs.push_back(synthetic_pair(0.5, make_hermite_gaussian(op.grid, 0, 0, 0.6)));
  pairs.push_back(synthetic_pair(0.5, make_hermite_gaussian(op.grid, 1, 0, 0.6)));
  pairs.push_back(synthetic_pair(0.5, make_hermite_gaussian(op.grid, 0, 1, 0.6)));
  pairs.push_back(synthetic_pair(1.5, make_hermite_gaussian(op.grid, 1, 1, 0.6)));

  SpectrumReport report = landau_analysis(pairs, op, 1.0, 0.1);
  REQUIRE(report.clusters.size() == 2);
  CHECK(close_rel(report.clusters[0].center, 0.5, 1e-12));
  CHECK(report.clusters[0].count == 3);
  CHECK(report.clusters[0].spread <= 1e-12);
  CHECK(close_rel(report.clusters[1].center, 1.5, 1e-12));
  CHECK(report.clusters[1].count == 1);
  CHECK(report.bulk_count == 4);
  CHECK(report.flux_count == 0.0);
  CHECK(!report.lowest_matches_flux);  // |3 - 0| > 2
  CHECK(report.eigenvalues.size() == 4);

  // an edge state joins the lowest cluster but is dropped from the count:
  // <rho^2> = 2.8^2 + 2 * 0.4^2 = 8.16 > 4
  std::vector<EigenPair> with_edge;
  with_edge.push_back(synthetic_pair(0.5, make_hermite_gaussian(op.grid, 0, 0, 0.6)));
  with_edge.push_back(synthetic_pair(0.5, make_hermite_gaussian(op.grid, 1, 0, 0.6)));
  with_edge.push_back(synthetic_pair(0.5, make_hermite_gaussian(op.grid, 0, 1, 0.6)));
  with_edge.push_back(synthetic_pair(0.5, make_gaussian(op.grid, 0.4, 2.8, 0.0)));
  with_edge.push_back(synthetic_pair(1.5, make_hermite_gaussian(op.grid, 1, 1, 0.6)));
  SpectrumReport filtered = landau_analysis(with_edge, op, 1.0, 0.1);
  REQUIRE(filtered.clusters.size() == 2);
  CHECK(filtered.clusters[0].count == 3);
  CHECK(filtered.clusters[1].count == 1);
  CHECK(filtered.bulk_count == 4);
  CHECK(filtered.eigenvalues.size() == 5);
}

TEST_CASE("zero cluster tolerance keeps noisy values apart") {
  OperatorHandle op;
  op.grid = square_grid(32, 10.0);
  op.config.kinetic_coeff = 0.5;
  op.config.potential = PotentialMode::None;

  std::vector<EigenPair> pairs;
  pairs.push_back(synthetic_pair(0.5, make_hermite_gaussian(op.grid, 0, 0, 0.6)));
  pairs.push_back(synthetic_pair(0.5 + 1e-9, make_hermite_gaussian(op.grid, 1, 0, 0.6)));
  pairs.push_back(synthetic_pair(0.5 + 2e-9, make_hermite_gaussian(op.grid, 0, 1, 0.6)));
  pairs.push_back(synthetic_pair(1.5, make_hermite_gaussian(op.grid, 1, 1, 0.6)));

  SpectrumReport report = landau_analysis(pairs, op, 1.0, 0.0);
  CHECK(report.clusters.size() == 4);
  for (const Cluster& c : report.clusters) CHECK(c.count == 1);
}

TEST_CASE("landau analysis input guards") {
  OperatorHandle op = landau_handle(32, 10.0, 0.5);
  CHECK(thrown_code([&] { landau_analysis({}, op, 1.0, 0.1); }) == Err::EmptyInput);

  std::vector<EigenPair> unsorted;
  unsorted.push_back(synthetic_pair(1.5, make_hermite_gaussian(op.grid, 0, 0, 0.6)));
  unsorted.push_back(synthetic_pair(0.5, make_hermite_gaussian(op.grid, 1, 0, 0.6)));
  CHECK(thrown_code([&] { landau_analysis(unsorted, op, 1.0, 0.1); }) == Err::ConfigInvalid);

  std::vector<EigenPair> mismatched;
  mismatched.push_back(synthetic_pair(0.5, make_gaussian(square_grid(16, 10.0), 0.6)));
  CHECK(thrown_code([&] { landau_analysis(mismatched, op, 1.0, 0.1); }) == Err::GridMismatch);

  std::vector<EigenPair> fine;
  fine.push_back(synthetic_pair(0.5, make_gaussian(op.grid, 0.6)));
  CHECK(thrown_code([&] { landau_analysis(fine, op, -1.0, 0.1); }) == Err::ConfigInvalid);
  CHECK(thrown_code([&] { landau_analysis(fine, op, 1.0, -0.1); }) == Err::ConfigInvalid);
}

TEST_CASE("landau level degeneracy matches the flux through the safety disk") {
  OperatorHandle op = landau_handle(64, 12.0, 1.0);
  // omega_c = 2, safety radius 2.4, flux = 1 * 2.4^2 / (2 * 0.5) = 5.76;
  // bulk lowest-level states have <rho^2> = m + 1 <= 5.76: exactly 5.
  // Between the levels sits a ladder of wall-hugging ring states, so the
  // window must extend well past the bulk to reach the second level.
  EigenOptions opts;
  opts.k = 56;
  auto pairs = lowest_eigenpairs(op, opts);
  REQUIRE(pairs.size() == 56);
  for (const auto& p : pairs) CHECK(p.residual <= 1e-8);

  SpectrumReport report = landau_analysis(pairs, op, 2.0, 0.1);
  CHECK(close_rel(report.flux_count, 5.76, 1e-12));
  REQUIRE(report.clusters.size() >= 2);
  CHECK(close_abs(report.clusters[0].center, 1.0, 1e-2));
  CHECK(report.clusters[0].count == 5);
  CHECK(report.lowest_matches_flux);
  // first gap is omega_c
  const double gap = report.clusters[1].center - report.clusters[0].center;
  CHECK(close_rel(gap, 2.0, 2e-2));
  // second-level bulk states (n, m) in {(0,1), (1,0), (1,-1), (1,-2)} have
  // <rho^2> = 2n + |m| + 1 = {2, 3, 4, 5}, all inside the disk
  CHECK(report.clusters[1].count == 4);
}

TEST_CASE("eigenvalues are independent of the Krylov seed") {
  OperatorHandle op = landau_handle(32, 12.0, 1.0);
  EigenOptions a;
  a.k = 10;
  a.seed = 12345;
  EigenOptions b = a;
  b.seed = 987654321;
  auto pa = lowest_eigenpairs(op, a);
  auto pb = lowest_eigenpairs(op, b);
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(close_abs(pa[i].value, pb[i].value, 5e-8));
}

TEST_CASE("ground level sits at half the cyclotron gap across grid refinement") {
  // omega_c = 2 omega_r = 2, so the zero-point energy is 1.  The spectral
  // discretization resolves it to well below the residual certificate at
  // every grid.
  const double target = 1.0;
  for (std::uint32_t n : {32u, 64u, 128u}) {
    OperatorHandle op = landau_handle(n, 12.0, 1.0);
    EigenOptions opts;
    opts.k = 1;
    opts.block = 1;
    opts.tol = 1e-6;  // value error is quadratic in the residual
    auto pairs = lowest_eigenpairs(op, opts);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].residual <= opts.tol);
    CHECK(close_abs(pairs[0].value, target, 1e-6));
  }
}

TEST_CASE("doubling the rotation doubles flux and bulk degeneracy") {
  OperatorHandle op1 = landau_handle(64, 8.0, 1.0);
  OperatorHandle op2 = landau_handle(64, 8.0, 2.0);

  EigenOptions o1;
  o1.k = 20;
  EigenOptions o2;
  o2.k = 28;
  auto p1 = lowest_eigenpairs(op1, o1);
  auto p2 = lowest_eigenpairs(op2, o2);

  SpectrumReport r1 = landau_analysis(p1, op1, 2.0, 0.1);
  SpectrumReport r2 = landau_analysis(p2, op2, 4.0, 0.1);

  CHECK(close_rel(r1.flux_count, 2.56, 1e-12));
  CHECK(close_rel(r2.flux_count, 5.12, 1e-12));
  CHECK(close_rel(r2.flux_count, 2.0 * r1.flux_count, 1e-12));

  REQUIRE(!r1.clusters.empty());
  REQUIRE(!r2.clusters.empty());
  CHECK(r1.clusters[0].count == 2);  // <rho^2> = m + 1 <= 2.56
  CHECK(r2.clusters[0].count == 5);  // <rho^2> = (m + 1)/2 <= 2.56
  CHECK(r1.lowest_matches_flux);
  CHECK(r2.lowest_matches_flux);
  const long diff = long(r2.clusters[0].count) - 2 * long(r1.clusters[0].count);
  CHECK(std::abs(diff) <= 2);
  CHECK(close_abs(r1.clusters[0].center, 1.0, 1e-2));
  CHECK(close_abs(r2.clusters[0].center, 2.0, 2e-2));
}

TEST_CASE("eigensolver option guards") {
  OperatorHandle op = landau_handle(32, 12.0, 1.0);

  EigenOptions opts;
  opts.k = 0;
  CHECK(thrown_code([&] { lowest_eigenpairs(op, opts); }) == Err::ConfigInvalid);
  opts.k = 129;
  CHECK(thrown_code([&] { lowest_eigenpairs(op, opts); }) == Err::ConfigInvalid);
  opts.k = 8;
  opts.tol = 0.0;
  CHECK(thrown_code([&] { lowest_eigenpairs(op, opts); }) == Err::ConfigInvalid);
  opts.tol = 1.5;
  CHECK(thrown_code([&] { lowest_eigenpairs(op, opts); }) == Err::ConfigInvalid);
  opts.tol = 1e-8;
  opts.max_applies = 0;
  CHECK(thrown_code([&] { lowest_eigenpairs(op, opts); }) == Err::ConfigInvalid);

  OperatorHandle tiny = landau_handle(8, 8.0, 1.0);
  EigenOptions big;
  big.k = 16;
  CHECK(thrown_code([&] { lowest_eigenpairs(tiny, big); }) == Err::ConfigInvalid);

  EigenOptions starved;
  starved.k = 8;
  starved.max_applies = 5;
  CHECK(thrown_code([&] { lowest_eigenpairs(op, starved); }) == Err::NoConvergence);

  OperatorHandle lossy = op;
  lossy.config.include_rot_loss = true;
  lossy.config.gamma_rot = cplx(0.1, 0.0);
  EigenOptions small;
  small.k = 2;
  CHECK(thrown_code([&] { lowest_eigenpairs(lossy, small); }) == Err::NonHermitianConfig);
  CHECK(thrown_code([&] { dense_spectrum(lossy, 2); }) == Err::NonHermitianConfig);
}
