#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rotapol/effective_model.hpp"
#include "rotapol/grid.hpp"

namespace rotapol {

// Matrix-free view of the transverse Hamiltonian for the eigensolver.
// Spectra are defined for the Hermitian part only, and silently dropping an
// active decay channel would misreport the physics, so validation rejects
// any configuration with rotational loss or a longitudinal damping scalar.
// The longitudinal phase scalar is bookkeeping outside the transverse
// operator and must be zero as well.
struct OperatorHandle {
  TransverseGrid grid;
  EffectiveConfig config;

  void validate() const;

  // (H / hbar) f in frequency units.  No leak checks: Krylov vectors fill
  // the whole box.
  ComplexField2D apply(const ComplexField2D& f) const;

  // Flux quanta through the safety disk, B pi R^2 / (2 pi hbar) with
  // B / hbar = |omega_rot| / kinetic_coeff.
  double flux_count() const;
};

struct EigenPair {
  double value = 0.0;
  double residual = 0.0;  // ||H v - value v|| for the unit-norm vector
  ComplexField2D vector;
};

// Start vectors are drawn from mt19937_64(seed) mapped to [-1, 1) reals in a
// fixed sequence, so results are reproducible for a fixed seed.  block sets
// the Krylov block width (clamped to k).  max_basis and keep are raised
// internally when k needs more room.
struct EigenOptions {
  std::size_t k = 8;                 // number of pairs, hard cap 128
  double tol = 1e-8;                 // absolute residual bound
  std::uint64_t seed = 12345;
  std::size_t block = 8;             // Krylov block width
  std::size_t max_basis = 192;       // basis columns before a thick restart
  std::size_t keep = 48;             // Ritz vectors retained across restarts
  std::size_t max_applies = 200000;  // operator budget before NoConvergence
};

// The k smallest eigenpairs, ascending, by block Lanczos with thick restarts
// and full reorthogonalization.  The k lowest Ritz pairs are accepted only
// after their residuals pass an exact re-check; a fresh deflated probe then
// certifies that no smaller eigenvalue was missed behind a degeneracy,
// evicting and replacing accepted pairs if it finds one.
std::vector<EigenPair> lowest_eigenpairs(const OperatorHandle& op,
                                         const EigenOptions& opts = {});

// Dense oracle path: assembles the operator column by column and calls a
// direct Hermitian eigensolver.  Quadratic memory, so gated to grids of at
// most 48x48 points.
std::vector<EigenPair> dense_spectrum(const OperatorHandle& op, std::size_t k);

struct Cluster {
  double center = 0.0;    // mean of the member values
  std::size_t count = 0;
  double spread = 0.0;    // max - min within the cluster
};

// Greedy ascending clustering: a value joins the current cluster while it
// stays within tol_abs of the running mean.  tol_abs = 0 keeps any two
// distinct values apart.
std::vector<Cluster> cluster_eigenvalues(const std::vector<double>& ascending,
                                         double tol_abs);

struct SpectrumReport {
  std::vector<double> eigenvalues;  // raw input values, ascending
  std::vector<double> residuals;
  std::vector<Cluster> clusters;    // bulk states only
  double omega_c = 0.0;
  double flux_count = 0.0;
  std::size_t bulk_count = 0;       // bulk states across all clusters
  bool lowest_matches_flux = false; // |clusters[0].count - flux_count| <= 2
};

// Clusters the spectrum and counts Landau-level degeneracy inside the
// safety disk.  Finite-box edge states contaminate the raw level counts, so
// the report keeps only the bulk: within each raw cluster (greedy, tolerance
// cluster_tol * omega_c) the form <v_a| rho^2 |v_b> is diagonalized and
// directions whose mean square radius exceeds the safety radius squared are
// discarded.  Counting subspace directions instead of individual vectors
// keeps the result independent of how the solver mixes a degenerate
// multiplet.  Requires pairs sorted ascending with orthonormal vectors on
// op's grid.
SpectrumReport landau_analysis(const std::vector<EigenPair>& pairs,
                               const OperatorHandle& op, double omega_c,
                               double cluster_tol = 0.1);

}  // namespace rotapol
