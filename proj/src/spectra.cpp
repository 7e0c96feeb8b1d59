#include "rotapol/spectra.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>
#include <vector>

#include "rotapol/errors.hpp"

namespace rotapol {

namespace {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

// [-1, 1) reals straight from the engine words; no distribution object, so
// the sequence is fixed by the standard rather than by the library.
double unit_real(std::mt19937_64& rng) {
  return double(rng() >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

ComplexField2D column_to_field(const TransverseGrid& grid, const Vec& col) {
  ComplexField2D f(grid);
  // Lanczos vectors are unit in plain l2; field normalization divides out
  // the cell area so field_norm_sq(vector) == 1.
  const cplx s(1.0 / std::sqrt(grid.cell_area()), 0.0);
  for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = s * col(i);
  return f;
}

// Counts operator applications against the budget; the budget is the only
// stopping rule other than convergence, so exhausting it is NoConvergence.
struct Applier {
  const OperatorHandle& op;
  std::size_t budget;
  std::size_t used = 0;
  ComplexField2D scratch;

  Applier(const OperatorHandle& o, std::size_t max_applies)
      : op(o), budget(max_applies), scratch(o.grid) {}

  void apply(const Mat& src, std::size_t col_in, Mat& dst, std::size_t col_out) {
    if (used >= budget)
      fail(Err::NoConvergence, "operator budget of " + std::to_string(budget) +
                                   " applications exhausted");
    ++used;
    const std::size_t n = op.grid.size();
    for (std::size_t i = 0; i < n; ++i) scratch.values[i] = src(i, col_in);
    ComplexField2D image = op.apply(scratch);
    for (std::size_t i = 0; i < n; ++i) dst(i, col_out) = image.values[i];
  }
};

struct RitzSet {
  RVec theta;  // ascending
  Mat s;
  RVec rest;  // exact-arithmetic residual norms ||H y - theta y||
};

class BlockLanczos {
 public:
  BlockLanczos(const OperatorHandle& op, const EigenOptions& opts)
      : op_(op),
        n_(op.grid.size()),
        k_(opts.k),
        b_(std::clamp<std::size_t>(opts.block, 1, opts.k)),
        tol_(opts.tol),
        rng_(opts.seed),
        H_(op, opts.max_applies) {
    // the basis and the kept set are raised as needed so that every cycle
    // retains all k targets and still adds fresh blocks.  keep gets generous
    // headroom past k: quasi-degenerate clusters straddling the window
    // boundary stall the restarts when they are clipped.
    const std::size_t keep_want =
        std::max(opts.keep, k_ + std::max<std::size_t>(4 * b_, k_ / 2));
    mb_ = std::min(std::max(opts.max_basis, keep_want + 10 * b_), n_ / 2);
    mb_ = std::max(mb_, 3 * b_);
    keep_ = std::min(keep_want, mb_ - 2 * b_);
    defl_ = Mat(n_, k_);
    val_ = RVec(k_);
    res_ = RVec(k_);
    Q_ = Mat(n_, mb_ + b_);
    T_ = Mat::Zero(mb_, mb_);
    S_ = Mat::Zero(b_, mb_);
  }

  std::vector<EigenPair> run() {
    seed_block();
    while (true) {
      RitzSet rz = cycle();
      trace("main", rz);
      if (estimates_pass(rz) && harvest(rz)) break;
      restart(rz);
    }
    // Certification: a fresh random probe, orthogonal to the accepted
    // subspace, re-probes the floor.  Degenerate copies can be invisible to
    // the Krylov sequence that converged their siblings; a verified value
    // below the accepted ceiling is such a miss and replaces the maximum.
    for (int round = 0; round < 8; ++round) {
      Vec y;
      double value, res;
      if (!probe_below(y, value, res)) return emit();
      insert_result(y, value, res);
    }
    fail(Err::NoConvergence, "certification kept finding missed eigenvalues");
  }

 private:
  double slack() const {
    return std::max(100.0 * tol_, 1e-8 * (1.0 + std::abs(val_(k_ - 1))));
  }

  // Diagnostic hook: per-cycle progress on stderr, enabled by environment.
  void trace(const char* phase, const RitzSet& rz) const {
    static const bool on = std::getenv("ROTAPOL_SPECTRA_TRACE") != nullptr;
    if (!on) return;
    const Eigen::Index watch = std::min<Eigen::Index>(k_, rz.theta.size());
    const double worst = rz.rest.head(watch).maxCoeff();
    std::fprintf(stderr, "[spectra] %s applies=%zu basis=%zu theta=[%.6g, %.6g] rest<=%.2e\n",
                 phase, H_.used, j_, rz.theta(0), rz.theta(watch - 1), worst);
    static const bool deep = std::getenv("ROTAPOL_SPECTRA_TRACE_LOW") != nullptr;
    if (!deep) return;
    const Eigen::Index low = std::min<Eigen::Index>(12, rz.theta.size());
    for (Eigen::Index i = 0; i < low; ++i)
      std::fprintf(stderr, "  low[%2td] theta=%.12g rest=%.3e\n", std::ptrdiff_t(i),
                   rz.theta(i), rz.rest(i));
  }

  void random_column(Mat& m, std::size_t col) {
    for (std::size_t i = 0; i < n_; ++i)
      m(i, col) = cplx(unit_real(rng_), unit_real(rng_));
  }

  // Two classical Gram-Schmidt passes against the deflated results and the
  // first `cols` basis columns; returns the remaining norm.
  double orthogonalize(Vec& v, std::size_t cols) {
    for (int pass = 0; pass < 2; ++pass) {
      if (dk_ > 0) {
        auto L = defl_.leftCols(dk_);
        v -= L * (L.adjoint() * v).eval();
      }
      if (cols > 0) {
        auto B = Q_.leftCols(cols);
        v -= B * (B.adjoint() * v).eval();
      }
    }
    return v.norm();
  }

  void fresh_direction(Mat& m, std::size_t col, std::size_t against_cols) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      random_column(m, col);
      Vec v = m.col(col);
      double nrm = orthogonalize(v, against_cols);
      if (nrm > 1e-6 * std::sqrt(double(n_))) {
        m.col(col) = v / nrm;
        return;
      }
    }
    fail(Err::NumericsFailure, "Krylov space exhausted while drawing a start vector");
  }

  void seed_block() {
    j_ = 0;
    T_.setZero();
    S_.setZero();
    for (std::size_t c = 0; c < b_; ++c) {
      fresh_direction(Q_, c, c);
    }
  }

  // Grow the basis to capacity, then diagonalize the projected matrix once.
  RitzSet cycle() {
    while (j_ + b_ <= mb_) expand();
    return solve_ritz();
  }

  bool estimates_pass(const RitzSet& rz) const {
    if (rz.theta.size() < Eigen::Index(k_)) return false;
    for (std::size_t i = 0; i < k_; ++i)
      if (rz.rest(i) > 0.5 * tol_) return false;
    return true;
  }

  // Assemble the k lowest Ritz vectors and re-check their residuals with
  // exact operator applications; on success they become the deflation set.
  bool harvest(const RitzSet& rz) {
    Mat Y = Q_.leftCols(j_) * rz.s.leftCols(k_);
    RVec vals(k_), ress(k_);
    Mat dst(n_, 1);
    for (std::size_t i = 0; i < k_; ++i) {
      Y.col(i) /= Y.col(i).norm();
      H_.apply(Y, i, dst, 0);
      vals(i) = Y.col(i).dot(dst.col(0)).real();
      ress(i) = (dst.col(0) - cplx(vals(i), 0.0) * Y.col(i)).norm();
      if (ress(i) > tol_) return false;
    }
    std::vector<std::size_t> order(k_);
    for (std::size_t i = 0; i < k_; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return vals(a) < vals(b); });
    for (std::size_t i = 0; i < k_; ++i) {
      defl_.col(i) = Y.col(order[i]);
      val_(i) = vals(order[i]);
      res_(i) = ress(order[i]);
    }
    dk_ = k_;
    return true;
  }

  // Run a deflated probe until its floor converges.  Returns true with a
  // verified eigenpair strictly below the accepted ceiling, false once the
  // floor of the complement is confirmed to sit at or above it.
  bool probe_below(Vec& y, double& value, double& res) {
    const double cut = val_(k_ - 1) - slack();
    seed_block();
    while (true) {
      RitzSet rz = cycle();
      trace("cert", rz);
      for (Eigen::Index i = 0; i < rz.theta.size() && rz.theta(i) < cut; ++i) {
        if (rz.rest(i) > 0.5 * tol_) continue;
        if (verify(rz, i, y, value, res) && value < cut) return true;
      }
      if (rz.rest(0) <= 0.5 * tol_ && verify(rz, 0, y, value, res))
        return value < cut;
      restart(rz);
    }
  }

  // Replace the current maximum with a lower verified pair, keeping the
  // result columns ascending.
  void insert_result(const Vec& y, double value, double res) {
    std::size_t pos = k_ - 1;
    while (pos > 0 && val_(pos - 1) > value) {
      defl_.col(pos) = defl_.col(pos - 1);
      val_(pos) = val_(pos - 1);
      res_(pos) = res_(pos - 1);
      --pos;
    }
    defl_.col(pos) = y;
    val_(pos) = value;
    res_(pos) = res;
  }

  void expand() {
    Mat U(n_, b_);
    RVec pre(b_);
    for (std::size_t c = 0; c < b_; ++c) {
      H_.apply(Q_, j_ + c, U, c);
      pre(c) = U.col(c).norm();
    }
    const std::size_t total = j_ + b_;  // solved + staged columns
    Mat proj = Mat::Zero(total, b_);
    for (int pass = 0; pass < 2; ++pass) {
      if (dk_ > 0) {
        auto L = defl_.leftCols(dk_);
        U -= L * (L.adjoint() * U).eval();
      }
      auto B = Q_.leftCols(total);
      Mat p = B.adjoint() * U;
      U -= B * p;
      proj += p;
    }
    T_.block(0, j_, j_, b_) = proj.topRows(j_);
    T_.block(j_, 0, b_, j_) = proj.topRows(j_).adjoint();
    Mat diag = proj.bottomRows(b_);
    T_.block(j_, j_, b_, b_) = 0.5 * (diag + diag.adjoint());

    // MGS QR of the residual block; rank-deficient columns signal an
    // invariant subspace and are replaced by fresh seeded directions with
    // zero coupling
    Mat rfac = Mat::Zero(b_, b_);
    for (std::size_t c = 0; c < b_; ++c) {
      Vec u = U.col(c);
      for (std::size_t r = 0; r < c; ++r) {
        cplx h = Q_.col(total + r).dot(u);
        rfac(r, c) = h;
        u -= h * Q_.col(total + r);
      }
      double nrm = u.norm();
      if (nrm > 1e-12 * (pre(c) + 1.0)) {
        rfac(c, c) = nrm;
        Q_.col(total + c) = u / nrm;
      } else {
        fresh_direction(Q_, total + c, total + c);
      }
    }
    S_.setZero();
    S_.block(0, j_, b_, b_) = rfac;
    j_ += b_;
  }

  RitzSet solve_ritz() {
    Eigen::SelfAdjointEigenSolver<Mat> es(T_.topLeftCorner(j_, j_));
    RitzSet rz;
    rz.theta = es.eigenvalues();
    rz.s = es.eigenvectors();
    // The estimate equals the true residual as long as the Lanczos identity
    // holds, which full reorthogonalization and the exact restart projection
    // maintain; harvest re-checks with real applies before anything is
    // accepted, so a stale estimate can delay but never corrupt a result.
    rz.rest = (S_.leftCols(j_) * rz.s).colwise().norm();
    return rz;
  }

  // Assemble a Ritz vector, deflate it, and re-check with one exact apply.
  bool verify(const RitzSet& rz, Eigen::Index i, Vec& y, double& value, double& res) {
    y = Q_.leftCols(j_) * rz.s.col(i);
    if (dk_ > 0) {
      auto L = defl_.leftCols(dk_);
      y -= L * (L.adjoint() * y).eval();
    }
    double nrm = y.norm();
    if (nrm < 0.1) return false;  // direction swallowed by deflation
    y /= nrm;
    Mat src(n_, 1), dst(n_, 1);
    src.col(0) = y;
    H_.apply(src, 0, dst, 0);
    value = y.dot(dst.col(0)).real();
    res = (dst.col(0) - value * y).norm();
    return res <= tol_;
  }

  // Thick restart keeping the smallest Ritz directions.
  void restart(const RitzSet& rz) {
    const std::size_t m = std::min<std::size_t>(keep_, rz.theta.size());
    if (m == 0) {
      seed_block();
      return;
    }
    Mat sel = rz.s.leftCols(m);
    // exact projected block: the kept directions may have been rotated
    // inside degenerate clusters, so a diagonal of Ritz values is not enough
    Mat tk = sel.adjoint() * (T_.topLeftCorner(j_, j_) * sel).eval();
    Mat Y = Q_.leftCols(j_) * sel;
    Mat Snew = S_.leftCols(j_) * sel;
    Mat W = Q_.block(0, j_, n_, b_);
    Q_.leftCols(m) = Y;
    Q_.block(0, m, n_, b_) = W;
    // hygiene pass against rounding drift across many restarts.  A
    // collapsing column would invalidate the Ritz claims, so start over from
    // scratch instead of patching the projected matrix.
    for (std::size_t c = 0; c < m + b_; ++c) {
      Vec v = Q_.col(c);
      double nrm = orthogonalize(v, c);
      if (nrm < 1e-6) {
        seed_block();
        return;
      }
      Q_.col(c) = v / nrm;
    }
    T_.setZero();
    S_.setZero();
    T_.topLeftCorner(m, m) = 0.5 * (tk + tk.adjoint());
    S_.leftCols(m) = Snew;
    j_ = m;
  }

  std::vector<EigenPair> emit() const {
    std::vector<EigenPair> out;
    out.reserve(k_);
    for (std::size_t i = 0; i < k_; ++i) {
      EigenPair p;
      p.value = val_(i);
      p.residual = res_(i);
      p.vector = column_to_field(op_.grid, defl_.col(i));
      out.push_back(std::move(p));
    }
    return out;
  }

  const OperatorHandle& op_;
  std::size_t n_, k_, b_;
  double tol_;
  std::mt19937_64 rng_;
  Applier H_;
  std::size_t mb_ = 0, keep_ = 0;
  Mat defl_, Q_, T_, S_;
  RVec val_, res_;
  std::size_t dk_ = 0;
  std::size_t j_ = 0;
};

}  // namespace

void OperatorHandle::validate() const {
  grid.validate();
  config.validate();
  if (config.lz2_rate().real() != 0.0)
    fail(Err::NonHermitianConfig,
         "rotational decay channel active: spectra cover the Hermitian part only");
  if (config.kz_damp_rate != 0.0)
    fail(Err::NonHermitianConfig, "longitudinal damping scalar active");
  if (config.kz_phase_rate != 0.0)
    fail(Err::ConfigInvalid,
         "longitudinal phase scalar is not part of the transverse operator");
}

ComplexField2D OperatorHandle::apply(const ComplexField2D& f) const {
  return apply_hamiltonian(config, f);
}

double OperatorHandle::flux_count() const {
  const double r = grid.safety_radius();
  return std::abs(config.omega_rot) * r * r / (2.0 * config.kinetic_coeff);
}

std::vector<EigenPair> lowest_eigenpairs(const OperatorHandle& op, const EigenOptions& opts) {
  op.validate();
  if (opts.k == 0) fail(Err::ConfigInvalid, "eigenpair count must be positive");
  if (opts.k > 128) fail(Err::ConfigInvalid, "eigenpair count is capped at 128");
  if (!(opts.tol > 0.0) || !(opts.tol < 1.0))
    fail(Err::ConfigInvalid, "residual tolerance must lie in (0, 1)");
  const std::size_t b = std::clamp<std::size_t>(opts.block, 1, opts.k);
  if (4 * (opts.k + b) > op.grid.size())
    fail(Err::ConfigInvalid, "grid too small for the requested eigenpair count");
  if (opts.max_applies == 0) fail(Err::ConfigInvalid, "operator budget must be positive");
  BlockLanczos solver(op, opts);
  return solver.run();
}

std::vector<EigenPair> dense_spectrum(const OperatorHandle& op, std::size_t k) {
  op.validate();
  const std::size_t n = op.grid.size();
  if (n > 48 * 48)
    fail(Err::ConfigInvalid, "dense path is gated to grids of at most 48x48 points");
  if (k == 0 || k > n) fail(Err::ConfigInvalid, "eigenpair count must lie in [1, grid size]");

  Mat M(n, n);
  ComplexField2D basis(op.grid);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(basis.values.begin(), basis.values.end(), cplx(0.0, 0.0));
    basis.values[j] = cplx(1.0, 0.0);
    ComplexField2D image = op.apply(basis);
    for (std::size_t i = 0; i < n; ++i) M(i, j) = image.values[i];
  }
  Mat Mh = 0.5 * (M + M.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> es(Mh);
  std::vector<EigenPair> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    EigenPair p;
    p.value = es.eigenvalues()(i);
    Vec v = es.eigenvectors().col(i);
    p.residual = (Mh * v - p.value * v).norm();
    p.vector = column_to_field(op.grid, v);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Cluster> cluster_eigenvalues(const std::vector<double>& ascending, double tol_abs) {
  if (!(tol_abs >= 0.0))
    fail(Err::ConfigInvalid, "cluster tolerance must be finite and non-negative");
  std::vector<Cluster> out;
  double sum = 0.0, lo = 0.0, hi = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < ascending.size(); ++i) {
    const double v = ascending[i];
    if (!std::isfinite(v)) fail(Err::ConfigInvalid, "eigenvalues must be finite");
    if (i > 0 && v < ascending[i - 1])
      fail(Err::ConfigInvalid, "eigenvalues must be ascending");
    if (count > 0 && std::abs(v - sum / double(count)) <= tol_abs) {
      sum += v;
      hi = v;
      ++count;
    } else {
      if (count > 0) out.push_back({sum / double(count), count, hi - lo});
      sum = v;
      lo = hi = v;
      count = 1;
    }
  }
  if (count > 0) out.push_back({sum / double(count), count, hi - lo});
  return out;
}

SpectrumReport landau_analysis(const std::vector<EigenPair>& pairs, const OperatorHandle& op,
                               double omega_c, double cluster_tol) {
  op.validate();
  if (pairs.empty()) fail(Err::EmptyInput, "no eigenpairs to analyze");
  if (!std::isfinite(omega_c) || omega_c < 0.0)
    fail(Err::ConfigInvalid, "cyclotron frequency must be finite and non-negative");
  if (!std::isfinite(cluster_tol) || cluster_tol < 0.0)
    fail(Err::ConfigInvalid, "cluster tolerance must be finite and non-negative");
  for (const EigenPair& p : pairs) {
    if (!p.vector.grid.same_shape(op.grid))
      fail(Err::GridMismatch, "eigenvector grid does not match the operator grid");
  }

  SpectrumReport report;
  report.omega_c = omega_c;
  report.flux_count = op.flux_count();
  report.eigenvalues.reserve(pairs.size());
  report.residuals.reserve(pairs.size());
  for (const EigenPair& p : pairs) {
    report.eigenvalues.push_back(p.value);
    report.residuals.push_back(p.residual);
  }

  const std::size_t n = op.grid.size();
  std::vector<double> rho2(n);
  for (std::size_t j = 0; j < op.grid.ny; ++j)
    for (std::size_t i = 0; i < op.grid.nx; ++i) {
      const double x = op.grid.x(i), y = op.grid.y(j);
      rho2[j * op.grid.nx + i] = x * x + y * y;
    }
  const double r2_cut = op.grid.safety_radius() * op.grid.safety_radius();
  const double area = op.grid.cell_area();

  const std::vector<Cluster> raw =
      cluster_eigenvalues(report.eigenvalues, cluster_tol * omega_c);

  // Within each raw cluster, diagonalize the rho^2 form on the spanned
  // subspace; the directions with mean square radius inside the disk are the
  // bulk states regardless of the mixing the eigensolver chose.
  std::vector<double> bulk_values;
  std::size_t base = 0;
  for (const Cluster& c : raw) {
    const std::size_t m = c.count;
    Mat form(m, m);
    RVec norms(m);
    for (std::size_t a = 0; a < m; ++a) {
      const auto& va = pairs[base + a].vector.values;
      double nrm = 0.0;
      for (std::size_t i = 0; i < n; ++i) nrm += std::norm(va[i]);
      norms(a) = std::sqrt(nrm * area);
      if (!(norms(a) > 0.0)) fail(Err::ZeroNorm, "eigenvector has zero norm");
    }
    for (std::size_t a = 0; a < m; ++a) {
      const auto& va = pairs[base + a].vector.values;
      for (std::size_t bcol = a; bcol < m; ++bcol) {
        const auto& vb = pairs[base + bcol].vector.values;
        cplx acc(0.0, 0.0);
        for (std::size_t i = 0; i < n; ++i) acc += std::conj(va[i]) * rho2[i] * vb[i];
        acc *= area / (norms(a) * norms(bcol));
        form(a, bcol) = acc;
        form(bcol, a) = std::conj(acc);
      }
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(form);
    for (std::size_t a = 0; a < m; ++a) {
      if (es.eigenvalues()(a) > r2_cut) continue;
      double value = 0.0;  // Rayleigh value of the rotated direction
      for (std::size_t cmp = 0; cmp < m; ++cmp)
        value += std::norm(es.eigenvectors()(cmp, a)) * pairs[base + cmp].value;
      bulk_values.push_back(value);
    }
    base += m;
  }

  std::sort(bulk_values.begin(), bulk_values.end());
  report.bulk_count = bulk_values.size();
  report.clusters = cluster_eigenvalues(bulk_values, cluster_tol * omega_c);
  report.lowest_matches_flux =
      !report.clusters.empty() &&
      std::abs(double(report.clusters.front().count) - report.flux_count) <= 2.0 + 1e-12;
  return report;
}

}  // namespace rotapol
