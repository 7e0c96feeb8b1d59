#include "rotapol/grid.hpp"

#include <fftw3.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

static_assert(std::endian::native == std::endian::little,
              "snapshot format is little-endian; big-endian hosts are unsupported");

namespace rotapol {

namespace {

bool power_of_two(std::uint32_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Plans are created once per shape under a lock and then executed through the
// new-array interface, which is thread safe. FFTW_ESTIMATE keeps the chosen
// algorithm deterministic; FFTW_UNALIGNED lifts the SIMD alignment demand so
// plans apply to any std::vector buffer.
struct PlanSet {
  fftw_plan fwd2d, bwd2d;
  fftw_plan fwd_x, bwd_x;
  fftw_plan fwd_y, bwd_y;
};

const PlanSet& plans_for(const TransverseGrid& g) {
  static std::mutex mu;
  static std::map<std::pair<std::uint32_t, std::uint32_t>, PlanSet> cache;

  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(g.nx, g.ny);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  const int nx = int(g.nx), ny = int(g.ny);
  std::vector<std::complex<double>> scratch(g.size());
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;

  PlanSet p;
  p.fwd2d = fftw_plan_dft_2d(ny, nx, buf, buf, FFTW_FORWARD, flags);
  p.bwd2d = fftw_plan_dft_2d(ny, nx, buf, buf, FFTW_BACKWARD, flags);
  int n_x[] = {nx};
  p.fwd_x = fftw_plan_many_dft(1, n_x, ny, buf, nullptr, 1, nx, buf, nullptr, 1, nx,
                               FFTW_FORWARD, flags);
  p.bwd_x = fftw_plan_many_dft(1, n_x, ny, buf, nullptr, 1, nx, buf, nullptr, 1, nx,
                               FFTW_BACKWARD, flags);
  int n_y[] = {ny};
  p.fwd_y = fftw_plan_many_dft(1, n_y, nx, buf, nullptr, nx, 1, buf, nullptr, nx, 1,
                               FFTW_FORWARD, flags);
  p.bwd_y = fftw_plan_many_dft(1, n_y, nx, buf, nullptr, nx, 1, buf, nullptr, nx, 1,
                               FFTW_BACKWARD, flags);
  return cache.emplace(key, p).first->second;
}

void execute(fftw_plan plan, ComplexField2D& f) {
  auto* buf = reinterpret_cast<fftw_complex*>(f.values.data());
  fftw_execute_dft(plan, buf, buf);
}

void scale(ComplexField2D& f, double s) {
  for (auto& v : f.values) v *= s;
}

// First-derivative wavenumber axis: the Nyquist mode is zeroed so the
// spectral derivative stays anti-Hermitian on the grid.
std::vector<double> kx_deriv_axis(const TransverseGrid& g) {
  std::vector<double> k(g.nx);
  for (std::size_t i = 0; i < g.nx; ++i) k[i] = (i == g.nx / 2) ? 0.0 : g.kx(i);
  return k;
}

std::vector<double> ky_deriv_axis(const TransverseGrid& g) {
  std::vector<double> k(g.ny);
  for (std::size_t j = 0; j < g.ny; ++j) k[j] = (j == g.ny / 2) ? 0.0 : g.ky(j);
  return k;
}

void check_leakage(const ComplexField2D& f, double leak_tol, const char* op) {
  const double leak = leakage_fraction(f);
  if (leak > leak_tol)
    fail(Err::EdgeLeakage, std::string(op) + ": fraction " + std::to_string(leak) +
                               " of the norm lies outside the safety disk");
}

} // namespace

void TransverseGrid::validate() const {
  if (!power_of_two(nx) || !power_of_two(ny) || nx < 8 || ny < 8)
    fail(Err::ConfigInvalid, "grid sizes must be powers of two >= 8");
  if (!(std::isfinite(extent_x) && extent_x > 0.0 && std::isfinite(extent_y) && extent_y > 0.0))
    fail(Err::ConfigInvalid, "grid extents must be positive and finite");
}

double TransverseGrid::kx(std::size_t i) const {
  const double base = 2.0 * M_PI / extent_x;
  return (i <= nx / 2 ? double(i) : double(i) - double(nx)) * base;
}

double TransverseGrid::ky(std::size_t j) const {
  const double base = 2.0 * M_PI / extent_y;
  return (j <= ny / 2 ? double(j) : double(j) - double(ny)) * base;
}

namespace fft {

void forward_2d(ComplexField2D& f) { execute(plans_for(f.grid).fwd2d, f); }
void inverse_2d(ComplexField2D& f) {
  execute(plans_for(f.grid).bwd2d, f);
  scale(f, 1.0 / double(f.grid.size()));
}
void forward_x(ComplexField2D& f) { execute(plans_for(f.grid).fwd_x, f); }
void inverse_x(ComplexField2D& f) {
  execute(plans_for(f.grid).bwd_x, f);
  scale(f, 1.0 / double(f.grid.nx));
}
void forward_y(ComplexField2D& f) { execute(plans_for(f.grid).fwd_y, f); }
void inverse_y(ComplexField2D& f) {
  execute(plans_for(f.grid).bwd_y, f);
  scale(f, 1.0 / double(f.grid.ny));
}

} // namespace fft

double field_norm_sq(const ComplexField2D& f) {
  double s = 0.0;
  for (const auto& v : f.values) s += std::norm(v);
  return s * f.grid.cell_area();
}

std::complex<double> inner_product(const ComplexField2D& a, const ComplexField2D& b) {
  if (!a.grid.same_shape(b.grid)) fail(Err::GridMismatch, "inner product of mismatched grids");
  std::complex<double> s(0.0, 0.0);
  for (std::size_t i = 0; i < a.values.size(); ++i) s += std::conj(a.values[i]) * b.values[i];
  return s * a.grid.cell_area();
}

void normalize(ComplexField2D& f) {
  const double n2 = field_norm_sq(f);
  if (!(n2 > 0.0) || !std::isfinite(n2)) fail(Err::ZeroNorm, "cannot normalize a zero field");
  scale(f, 1.0 / std::sqrt(n2));
}

void require_finite(const ComplexField2D& f) {
  for (const auto& v : f.values)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      fail(Err::NonFiniteField, "field contains NaN or Inf");
}

double leakage_fraction(const ComplexField2D& f) {
  const double r2 = f.grid.safety_radius() * f.grid.safety_radius();
  double outside = 0.0, total = 0.0;
  for (std::size_t iy = 0; iy < f.grid.ny; ++iy) {
    const double y = f.grid.y(iy);
    for (std::size_t ix = 0; ix < f.grid.nx; ++ix) {
      const double w = std::norm(f.at(ix, iy));
      total += w;
      if (f.grid.x(ix) * f.grid.x(ix) + y * y > r2) outside += w;
    }
  }
  if (total <= 0.0) fail(Err::ZeroNorm, "leakage fraction of a zero field");
  return outside / total;
}

ComplexField2D laplacian_transverse(const ComplexField2D& f) {
  require_finite(f);
  ComplexField2D out = f;
  fft::forward_2d(out);
  for (std::size_t iy = 0; iy < out.grid.ny; ++iy) {
    const double ky = out.grid.ky(iy);
    for (std::size_t ix = 0; ix < out.grid.nx; ++ix) {
      const double kx = out.grid.kx(ix);
      out.at(ix, iy) *= -(kx * kx + ky * ky);
    }
  }
  fft::inverse_2d(out);
  return out;
}

ComplexField2D apply_lz_unchecked(const ComplexField2D& f) {
  const auto kxs = kx_deriv_axis(f.grid);
  const auto kys = ky_deriv_axis(f.grid);
  const std::complex<double> iu(0.0, 1.0);

  ComplexField2D dy = f;
  fft::forward_y(dy);
  for (std::size_t iy = 0; iy < f.grid.ny; ++iy)
    for (std::size_t ix = 0; ix < f.grid.nx; ++ix) dy.at(ix, iy) *= iu * kys[iy];
  fft::inverse_y(dy);

  ComplexField2D dx = f;
  fft::forward_x(dx);
  for (std::size_t iy = 0; iy < f.grid.ny; ++iy)
    for (std::size_t ix = 0; ix < f.grid.nx; ++ix) dx.at(ix, iy) *= iu * kxs[ix];
  fft::inverse_x(dx);

  ComplexField2D out(f.grid);
  out.time = f.time;
  for (std::size_t iy = 0; iy < f.grid.ny; ++iy) {
    const double y = f.grid.y(iy);
    for (std::size_t ix = 0; ix < f.grid.nx; ++ix) {
      const double x = f.grid.x(ix);
      out.at(ix, iy) = -iu * (x * dy.at(ix, iy) - y * dx.at(ix, iy));
    }
  }
  return out;
}

ComplexField2D apply_lz(const ComplexField2D& f, double leak_tol) {
  require_finite(f);
  check_leakage(f, leak_tol, "apply_lz");
  return apply_lz_unchecked(f);
}

std::complex<double> expectation(const ComplexField2D& f, Observable op) {
  require_finite(f);
  switch (op) {
    case Observable::Identity:
      return field_norm_sq(f);
    case Observable::Lz:
      return inner_product(f, apply_lz_unchecked(f));
    case Observable::Lz2: {
      ComplexField2D g = apply_lz_unchecked(f);
      return field_norm_sq(g);
    }
    case Observable::KineticPerp: {
      ComplexField2D g = f;
      fft::forward_2d(g);
      double s = 0.0;
      for (std::size_t iy = 0; iy < g.grid.ny; ++iy) {
        const double ky = g.grid.ky(iy);
        for (std::size_t ix = 0; ix < g.grid.nx; ++ix) {
          const double kx = g.grid.kx(ix);
          s += 0.5 * (kx * kx + ky * ky) * std::norm(g.at(ix, iy));
        }
      }
      return s * g.grid.cell_area() / double(g.grid.size());
    }
    case Observable::X:
    case Observable::Y: {
      double s = 0.0;
      for (std::size_t iy = 0; iy < f.grid.ny; ++iy)
        for (std::size_t ix = 0; ix < f.grid.nx; ++ix)
          s += (op == Observable::X ? f.grid.x(ix) : f.grid.y(iy)) * std::norm(f.at(ix, iy));
      return s * f.grid.cell_area();
    }
  }
  fail(Err::ConfigInvalid, "unknown observable");
}

namespace {

// Quarter turns are exact permutations of the periodic index lattice.
ComplexField2D quarter_turns(const ComplexField2D& f, int q) {
  if (q == 0) return f;
  if (f.grid.nx != f.grid.ny || f.grid.extent_x != f.grid.extent_y)
    fail(Err::ConfigInvalid, "rotations beyond +-pi/4 need a square grid");
  const std::size_t n = f.grid.nx;
  ComplexField2D out(f.grid);
  out.time = f.time;
  for (std::size_t iy = 0; iy < n; ++iy) {
    for (std::size_t ix = 0; ix < n; ++ix) {
      std::size_t sx, sy;
      switch (((q % 4) + 4) % 4) {
        case 1: sx = iy; sy = (n - ix) % n; break;           // +pi/2
        case 2: sx = (n - ix) % n; sy = (n - iy) % n; break; // pi
        case 3: sx = (n - iy) % n; sy = ix; break;           // -pi/2
        default: sx = ix; sy = iy; break;
      }
      out.at(ix, iy) = f.at(sx, sy);
    }
  }
  return out;
}

void shear_x(ComplexField2D& f, double alpha) {
  const auto kxs = kx_deriv_axis(f.grid);
  fft::forward_x(f);
  for (std::size_t iy = 0; iy < f.grid.ny; ++iy) {
    const double y = f.grid.y(iy);
    for (std::size_t ix = 0; ix < f.grid.nx; ++ix)
      f.at(ix, iy) *= std::polar(1.0, kxs[ix] * alpha * y);
  }
  fft::inverse_x(f);
}

void shear_y(ComplexField2D& f, double beta) {
  const auto kys = ky_deriv_axis(f.grid);
  fft::forward_y(f);
  for (std::size_t iy = 0; iy < f.grid.ny; ++iy)
    for (std::size_t ix = 0; ix < f.grid.nx; ++ix)
      f.at(ix, iy) *= std::polar(1.0, kys[iy] * beta * f.grid.x(ix));
  fft::inverse_y(f);
}

} // namespace

ComplexField2D rotate_field(const ComplexField2D& f, double angle, double leak_tol) {
  require_finite(f);
  check_leakage(f, leak_tol, "rotate_field");

  double a = std::remainder(angle, 2.0 * M_PI);
  const int q = int(std::lround(a / (M_PI / 2.0)));
  a -= q * (M_PI / 2.0);

  ComplexField2D out = quarter_turns(f, q);
  if (a != 0.0) {
    // Pullback by R(-a) = Sx(tan(a/2)) Sy(-sin a) Sx(tan(a/2)).
    const double alpha = std::tan(0.5 * a);
    const double beta = -std::sin(a);
    shear_x(out, alpha);
    shear_y(out, beta);
    shear_x(out, alpha);
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'S', 'L', 'P', 'F'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::ifstream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return bool(is);
}

} // namespace

void save_snapshot(const ComplexField2D& f, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(Err::IoError, "cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put(os, kVersion);
  put(os, f.grid.nx);
  put(os, f.grid.ny);
  put(os, f.grid.extent_x);
  put(os, f.grid.extent_y);
  put(os, f.time);
  os.write(reinterpret_cast<const char*>(f.values.data()),
           std::streamsize(f.values.size() * sizeof(std::complex<double>)));
  if (!os) fail(Err::IoError, "short write to " + path.string());
}

ComplexField2D load_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Err::IoError, "cannot open " + path.string());

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    fail(Err::BadMagic, path.string() + " is not a field snapshot");
  std::uint32_t version = 0;
  if (!get(is, version)) fail(Err::TruncatedFile, path.string() + ": header cut short");
  if (version != kVersion)
    fail(Err::VersionMismatch,
         path.string() + ": snapshot version " + std::to_string(version) + ", expected 1");

  TransverseGrid g;
  double time = 0.0;
  if (!get(is, g.nx) || !get(is, g.ny) || !get(is, g.extent_x) || !get(is, g.extent_y) ||
      !get(is, time))
    fail(Err::TruncatedFile, path.string() + ": header cut short");
  g.validate();

  ComplexField2D f(g);
  f.time = time;
  is.read(reinterpret_cast<char*>(f.values.data()),
          std::streamsize(f.values.size() * sizeof(std::complex<double>)));
  if (std::size_t(is.gcount()) != f.values.size() * sizeof(std::complex<double>))
    fail(Err::TruncatedFile, path.string() + ": payload cut short");
  return f;
}

void write_density_csv(const ComplexField2D& f, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(Err::IoError, "cannot open " + path.string() + " for writing");
  os << "x,y,density\n";
  char line[96];
  for (std::size_t iy = 0; iy < f.grid.ny; ++iy) {
    for (std::size_t ix = 0; ix < f.grid.nx; ++ix) {
      std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", f.grid.x(ix), f.grid.y(iy),
                    std::norm(f.at(ix, iy)));
      os << line;
    }
  }
  if (!os) fail(Err::IoError, "short write to " + path.string());
}

void write_profile_csv(const ComplexField2D& f, char axis, const std::filesystem::path& path) {
  if (axis != 'x' && axis != 'y') fail(Err::ConfigInvalid, "profile axis must be 'x' or 'y'");
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(Err::IoError, "cannot open " + path.string() + " for writing");
  os << (axis == 'x' ? "x" : "y") << ",re,im,density\n";
  char line[128];
  const std::size_t n = axis == 'x' ? f.grid.nx : f.grid.ny;
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = axis == 'x' ? f.at(i, f.grid.ny / 2) : f.at(f.grid.nx / 2, i);
    const double c = axis == 'x' ? f.grid.x(i) : f.grid.y(i);
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", c, v.real(), v.imag(),
                  std::norm(v));
    os << line;
  }
  if (!os) fail(Err::IoError, "short write to " + path.string());
}

ComplexField2D make_gaussian(const TransverseGrid& g, double sigma, double cx, double cy,
                             double px, double py) {
  if (!(sigma > 0.0)) fail(Err::ConfigInvalid, "gaussian sigma must be > 0");
  ComplexField2D f(g);
  const double w = 1.0 / (4.0 * sigma * sigma);
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    const double y = g.y(iy) - cy;
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const double x = g.x(ix) - cx;
      f.at(ix, iy) = std::polar(std::exp(-(x * x + y * y) * w),
                                px * g.x(ix) + py * g.y(iy));
    }
  }
  normalize(f);
  return f;
}

ComplexField2D make_vortex(const TransverseGrid& g, int m, double sigma) {
  if (m == 0) fail(Err::ConfigInvalid, "vortex charge must be nonzero");
  if (!(sigma > 0.0)) fail(Err::ConfigInvalid, "vortex sigma must be > 0");
  ComplexField2D f(g);
  const double w = 1.0 / (4.0 * sigma * sigma);
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    const double y = g.y(iy);
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const double x = g.x(ix);
      const std::complex<double> z = (m > 0 ? std::complex<double>(x, y)
                                            : std::complex<double>(x, -y)) /
                                     sigma;
      std::complex<double> zp(1.0, 0.0);
      for (int k = 0; k < std::abs(m); ++k) zp *= z;
      f.at(ix, iy) = zp * std::exp(-(x * x + y * y) * w);
    }
  }
  normalize(f);
  return f;
}

namespace {

double hermite_phys(int n, double u) {
  double h0 = 1.0, h1 = 2.0 * u;
  if (n == 0) return h0;
  for (int k = 1; k < n; ++k) {
    const double h2 = 2.0 * u * h1 - 2.0 * k * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

} // namespace

ComplexField2D make_hermite_gaussian(const TransverseGrid& g, int i, int j, double sigma) {
  if (i < 0 || j < 0) fail(Err::ConfigInvalid, "hermite orders must be >= 0");
  if (!(sigma > 0.0)) fail(Err::ConfigInvalid, "hermite sigma must be > 0");
  ComplexField2D f(g);
  const double w = 1.0 / (4.0 * sigma * sigma);
  const double u0 = 1.0 / (sigma * std::sqrt(2.0));
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    const double y = g.y(iy);
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const double x = g.x(ix);
      f.at(ix, iy) = hermite_phys(i, x * u0) * hermite_phys(j, y * u0) *
                     std::exp(-(x * x + y * y) * w);
    }
  }
  normalize(f);
  return f;
}

} // namespace rotapol
