#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rotapol/errors.hpp"

namespace rotapol {

// Periodic transverse grid. Sizes are powers of two so every FFT path is the
// radix-2 one and plans stay identical across runs. Coordinates are cell
// centered with the box center at index n/2: x_i = (i - nx/2) dx.
struct TransverseGrid {
  std::uint32_t nx = 0;
  std::uint32_t ny = 0;
  double extent_x = 0.0;
  double extent_y = 0.0;

  void validate() const;

  std::size_t size() const { return std::size_t(nx) * ny; }
  double dx() const { return extent_x / nx; }
  double dy() const { return extent_y / ny; }
  double cell_area() const { return dx() * dy(); }
  double x(std::size_t i) const { return (double(i) - double(nx / 2)) * dx(); }
  double y(std::size_t j) const { return (double(j) - double(ny / 2)) * dy(); }

  // FFT-ordered wavenumbers; k_max dx = pi on each axis.
  double kx(std::size_t i) const;
  double ky(std::size_t j) const;
  double kx_max() const { return M_PI / dx(); }
  double ky_max() const { return M_PI / dy(); }

  // Coordinate-multiplying operators are trusted only inside this disk.
  double safety_radius() const { return 0.2 * std::min(extent_x, extent_y); }

  bool same_shape(const TransverseGrid& o) const {
    return nx == o.nx && ny == o.ny && extent_x == o.extent_x && extent_y == o.extent_y;
  }
};

// Row-major with x fastest: values[iy * nx + ix].
struct ComplexField2D {
  TransverseGrid grid;
  std::vector<std::complex<double>> values;
  double time = 0.0;

  ComplexField2D() = default;
  explicit ComplexField2D(const TransverseGrid& g)
      : grid(g), values(g.size(), std::complex<double>(0.0, 0.0)) {
    g.validate();
  }

  std::size_t idx(std::size_t ix, std::size_t iy) const { return iy * grid.nx + ix; }
  std::complex<double>& at(std::size_t ix, std::size_t iy) { return values[idx(ix, iy)]; }
  const std::complex<double>& at(std::size_t ix, std::size_t iy) const {
    return values[idx(ix, iy)];
  }
};

enum class Observable { Identity, Lz, Lz2, KineticPerp, X, Y };

double field_norm_sq(const ComplexField2D& f);
std::complex<double> inner_product(const ComplexField2D& a, const ComplexField2D& b);
void normalize(ComplexField2D& f); // throws Err::ZeroNorm
void require_finite(const ComplexField2D& f);

// Fraction of |f|^2 outside the safety disk.
double leakage_fraction(const ComplexField2D& f);

ComplexField2D laplacian_transverse(const ComplexField2D& f);

// L_z / hbar = -i (x d_y - y d_x); eigenvalues are plain integers on vortex
// states. leak_tol guards the coordinate factors near the periodic seam.
ComplexField2D apply_lz(const ComplexField2D& f, double leak_tol = 1e-8);

// Unchecked variant for spectral kernels that run on box-filling vectors.
ComplexField2D apply_lz_unchecked(const ComplexField2D& f);

// Raw sesquilinear form <f|O|f> including the cell area; Identity gives the
// squared norm. Divide by it for normalized expectation values.
std::complex<double> expectation(const ComplexField2D& f, Observable op);

// Counterclockwise rotation by angle (radians) about the box center: exact
// quarter-turn index maps plus a three-shear spectral pass for the residual.
// Residual shears need a square grid only when quarter turns are involved.
ComplexField2D rotate_field(const ComplexField2D& f, double angle, double leak_tol = 1e-8);

// Binary snapshot, little-endian: "SLPF", u32 version = 1, u32 nx, u32 ny,
// f64 extent_x, f64 extent_y, f64 time, then nx*ny (re, im) f64 pairs
// row-major with x fastest. Round-trips bit-identically.
void save_snapshot(const ComplexField2D& f, const std::filesystem::path& path);
ComplexField2D load_snapshot(const std::filesystem::path& path);

void write_density_csv(const ComplexField2D& f, const std::filesystem::path& path);
void write_profile_csv(const ComplexField2D& f, char axis, const std::filesystem::path& path);

// Normalized initial states. sigma is the rms width per axis of |psi|^2.
ComplexField2D make_gaussian(const TransverseGrid& g, double sigma, double cx = 0.0,
                             double cy = 0.0, double px = 0.0, double py = 0.0);
ComplexField2D make_vortex(const TransverseGrid& g, int m, double sigma);
ComplexField2D make_hermite_gaussian(const TransverseGrid& g, int i, int j, double sigma);

namespace fft {
// Convention: forward unnormalized, inverse carries 1/(nx*ny).
void forward_2d(ComplexField2D& f);
void inverse_2d(ComplexField2D& f);
void forward_x(ComplexField2D& f);
void inverse_x(ComplexField2D& f);
void forward_y(ComplexField2D& f);
void inverse_y(ComplexField2D& f);
} // namespace fft

} // namespace rotapol
