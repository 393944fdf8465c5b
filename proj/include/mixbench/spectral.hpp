#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "mixbench/tensor.hpp"

namespace mixbench {

using Complex = std::complex<double>;

bool is_power_of_two(std::size_t n);

// In-place iterative radix-2 transform. inverse=true applies the 1/n scale.
void fft1d(std::span<Complex> values, bool inverse = false);

// Unnormalized forward 2D DFT of a row-major [p,p] grid; ifft2d scales by
// 1/p^2. Both throw std::invalid_argument unless p is a power of two.
std::vector<Complex> fft2d(std::span<const double> image, std::size_t p);
std::vector<Complex> fft2d(std::span<const Complex> grid, std::size_t p);
std::vector<Complex> ifft2d(std::span<const Complex> grid, std::size_t p);

// Pointwise max of the FFT magnitudes of a filter bank, zero frequency at
// (size/2, size/2).
struct SpectralEnvelope {
  std::size_t size = 0;
  std::size_t filter_count = 0;
  std::vector<double> magnitude;  // row-major [size, size]

  double at(std::size_t row, std::size_t col) const { return magnitude[row * size + col]; }
  double max() const;
  Tensor<float> to_tensor() const;
};

// filters [F,1,k,k] (or [F,k,k]); each is zero-padded to pad x pad at the
// top-left before transforming.
template <typename Real>
SpectralEnvelope envelope(const Tensor<Real>& filters, std::size_t pad = 512);

// Fraction of cells with magnitude >= tau.
double coverage(const SpectralEnvelope& env, double tau);
double default_threshold(const SpectralEnvelope& env);  // 0.25 * max

// Frequency bands of the centered grid. The low band is |fx| < P/4 and
// |fy| < P/4; the high band is its complement.
bool in_low_band(const SpectralEnvelope& env, std::size_t row, std::size_t col);
double high_band_coverage(const SpectralEnvelope& env, double tau);
// Sum of squared magnitudes outside the low band.
double high_band_energy(const SpectralEnvelope& env);

// 8-bit binary PGM of log(1 + magnitude), min-max normalized.
void save_envelope_pgm(const SpectralEnvelope& env, const std::filesystem::path& path);

}  // namespace mixbench
