#include "mixbench/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mixbench {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft1d(std::span<Complex> a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("fft size " + std::to_string(n) + " is not a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double dir = inverse ? 2.0 : -2.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    // Twiddles from cos/sin directly, not by repeated multiplication, to keep
    // round-off flat for large n.
    std::vector<Complex> w(half);
    for (std::size_t k = 0; k < half; ++k) {
      const double angle = dir * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
      w[k] = Complex(std::cos(angle), std::sin(angle));
    }
    for (std::size_t i = 0; i < n; i += len)
      for (std::size_t k = 0; k < half; ++k) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
  }
  if (inverse)
    for (auto& v : a) v /= static_cast<double>(n);
}

namespace {

void transform_2d(std::vector<Complex>& grid, std::size_t p, bool inverse, std::size_t nonzero_rows) {
  if (!is_power_of_two(p)) throw std::invalid_argument("fft size " + std::to_string(p) + " is not a power of two");
  for (std::size_t r = 0; r < nonzero_rows; ++r) fft1d(std::span<Complex>(grid.data() + r * p, p), inverse);
  std::vector<Complex> column(p);
  for (std::size_t c = 0; c < p; ++c) {
    for (std::size_t r = 0; r < p; ++r) column[r] = grid[r * p + c];
    fft1d(column, inverse);
    for (std::size_t r = 0; r < p; ++r) grid[r * p + c] = column[r];
  }
}

}  // namespace

std::vector<Complex> fft2d(std::span<const double> image, std::size_t p) {
  if (image.size() != p * p) throw std::invalid_argument("fft2d expects a p x p grid");
  std::vector<Complex> grid(image.begin(), image.end());
  transform_2d(grid, p, false, p);
  return grid;
}

std::vector<Complex> fft2d(std::span<const Complex> input, std::size_t p) {
  if (input.size() != p * p) throw std::invalid_argument("fft2d expects a p x p grid");
  std::vector<Complex> grid(input.begin(), input.end());
  transform_2d(grid, p, false, p);
  return grid;
}

std::vector<Complex> ifft2d(std::span<const Complex> input, std::size_t p) {
  if (input.size() != p * p) throw std::invalid_argument("ifft2d expects a p x p grid");
  std::vector<Complex> grid(input.begin(), input.end());
  transform_2d(grid, p, true, p);
  return grid;
}

double SpectralEnvelope::max() const {
  return magnitude.empty() ? 0.0 : *std::max_element(magnitude.begin(), magnitude.end());
}

Tensor<float> SpectralEnvelope::to_tensor() const {
  Tensor<float> t({size, size});
  for (std::size_t i = 0; i < magnitude.size(); ++i) t[i] = static_cast<float>(magnitude[i]);
  return t;
}

template <typename Real>
SpectralEnvelope envelope(const Tensor<Real>& filters, std::size_t pad) {
  if (filters.rank() < 2 || filters.numel() == 0) throw std::invalid_argument("envelope of an empty filter bank");
  const std::size_t k = filters.dim(filters.rank() - 1);
  const std::size_t kh = filters.dim(filters.rank() - 2);
  const std::size_t count = filters.numel() / (k * kh);
  if (k > pad || kh > pad) throw std::invalid_argument("filter larger than the padded grid");
  if (!is_power_of_two(pad)) throw std::invalid_argument("envelope pad must be a power of two");
  SpectralEnvelope env;
  env.size = pad;
  env.filter_count = count;
  env.magnitude.assign(pad * pad, 0.0);
  std::vector<Complex> grid(pad * pad);
  for (std::size_t f = 0; f < count; ++f) {
    std::fill(grid.begin(), grid.end(), Complex(0, 0));
    for (std::size_t y = 0; y < kh; ++y)
      for (std::size_t x = 0; x < k; ++x) grid[y * pad + x] = static_cast<double>(filters[(f * kh + y) * k + x]);
    transform_2d(grid, pad, false, kh);
    const std::size_t half = pad / 2;
    for (std::size_t r = 0; r < pad; ++r)
      for (std::size_t c = 0; c < pad; ++c) {
        double& cell = env.magnitude[((r + half) % pad) * pad + (c + half) % pad];
        cell = std::max(cell, std::abs(grid[r * pad + c]));
      }
  }
  return env;
}

template SpectralEnvelope envelope(const Tensor<float>&, std::size_t);
template SpectralEnvelope envelope(const Tensor<double>&, std::size_t);

double coverage(const SpectralEnvelope& env, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("coverage threshold must be > 0");
  const auto covered = std::count_if(env.magnitude.begin(), env.magnitude.end(), [tau](double m) { return m >= tau; });
  return static_cast<double>(covered) / static_cast<double>(env.magnitude.size());
}

double default_threshold(const SpectralEnvelope& env) { return 0.25 * env.max(); }

bool in_low_band(const SpectralEnvelope& env, std::size_t row, std::size_t col) {
  const long half = static_cast<long>(env.size / 2);
  const long quarter = static_cast<long>(env.size / 4);
  const long fy = static_cast<long>(row) - half;
  const long fx = static_cast<long>(col) - half;
  return std::labs(fy) < quarter && std::labs(fx) < quarter;
}

double high_band_coverage(const SpectralEnvelope& env, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("coverage threshold must be > 0");
  std::size_t covered = 0, cells = 0;
  for (std::size_t r = 0; r < env.size; ++r)
    for (std::size_t c = 0; c < env.size; ++c) {
      if (in_low_band(env, r, c)) continue;
      ++cells;
      if (env.at(r, c) >= tau) ++covered;
    }
  return cells == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(cells);
}

double high_band_energy(const SpectralEnvelope& env) {
  double energy = 0;
  for (std::size_t r = 0; r < env.size; ++r)
    for (std::size_t c = 0; c < env.size; ++c)
      if (!in_low_band(env, r, c)) energy += env.at(r, c) * env.at(r, c);
  return energy;
}

void save_envelope_pgm(const SpectralEnvelope& env, const std::filesystem::path& path) {
  std::vector<double> scaled(env.magnitude.size());
  std::transform(env.magnitude.begin(), env.magnitude.end(), scaled.begin(), [](double m) { return std::log1p(m); });
  const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
  const double low = *lo, range = *hi - *lo;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << env.size << ' ' << env.size << "\n255\n";
  for (double v : scaled) {
    const double unit = range > 0 ? (v - low) / range : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(unit * 255.0))));
  }
}

}  // namespace mixbench
