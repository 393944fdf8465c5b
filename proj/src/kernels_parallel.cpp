#include <algorithm>
#include <cstddef>
#include <vector>

#include "mixbench/kernels.hpp"

namespace mixbench::kernels::parallel {
namespace {

using std::size_t;

struct Range {
  size_t lo = 0;
  size_t hi = 0;  // exclusive
};

// Output positions o whose source o*stride + tap - pad lies inside [0, extent).
inline Range tap_range(size_t out_extent, size_t in_extent, size_t pad, size_t tap, size_t stride) {
  Range r;
  r.lo = pad > tap ? (pad - tap + stride - 1) / stride : 0;
  if (in_extent + pad <= tap) return r;
  r.hi = std::min(out_extent, (in_extent - 1 + pad - tap) / stride + 1);
  if (r.lo > r.hi) r.lo = r.hi;
  return r;
}

// dst[oh, ow] += w * src[ih, iw] for one kernel tap (a, b).
template <typename Real>
inline void plane_tap_forward(const ConvGeometry& g, const Real* src, Real w, size_t a, size_t b,
                              Real* dst) {
  const Range rows = tap_range(g.out_height, g.in_height, g.pad_top, a, g.stride);
  const Range cols = tap_range(g.out_width, g.in_width, g.pad_left, b, g.stride);
  if (cols.lo >= cols.hi) return;
  const size_t count = cols.hi - cols.lo;
  for (size_t oh = rows.lo; oh < rows.hi; ++oh) {
    const size_t ih = oh * g.stride + a - g.pad_top;
    Real* d = dst + oh * g.out_width + cols.lo;
    const Real* s = src + ih * g.in_width + (cols.lo * g.stride + b - g.pad_left);
    if (g.stride == 1) {
#pragma omp simd
      for (size_t i = 0; i < count; ++i) d[i] += w * s[i];
    } else {
      for (size_t i = 0; i < count; ++i) d[i] += w * s[i * g.stride];
    }
  }
}

// gin[ih, iw] += w * go[oh, ow] for one kernel tap (a, b).
template <typename Real>
inline void plane_tap_scatter(const ConvGeometry& g, const Real* go, Real w, size_t a, size_t b,
                              Real* gin) {
  const Range rows = tap_range(g.out_height, g.in_height, g.pad_top, a, g.stride);
  const Range cols = tap_range(g.out_width, g.in_width, g.pad_left, b, g.stride);
  if (cols.lo >= cols.hi) return;
  const size_t count = cols.hi - cols.lo;
  for (size_t oh = rows.lo; oh < rows.hi; ++oh) {
    const size_t ih = oh * g.stride + a - g.pad_top;
    const Real* s = go + oh * g.out_width + cols.lo;
    Real* d = gin + ih * g.in_width + (cols.lo * g.stride + b - g.pad_left);
    if (g.stride == 1) {
#pragma omp simd
      for (size_t i = 0; i < count; ++i) d[i] += w * s[i];
    } else {
      for (size_t i = 0; i < count; ++i) d[i * g.stride] += w * s[i];
    }
  }
}

// sum over (oh, ow) of go[oh, ow] * src[ih, iw] for one kernel tap (a, b).
// Eight interleaved partial sums keep the loop vectorizable without
// reassociation flags; the combine order is fixed.
template <typename Real>
inline Real plane_tap_dot(const ConvGeometry& g, const Real* go, const Real* src, size_t a, size_t b) {
  const Range rows = tap_range(g.out_height, g.in_height, g.pad_top, a, g.stride);
  const Range cols = tap_range(g.out_width, g.in_width, g.pad_left, b, g.stride);
  if (cols.lo >= cols.hi) return Real(0);
  const size_t count = cols.hi - cols.lo;
  constexpr size_t kLanes = 8;
  Real lanes[kLanes] = {};
  for (size_t oh = rows.lo; oh < rows.hi; ++oh) {
    const size_t ih = oh * g.stride + a - g.pad_top;
    const Real* x = go + oh * g.out_width + cols.lo;
    const Real* y = src + ih * g.in_width + (cols.lo * g.stride + b - g.pad_left);
    if (g.stride == 1) {
      size_t i = 0;
      for (; i + kLanes <= count; i += kLanes)
        for (size_t l = 0; l < kLanes; ++l) lanes[l] += x[i + l] * y[i + l];
      for (; i < count; ++i) lanes[i % kLanes] += x[i] * y[i];
    } else {
      for (size_t i = 0; i < count; ++i) lanes[i % kLanes] += x[i] * y[i * g.stride];
    }
  }
  Real total = 0;
  for (size_t l = 0; l < kLanes; ++l) total += lanes[l];
  return total;
}

// Stride-1 fast path. The source plane is copied into a zero-bordered
// scratch buffer so every tap reads in bounds without range checks; each
// output row is produced V columns at a time with the k*k taps accumulated
// in registers.
template <typename Real>
constexpr size_t kLanes = 64 / sizeof(Real);

inline size_t round_up(size_t v, size_t m) { return (v + m - 1) / m * m; }

struct PaddedPlane {
  size_t rows = 0;
  size_t stride = 0;  // row pitch; multiple of the lane count, with slack for reads past W
};

template <typename Real>
PaddedPlane padded_layout(size_t height, size_t width, size_t kernel) {
  return {height + kernel - 1, round_up(width, kLanes<Real>) + round_up(kernel, kLanes<Real>)};
}

template <typename Real>
void fill_padded(const Real* src, size_t height, size_t width, size_t pad_top, size_t pad_left,
                 const PaddedPlane& layout, std::vector<Real>& buf) {
  buf.assign(layout.rows * layout.stride, Real(0));
  for (size_t y = 0; y < height; ++y)
    std::copy(src + y * width, src + (y + 1) * width, buf.data() + (y + pad_top) * layout.stride + pad_left);
}

// R output rows x V columns starting at (y, x0); R independent accumulator
// chains hide the FMA latency.
template <typename Real, size_t R>
inline void correlate_block(const Real* padded, const PaddedPlane& layout, const Real* f, size_t k, size_t y,
                            size_t x0, size_t count, size_t width, Real* dst, bool accumulate) {
  constexpr size_t V = kLanes<Real>;
  Real acc[R][V] = {};
  for (size_t a = 0; a < k; ++a)
    for (size_t b = 0; b < k; ++b) {
      const Real w = f[a * k + b];
      for (size_t r = 0; r < R; ++r) {
        const Real* row = padded + (y + r + a) * layout.stride + x0 + b;
#pragma omp simd
        for (size_t v = 0; v < V; ++v) acc[r][v] += w * row[v];
      }
    }
  for (size_t r = 0; r < R; ++r) {
    Real* out = dst + (y + r) * width + x0;
    if (accumulate) {
      for (size_t v = 0; v < count; ++v) out[v] += acc[r][v];
    } else {
      for (size_t v = 0; v < count; ++v) out[v] = acc[r][v];
    }
  }
}

// dst[y, x] (+)= sum_{a,b} f[a, b] * padded[y + a, x + b] over an H x W output.
template <typename Real>
[[gnu::noinline]] void correlate_rows(const Real* padded, const PaddedPlane& layout, const Real* f, size_t k,
                                      size_t height, size_t width, Real* dst, bool accumulate) {
  constexpr size_t V = kLanes<Real>;
  constexpr size_t R = 4;
  for (size_t x0 = 0; x0 < width; x0 += V) {
    const size_t count = std::min(V, width - x0);
    size_t y = 0;
    for (; y + R <= height; y += R)
      correlate_block<Real, R>(padded, layout, f, k, y, x0, count, width, dst, accumulate);
    for (; y < height; ++y) correlate_block<Real, 1>(padded, layout, f, k, y, x0, count, width, dst, accumulate);
  }
}

template <typename Real>
constexpr size_t kTileCols = 128 / sizeof(Real);  // two 512-bit vectors
constexpr size_t kTileRows = 8;
constexpr size_t kDepthBlock = 256;  // K panel kept resident in L1

// Register tile: C[MR x NR] += op(A)[MR x (p0..p1)] * B[(p0..p1) x NR].
template <typename Real, bool TransA, size_t MR, size_t NR>
inline void micro_tile(size_t i0, size_t j0, size_t p0, size_t p1, const Real* a, size_t lda,
                       const Real* b, size_t ldb, Real* c, size_t ldc) {
  Real acc[MR][NR];
  for (size_t r = 0; r < MR; ++r)
#pragma omp simd
    for (size_t v = 0; v < NR; ++v) acc[r][v] = c[(i0 + r) * ldc + j0 + v];
  for (size_t p = p0; p < p1; ++p) {
    const Real* brow = b + p * ldb + j0;
    for (size_t r = 0; r < MR; ++r) {
      const Real av = TransA ? a[p * lda + i0 + r] : a[(i0 + r) * lda + p];
#pragma omp simd
      for (size_t v = 0; v < NR; ++v) acc[r][v] += av * brow[v];
    }
  }
  for (size_t r = 0; r < MR; ++r)
#pragma omp simd
    for (size_t v = 0; v < NR; ++v) c[(i0 + r) * ldc + j0 + v] = acc[r][v];
}

template <typename Real, bool TransA>
void edge_tile(size_t i0, size_t mr, size_t j0, size_t nr, size_t p0, size_t p1, const Real* a,
               size_t lda, const Real* b, size_t ldb, Real* c, size_t ldc) {
  for (size_t r = 0; r < mr; ++r) {
    Real* crow = c + (i0 + r) * ldc + j0;
    for (size_t p = p0; p < p1; ++p) {
      const Real av = TransA ? a[p * lda + i0 + r] : a[(i0 + r) * lda + p];
      const Real* brow = b + p * ldb + j0;
      for (size_t v = 0; v < nr; ++v) crow[v] += av * brow[v];
    }
  }
}

template <typename Real, bool TransA>
void gemm_rows_impl(size_t row_begin, size_t row_end, size_t n, size_t k, const Real* a,
                    size_t lda, const Real* b, size_t ldb, Real* c, size_t ldc) {
  constexpr size_t MR = kTileRows;
  constexpr size_t NR = kTileCols<Real>;
  for (size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
    const size_t p1 = std::min(k, p0 + kDepthBlock);
    for (size_t j0 = 0; j0 < n; j0 += NR) {
      const size_t nr = std::min(NR, n - j0);
      for (size_t i0 = row_begin; i0 < row_end; i0 += MR) {
        const size_t mr = std::min(MR, row_end - i0);
        if (mr == MR && nr == NR) {
          micro_tile<Real, TransA, MR, NR>(i0, j0, p0, p1, a, lda, b, ldb, c, ldc);
        } else if (mr == MR && nr >= NR / 2) {
          micro_tile<Real, TransA, MR, NR / 2>(i0, j0, p0, p1, a, lda, b, ldb, c, ldc);
          edge_tile<Real, TransA>(i0, mr, j0 + NR / 2, nr - NR / 2, p0, p1, a, lda, b, ldb, c, ldc);
        } else {
          edge_tile<Real, TransA>(i0, mr, j0, nr, p0, p1, a, lda, b, ldb, c, ldc);
        }
      }
    }
  }
}

}  // namespace

template <typename Real>
void gemm_rows(bool trans_a, size_t row_begin, size_t row_end, size_t n, size_t k, const Real* a,
               size_t lda, const Real* b, size_t ldb, Real* c, size_t ldc) {
  if (trans_a)
    gemm_rows_impl<Real, true>(row_begin, row_end, n, k, a, lda, b, ldb, c, ldc);
  else
    gemm_rows_impl<Real, false>(row_begin, row_end, n, k, a, lda, b, ldb, c, ldc);
}

template <typename Real>
void depthwise_forward(const ConvGeometry& g, const Real* in, const Real* filters, Real* out) {
  const size_t d = g.out_channels / g.in_channels;
  const size_t k = g.kernel;
  if (g.stride == 1) {
    const PaddedPlane layout = padded_layout<Real>(g.in_height, g.in_width, k);
    const long jobs = static_cast<long>(g.batch * g.in_channels);
#pragma omp parallel
    {
      std::vector<Real> buf;
#pragma omp for schedule(static)
      for (long job = 0; job < jobs; ++job) {
        const size_t n = static_cast<size_t>(job) / g.in_channels;
        const size_t c = static_cast<size_t>(job) % g.in_channels;
        fill_padded(in + static_cast<size_t>(job) * g.in_plane(), g.in_height, g.in_width, g.pad_top, g.pad_left,
                    layout, buf);
        for (size_t j = 0; j < d; ++j) {
          const size_t oc = c * d + j;
          correlate_rows(buf.data(), layout, filters + oc * k * k, k, g.out_height, g.out_width,
                         out + (n * g.out_channels + oc) * g.out_plane(), false);
        }
      }
    }
    return;
  }
  const long jobs = static_cast<long>(g.batch * g.out_channels);
#pragma omp parallel for schedule(static)
  for (long job = 0; job < jobs; ++job) {
    const size_t n = static_cast<size_t>(job) / g.out_channels;
    const size_t oc = static_cast<size_t>(job) % g.out_channels;
    const Real* src = in + (n * g.in_channels + oc / d) * g.in_plane();
    Real* dst = out + static_cast<size_t>(job) * g.out_plane();
    std::fill(dst, dst + g.out_plane(), Real(0));
    const Real* f = filters + oc * k * k;
    for (size_t a = 0; a < k; ++a)
      for (size_t b = 0; b < k; ++b) plane_tap_forward(g, src, f[a * k + b], a, b, dst);
  }
}

template <typename Real>
void depthwise_backward_input(const ConvGeometry& g, const Real* filters, const Real* grad_out,
                              Real* grad_in) {
  const size_t d = g.out_channels / g.in_channels;
  const size_t k = g.kernel;
  if (g.stride == 1) {
    // Transposed correlation: flipped filter, complementary padding.
    const PaddedPlane layout = padded_layout<Real>(g.out_height, g.out_width, k);
    const long jobs = static_cast<long>(g.batch * g.in_channels);
#pragma omp parallel
    {
      std::vector<Real> buf;
      std::vector<Real> flipped(k * k);
#pragma omp for schedule(static)
      for (long job = 0; job < jobs; ++job) {
        const size_t n = static_cast<size_t>(job) / g.in_channels;
        const size_t c = static_cast<size_t>(job) % g.in_channels;
        Real* gin = grad_in + static_cast<size_t>(job) * g.in_plane();
        for (size_t j = 0; j < d; ++j) {
          const size_t oc = c * d + j;
          const Real* f = filters + oc * k * k;
          for (size_t t = 0; t < k * k; ++t) flipped[t] = f[k * k - 1 - t];
          fill_padded(grad_out + (n * g.out_channels + oc) * g.out_plane(), g.out_height, g.out_width,
                      k - 1 - g.pad_top, k - 1 - g.pad_left, layout, buf);
          correlate_rows(buf.data(), layout, flipped.data(), k, g.in_height, g.in_width, gin, true);
        }
      }
    }
    return;
  }
  const long jobs = static_cast<long>(g.batch * g.in_channels);
#pragma omp parallel for schedule(static)
  for (long job = 0; job < jobs; ++job) {
    const size_t n = static_cast<size_t>(job) / g.in_channels;
    const size_t c = static_cast<size_t>(job) % g.in_channels;
    Real* gin = grad_in + static_cast<size_t>(job) * g.in_plane();
    for (size_t j = 0; j < d; ++j) {
      const size_t oc = c * d + j;
      const Real* go = grad_out + (n * g.out_channels + oc) * g.out_plane();
      const Real* f = filters + oc * k * k;
      for (size_t a = 0; a < k; ++a)
        for (size_t b = 0; b < k; ++b) plane_tap_scatter(g, go, f[a * k + b], a, b, gin);
    }
  }
}

template <typename Real>
void depthwise_backward_filter(const ConvGeometry& g, const Real* in, const Real* grad_out,
                               Real* grad_filters) {
  const size_t d = g.out_channels / g.in_channels;
  const size_t k = g.kernel;
  if (g.stride == 1) {
    constexpr size_t V = kLanes<Real>;
    const PaddedPlane layout = padded_layout<Real>(g.in_height, g.in_width, k);
    const size_t go_pitch = round_up(g.out_width, V);
    const long channels = static_cast<long>(g.out_channels);
#pragma omp parallel
    {
      std::vector<Real> buf;
      std::vector<Real> go_rows(g.out_height * go_pitch);
      std::vector<Real> lanes(k * k * V);
#pragma omp for schedule(static)
      for (long ocl = 0; ocl < channels; ++ocl) {
        const size_t oc = static_cast<size_t>(ocl);
        std::fill(lanes.begin(), lanes.end(), Real(0));
        for (size_t n = 0; n < g.batch; ++n) {
          fill_padded(in + (n * g.in_channels + oc / d) * g.in_plane(), g.in_height, g.in_width, g.pad_top,
                      g.pad_left, layout, buf);
          const Real* go = grad_out + (n * g.out_channels + oc) * g.out_plane();
          std::fill(go_rows.begin(), go_rows.end(), Real(0));
          for (size_t y = 0; y < g.out_height; ++y)
            std::copy(go + y * g.out_width, go + (y + 1) * g.out_width, go_rows.data() + y * go_pitch);
          for (size_t y = 0; y < g.out_height; ++y)
            for (size_t x0 = 0; x0 < go_pitch; x0 += V) {
              const Real* x = go_rows.data() + y * go_pitch + x0;
              for (size_t a = 0; a < k; ++a) {
                const Real* row = buf.data() + (y + a) * layout.stride + x0;
                for (size_t b = 0; b < k; ++b) {
                  Real* l = lanes.data() + (a * k + b) * V;
#pragma omp simd
                  for (size_t v = 0; v < V; ++v) l[v] += x[v] * row[b + v];
                }
              }
            }
        }
        Real* gf = grad_filters + oc * k * k;
        for (size_t t = 0; t < k * k; ++t) {
          Real total = 0;
          for (size_t v = 0; v < V; ++v) total += lanes[t * V + v];
          gf[t] += total;
        }
      }
    }
    return;
  }
  const long channels = static_cast<long>(g.out_channels);
#pragma omp parallel for schedule(static)
  for (long ocl = 0; ocl < channels; ++ocl) {
    const size_t oc = static_cast<size_t>(ocl);
    Real* gf = grad_filters + oc * k * k;
    for (size_t n = 0; n < g.batch; ++n) {
      const Real* src = in + (n * g.in_channels + oc / d) * g.in_plane();
      const Real* go = grad_out + (n * g.out_channels + oc) * g.out_plane();
      for (size_t a = 0; a < k; ++a)
        for (size_t b = 0; b < k; ++b) gf[a * k + b] += plane_tap_dot(g, go, src, a, b);
    }
  }
}

// One job per (image, band of output rows); bands are wide so that each
// K x NR panel of the image is reused across many register tiles.
constexpr size_t kBandRows = 64;

template <typename Real>
void pointwise_forward(size_t batch, size_t in_channels, size_t out_channels, size_t pixels,
                       const Real* in, const Real* weights, Real* out) {
  // The transposed weight layout gives the register tile contiguous
  // broadcasts (same access pattern as the input-gradient product).
  std::vector<Real> wt(in_channels * out_channels);
  for (size_t o = 0; o < out_channels; ++o)
    for (size_t c = 0; c < in_channels; ++c) wt[c * out_channels + o] = weights[o * in_channels + c];
  const size_t bands = (out_channels + kBandRows - 1) / kBandRows;
  const long jobs = static_cast<long>(batch * bands);
#pragma omp parallel for schedule(static)
  for (long job = 0; job < jobs; ++job) {
    const size_t n = static_cast<size_t>(job) / bands;
    const size_t r0 = (static_cast<size_t>(job) % bands) * kBandRows;
    const size_t r1 = std::min(out_channels, r0 + kBandRows);
    Real* dst = out + n * out_channels * pixels;
    std::fill(dst + r0 * pixels, dst + r1 * pixels, Real(0));
    gemm_rows(true, r0, r1, pixels, in_channels, wt.data(), out_channels,
              in + n * in_channels * pixels, pixels, dst, pixels);
  }
}

template <typename Real>
void pointwise_backward_input(size_t batch, size_t in_channels, size_t out_channels, size_t pixels,
                              const Real* weights, const Real* grad_out, Real* grad_in) {
  const size_t bands = (in_channels + kBandRows - 1) / kBandRows;
  const long jobs = static_cast<long>(batch * bands);
#pragma omp parallel for schedule(static)
  for (long job = 0; job < jobs; ++job) {
    const size_t n = static_cast<size_t>(job) / bands;
    const size_t r0 = (static_cast<size_t>(job) % bands) * kBandRows;
    const size_t r1 = std::min(in_channels, r0 + kBandRows);
    gemm_rows(true, r0, r1, pixels, out_channels, weights, in_channels,
              grad_out + n * out_channels * pixels, pixels, grad_in + n * in_channels * pixels,
              pixels);
  }
}

namespace {

// acc[o, c] += dot(go row o, in row c) over `pixels`, for an MO x MC tile.
// Lane-wise partial sums along the pixel axis, combined in a fixed order.
template <typename Real, size_t MO, size_t MC>
inline void dot_tile(const Real* go, const Real* in, size_t pixels, size_t o0, size_t c0, size_t out_count,
                     size_t in_count, Real* grad_weights, size_t ldw) {
  constexpr size_t V = 64 / sizeof(Real);
  Real acc[MO][MC][V] = {};
  size_t p = 0;
  for (; p + V <= pixels; p += V)
    for (size_t i = 0; i < MO; ++i) {
      const Real* x = go + (o0 + i) * pixels + p;
      for (size_t j = 0; j < MC; ++j) {
        const Real* y = in + (c0 + j) * pixels + p;
#pragma omp simd
        for (size_t v = 0; v < V; ++v) acc[i][j][v] += x[v] * y[v];
      }
    }
  for (; p < pixels; ++p)
    for (size_t i = 0; i < MO; ++i)
      for (size_t j = 0; j < MC; ++j) acc[i][j][p % V] += go[(o0 + i) * pixels + p] * in[(c0 + j) * pixels + p];
  for (size_t i = 0; i < MO; ++i)
    for (size_t j = 0; j < MC; ++j) {
      Real total = 0;
      for (size_t v = 0; v < V; ++v) total += acc[i][j][v];
      grad_weights[(o0 + i) * ldw + c0 + j] += total;
    }
  (void)out_count;
  (void)in_count;
}

}  // namespace

template <typename Real>
void pointwise_backward_weight(size_t batch, size_t in_channels, size_t out_channels, size_t pixels,
                               const Real* in, const Real* grad_out, Real* grad_weights) {
  // grad_W[o, c] += sum_n sum_p grad_out[n, o, p] * in[n, c, p]: both rows are
  // contiguous along p, so each 3 x 4 tile is twelve running dot products.
  constexpr size_t TO = 3;
  constexpr size_t TC = 4;
  const size_t o_tiles = (out_channels + TO - 1) / TO;
  const long jobs = static_cast<long>(o_tiles);
  // Images outermost so one image's input rows stay cache-resident while
  // every output tile consumes them.
  for (size_t n = 0; n < batch; ++n) {
    const Real* go = grad_out + n * out_channels * pixels;
    const Real* src = in + n * in_channels * pixels;
#pragma omp parallel for schedule(static)
    for (long job = 0; job < jobs; ++job) {
      const size_t o0 = static_cast<size_t>(job) * TO;
      const size_t mo = std::min(TO, out_channels - o0);
      for (size_t c0 = 0; c0 < in_channels; c0 += TC) {
        const size_t mc = std::min(TC, in_channels - c0);
        if (mo == TO && mc == TC) {
          dot_tile<Real, TO, TC>(go, src, pixels, o0, c0, mo, mc, grad_weights, in_channels);
        } else {
          for (size_t i = 0; i < mo; ++i)
            for (size_t j = 0; j < mc; ++j)
              dot_tile<Real, 1, 1>(go, src, pixels, o0 + i, c0 + j, 1, 1, grad_weights, in_channels);
        }
      }
    }
  }
}

template <typename Real>
void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weights, Real* out) {
  const size_t k = g.kernel;
  const long jobs = static_cast<long>(g.batch * g.out_channels);
#pragma omp parallel for schedule(static)
  for (long job = 0; job < jobs; ++job) {
    const size_t n = static_cast<size_t>(job) / g.out_channels;
    const size_t o = static_cast<size_t>(job) % g.out_channels;
    Real* dst = out + static_cast<size_t>(job) * g.out_plane();
    std::fill(dst, dst + g.out_plane(), Real(0));
    for (size_t c = 0; c < g.in_channels; ++c) {
      const Real* src = in + (n * g.in_channels + c) * g.in_plane();
      const Real* w = weights + (o * g.in_channels + c) * k * k;
      for (size_t a = 0; a < k; ++a)
        for (size_t b = 0; b < k; ++b) plane_tap_forward(g, src, w[a * k + b], a, b, dst);
    }
  }
}

template <typename Real>
void conv2d_backward_input(const ConvGeometry& g, const Real* weights, const Real* grad_out,
                           Real* grad_in) {
  const size_t k = g.kernel;
  const long jobs = static_cast<long>(g.batch * g.in_channels);
#pragma omp parallel for schedule(static)
  for (long job = 0; job < jobs; ++job) {
    const size_t n = static_cast<size_t>(job) / g.in_channels;
    const size_t c = static_cast<size_t>(job) % g.in_channels;
    Real* gin = grad_in + static_cast<size_t>(job) * g.in_plane();
    for (size_t o = 0; o < g.out_channels; ++o) {
      const Real* go = grad_out + (n * g.out_channels + o) * g.out_plane();
      const Real* w = weights + (o * g.in_channels + c) * k * k;
      for (size_t a = 0; a < k; ++a)
        for (size_t b = 0; b < k; ++b) plane_tap_scatter(g, go, w[a * k + b], a, b, gin);
    }
  }
}

template <typename Real>
void conv2d_backward_weight(const ConvGeometry& g, const Real* in, const Real* grad_out,
                            Real* grad_weights) {
  const size_t k = g.kernel;
  const long outs = static_cast<long>(g.out_channels);
#pragma omp parallel for schedule(static)
  for (long ol = 0; ol < outs; ++ol) {
    const size_t o = static_cast<size_t>(ol);
    for (size_t n = 0; n < g.batch; ++n) {
      const Real* go = grad_out + (n * g.out_channels + o) * g.out_plane();
      for (size_t c = 0; c < g.in_channels; ++c) {
        const Real* src = in + (n * g.in_channels + c) * g.in_plane();
        Real* gw = grad_weights + (o * g.in_channels + c) * k * k;
        for (size_t a = 0; a < k; ++a)
          for (size_t b = 0; b < k; ++b) gw[a * k + b] += plane_tap_dot(g, go, src, a, b);
      }
    }
  }
}

#define MIXBENCH_INSTANTIATE(Real)                                                              \
  template void gemm_rows(bool, size_t, size_t, size_t, size_t, const Real*, size_t,            \
                          const Real*, size_t, Real*, size_t);                                  \
  template void depthwise_forward(const ConvGeometry&, const Real*, const Real*, Real*);       \
  template void depthwise_backward_input(const ConvGeometry&, const Real*, const Real*, Real*); \
  template void depthwise_backward_filter(const ConvGeometry&, const Real*, const Real*, Real*);\
  template void pointwise_forward(size_t, size_t, size_t, size_t, const Real*, const Real*,    \
                                  Real*);                                                      \
  template void pointwise_backward_input(size_t, size_t, size_t, size_t, const Real*,          \
                                         const Real*, Real*);                                  \
  template void pointwise_backward_weight(size_t, size_t, size_t, size_t, const Real*,         \
                                          const Real*, Real*);                                 \
  template void conv2d_forward(const ConvGeometry&, const Real*, const Real*, Real*);          \
  template void conv2d_backward_input(const ConvGeometry&, const Real*, const Real*, Real*);   \
  template void conv2d_backward_weight(const ConvGeometry&, const Real*, const Real*, Real*);

MIXBENCH_INSTANTIATE(float)
MIXBENCH_INSTANTIATE(double)
#undef MIXBENCH_INSTANTIATE

}  // namespace mixbench::kernels::parallel
