#pragma once

#include <cstddef>

// Compute kernels for the convolution family. Each kernel exists twice:
//   kernels::reference  plain serial loops, kept as the test oracle
//   kernels::parallel   OpenMP + register-blocked versions used by the ops
// Gradient kernels accumulate (+=) into their output buffers.
// Both sets reduce in a fixed order, so results do not depend on thread count.

namespace mixbench::kernels {

// NCHW geometry shared by the spatial kernels. Padding is "same"-style: the
// caller chooses pad_top/pad_left, the bottom/right padding is implied by the
// output size.
struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_height = 0;
  std::size_t in_width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;
  std::size_t out_height = 0;
  std::size_t out_width = 0;

  std::size_t in_plane() const { return in_height * in_width; }
  std::size_t out_plane() const { return out_height * out_width; }

  // Size-preserving padding (at stride 1): floor((k-1)/2) before, ceil((k-1)/2) after.
  static ConvGeometry same(std::size_t batch, std::size_t channels, std::size_t height,
                           std::size_t width, std::size_t out_channels, std::size_t kernel,
                           std::size_t stride = 1);
  // No padding; used by patch-projection stems (kernel == stride == patch).
  static ConvGeometry valid(std::size_t batch, std::size_t channels, std::size_t height,
                            std::size_t width, std::size_t out_channels, std::size_t kernel,
                            std::size_t stride);
};

namespace reference {

// out[n, c*d+j] = in[n, c] (*) filters[c*d+j]; g.out_channels == C*d.
template <typename Real>
void depthwise_forward(const ConvGeometry& g, const Real* in, const Real* filters, Real* out);
template <typename Real>
void depthwise_backward_input(const ConvGeometry& g, const Real* filters, const Real* grad_out,
                              Real* grad_in);
template <typename Real>
void depthwise_backward_filter(const ConvGeometry& g, const Real* in, const Real* grad_out,
                               Real* grad_filters);

// out[n, o, p] = sum_c weights[o, c] * in[n, c, p]
template <typename Real>
void pointwise_forward(std::size_t batch, std::size_t in_channels, std::size_t out_channels,
                       std::size_t pixels, const Real* in, const Real* weights, Real* out);
template <typename Real>
void pointwise_backward_input(std::size_t batch, std::size_t in_channels,
                              std::size_t out_channels, std::size_t pixels, const Real* weights,
                              const Real* grad_out, Real* grad_in);
template <typename Real>
void pointwise_backward_weight(std::size_t batch, std::size_t in_channels,
                               std::size_t out_channels, std::size_t pixels, const Real* in,
                               const Real* grad_out, Real* grad_weights);

// Dense convolution, weights [out_channels, in_channels, k, k].
template <typename Real>
void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weights, Real* out);
template <typename Real>
void conv2d_backward_input(const ConvGeometry& g, const Real* weights, const Real* grad_out,
                           Real* grad_in);
template <typename Real>
void conv2d_backward_weight(const ConvGeometry& g, const Real* in, const Real* grad_out,
                            Real* grad_weights);

}  // namespace reference

namespace parallel {

template <typename Real>
void depthwise_forward(const ConvGeometry& g, const Real* in, const Real* filters, Real* out);
template <typename Real>
void depthwise_backward_input(const ConvGeometry& g, const Real* filters, const Real* grad_out,
                              Real* grad_in);
template <typename Real>
void depthwise_backward_filter(const ConvGeometry& g, const Real* in, const Real* grad_out,
                               Real* grad_filters);

template <typename Real>
void pointwise_forward(std::size_t batch, std::size_t in_channels, std::size_t out_channels,
                       std::size_t pixels, const Real* in, const Real* weights, Real* out);
template <typename Real>
void pointwise_backward_input(std::size_t batch, std::size_t in_channels,
                              std::size_t out_channels, std::size_t pixels, const Real* weights,
                              const Real* grad_out, Real* grad_in);
template <typename Real>
void pointwise_backward_weight(std::size_t batch, std::size_t in_channels,
                               std::size_t out_channels, std::size_t pixels, const Real* in,
                               const Real* grad_out, Real* grad_weights);

template <typename Real>
void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weights, Real* out);
template <typename Real>
void conv2d_backward_input(const ConvGeometry& g, const Real* weights, const Real* grad_out,
                           Real* grad_in);
template <typename Real>
void conv2d_backward_weight(const ConvGeometry& g, const Real* in, const Real* grad_out,
                            Real* grad_weights);

// C[rows] += op(A) * B over the row range, row-major. op(A) is A (M x K) or,
// with trans_a, the transpose of a K x M matrix.
template <typename Real>
void gemm_rows(bool trans_a, std::size_t row_begin, std::size_t row_end, std::size_t n,
               std::size_t k, const Real* a, std::size_t lda, const Real* b, std::size_t ldb,
               Real* c, std::size_t ldc);

}  // namespace parallel

}  // namespace mixbench::kernels
