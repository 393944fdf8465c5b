#include "mixbench/kernels.hpp"

#include <cstddef>

namespace mixbench::kernels {

ConvGeometry ConvGeometry::same(std::size_t batch, std::size_t channels, std::size_t height,
                                std::size_t width, std::size_t out_channels, std::size_t kernel,
                                std::size_t stride) {
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = channels;
  g.in_height = height;
  g.in_width = width;
  g.out_channels = out_channels;
  g.kernel = kernel;
  g.stride = stride;
  g.pad_top = (kernel - 1) / 2;
  g.pad_left = (kernel - 1) / 2;
  // total padding k-1: output = floor((H + k - 1 - k) / s) + 1
  g.out_height = (height - 1) / stride + 1;
  g.out_width = (width - 1) / stride + 1;
  return g;
}

ConvGeometry ConvGeometry::valid(std::size_t batch, std::size_t channels, std::size_t height,
                                 std::size_t width, std::size_t out_channels, std::size_t kernel,
                                 std::size_t stride) {
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = channels;
  g.in_height = height;
  g.in_width = width;
  g.out_channels = out_channels;
  g.kernel = kernel;
  g.stride = stride;
  g.out_height = (height - kernel) / stride + 1;
  g.out_width = (width - kernel) / stride + 1;
  return g;
}

namespace reference {
namespace {

// Input coordinate for output coordinate `o` and tap `t`, or -1 when it lands
// in the padding.
inline long source_index(std::size_t o, std::size_t t, std::size_t stride, std::size_t pad,
                         std::size_t extent) {
  const long i = static_cast<long>(o * stride + t) - static_cast<long>(pad);
  return (i < 0 || i >= static_cast<long>(extent)) ? -1 : i;
}

}  // namespace

template <typename Real>
void depthwise_forward(const ConvGeometry& g, const Real* in, const Real* filters, Real* out) {
  const std::size_t d = g.out_channels / g.in_channels;
  const std::size_t k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      const std::size_t c = oc / d;
      for (std::size_t oh = 0; oh < g.out_height; ++oh)
        for (std::size_t ow = 0; ow < g.out_width; ++ow) {
          Real acc = 0;
          for (std::size_t a = 0; a < k; ++a) {
            const long ih = source_index(oh, a, g.stride, g.pad_top, g.in_height);
            if (ih < 0) continue;
            for (std::size_t b = 0; b < k; ++b) {
              const long iw = source_index(ow, b, g.stride, g.pad_left, g.in_width);
              if (iw < 0) continue;
              acc += filters[(oc * k + a) * k + b] *
                     in[((n * g.in_channels + c) * g.in_height + ih) * g.in_width + iw];
            }
          }
          out[((n * g.out_channels + oc) * g.out_height + oh) * g.out_width + ow] = acc;
        }
    }
}

template <typename Real>
void depthwise_backward_input(const ConvGeometry& g, const Real* filters, const Real* grad_out,
                              Real* grad_in) {
  const std::size_t d = g.out_channels / g.in_channels;
  const std::size_t k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      const std::size_t c = oc / d;
      for (std::size_t oh = 0; oh < g.out_height; ++oh)
        for (std::size_t ow = 0; ow < g.out_width; ++ow) {
          const Real go = grad_out[((n * g.out_channels + oc) * g.out_height + oh) * g.out_width + ow];
          for (std::size_t a = 0; a < k; ++a) {
            const long ih = source_index(oh, a, g.stride, g.pad_top, g.in_height);
            if (ih < 0) continue;
            for (std::size_t b = 0; b < k; ++b) {
              const long iw = source_index(ow, b, g.stride, g.pad_left, g.in_width);
              if (iw < 0) continue;
              grad_in[((n * g.in_channels + c) * g.in_height + ih) * g.in_width + iw] +=
                  filters[(oc * k + a) * k + b] * go;
            }
          }
        }
    }
}

template <typename Real>
void depthwise_backward_filter(const ConvGeometry& g, const Real* in, const Real* grad_out,
                               Real* grad_filters) {
  const std::size_t d = g.out_channels / g.in_channels;
  const std::size_t k = g.kernel;
  for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
    const std::size_t c = oc / d;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        Real acc = 0;
        for (std::size_t n = 0; n < g.batch; ++n)
          for (std::size_t oh = 0; oh < g.out_height; ++oh) {
            const long ih = source_index(oh, a, g.stride, g.pad_top, g.in_height);
            if (ih < 0) continue;
            for (std::size_t ow = 0; ow < g.out_width; ++ow) {
              const long iw = source_index(ow, b, g.stride, g.pad_left, g.in_width);
              if (iw < 0) continue;
              acc += grad_out[((n * g.out_channels + oc) * g.out_height + oh) * g.out_width + ow] *
                     in[((n * g.in_channels + c) * g.in_height + ih) * g.in_width + iw];
            }
          }
        grad_filters[(oc * k + a) * k + b] += acc;
      }
  }
}

template <typename Real>
void pointwise_forward(std::size_t batch, std::size_t in_channels, std::size_t out_channels,
                       std::size_t pixels, const Real* in, const Real* weights, Real* out) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_channels; ++o)
      for (std::size_t p = 0; p < pixels; ++p) {
        Real acc = 0;
        for (std::size_t c = 0; c < in_channels; ++c)
          acc += weights[o * in_channels + c] * in[(n * in_channels + c) * pixels + p];
        out[(n * out_channels + o) * pixels + p] = acc;
      }
}

template <typename Real>
void pointwise_backward_input(std::size_t batch, std::size_t in_channels,
                              std::size_t out_channels, std::size_t pixels, const Real* weights,
                              const Real* grad_out, Real* grad_in) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < in_channels; ++c)
      for (std::size_t p = 0; p < pixels; ++p) {
        Real acc = 0;
        for (std::size_t o = 0; o < out_channels; ++o)
          acc += weights[o * in_channels + c] * grad_out[(n * out_channels + o) * pixels + p];
        grad_in[(n * in_channels + c) * pixels + p] += acc;
      }
}

template <typename Real>
void pointwise_backward_weight(std::size_t batch, std::size_t in_channels,
                               std::size_t out_channels, std::size_t pixels, const Real* in,
                               const Real* grad_out, Real* grad_weights) {
  for (std::size_t o = 0; o < out_channels; ++o)
    for (std::size_t c = 0; c < in_channels; ++c) {
      Real acc = 0;
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t p = 0; p < pixels; ++p)
          acc += grad_out[(n * out_channels + o) * pixels + p] * in[(n * in_channels + c) * pixels + p];
      grad_weights[o * in_channels + c] += acc;
    }
}

template <typename Real>
void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weights, Real* out) {
  const std::size_t k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oh = 0; oh < g.out_height; ++oh)
        for (std::size_t ow = 0; ow < g.out_width; ++ow) {
          Real acc = 0;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t a = 0; a < k; ++a) {
              const long ih = source_index(oh, a, g.stride, g.pad_top, g.in_height);
              if (ih < 0) continue;
              for (std::size_t b = 0; b < k; ++b) {
                const long iw = source_index(ow, b, g.stride, g.pad_left, g.in_width);
                if (iw < 0) continue;
                acc += weights[((o * g.in_channels + c) * k + a) * k + b] *
                       in[((n * g.in_channels + c) * g.in_height + ih) * g.in_width + iw];
              }
            }
          out[((n * g.out_channels + o) * g.out_height + oh) * g.out_width + ow] = acc;
        }
}

template <typename Real>
void conv2d_backward_input(const ConvGeometry& g, const Real* weights, const Real* grad_out,
                           Real* grad_in) {
  const std::size_t k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oh = 0; oh < g.out_height; ++oh)
        for (std::size_t ow = 0; ow < g.out_width; ++ow) {
          const Real go = grad_out[((n * g.out_channels + o) * g.out_height + oh) * g.out_width + ow];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t a = 0; a < k; ++a) {
              const long ih = source_index(oh, a, g.stride, g.pad_top, g.in_height);
              if (ih < 0) continue;
              for (std::size_t b = 0; b < k; ++b) {
                const long iw = source_index(ow, b, g.stride, g.pad_left, g.in_width);
                if (iw < 0) continue;
                grad_in[((n * g.in_channels + c) * g.in_height + ih) * g.in_width + iw] +=
                    weights[((o * g.in_channels + c) * k + a) * k + b] * go;
              }
            }
        }
}

template <typename Real>
void conv2d_backward_weight(const ConvGeometry& g, const Real* in, const Real* grad_out,
                            Real* grad_weights) {
  const std::size_t k = g.kernel;
  for (std::size_t o = 0; o < g.out_channels; ++o)
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) {
          Real acc = 0;
          for (std::size_t n = 0; n < g.batch; ++n)
            for (std::size_t oh = 0; oh < g.out_height; ++oh) {
              const long ih = source_index(oh, a, g.stride, g.pad_top, g.in_height);
              if (ih < 0) continue;
              for (std::size_t ow = 0; ow < g.out_width; ++ow) {
                const long iw = source_index(ow, b, g.stride, g.pad_left, g.in_width);
                if (iw < 0) continue;
                acc += grad_out[((n * g.out_channels + o) * g.out_height + oh) * g.out_width + ow] *
                       in[((n * g.in_channels + c) * g.in_height + ih) * g.in_width + iw];
              }
            }
          grad_weights[((o * g.in_channels + c) * k + a) * k + b] += acc;
        }
}

#define MIXBENCH_INSTANTIATE(Real)                                                              \
  template void depthwise_forward(const ConvGeometry&, const Real*, const Real*, Real*);       \
  template void depthwise_backward_input(const ConvGeometry&, const Real*, const Real*, Real*); \
  template void depthwise_backward_filter(const ConvGeometry&, const Real*, const Real*, Real*);\
  template void pointwise_forward(std::size_t, std::size_t, std::size_t, std::size_t,          \
                                  const Real*, const Real*, Real*);                            \
  template void pointwise_backward_input(std::size_t, std::size_t, std::size_t, std::size_t,   \
                                         const Real*, const Real*, Real*);                     \
  template void pointwise_backward_weight(std::size_t, std::size_t, std::size_t, std::size_t,  \
                                          const Real*, const Real*, Real*);                    \
  template void conv2d_forward(const ConvGeometry&, const Real*, const Real*, Real*);          \
  template void conv2d_backward_input(const ConvGeometry&, const Real*, const Real*, Real*);   \
  template void conv2d_backward_weight(const ConvGeometry&, const Real*, const Real*, Real*);

MIXBENCH_INSTANTIATE(float)
MIXBENCH_INSTANTIATE(double)
#undef MIXBENCH_INSTANTIATE

}  // namespace reference
}  // namespace mixbench::kernels
