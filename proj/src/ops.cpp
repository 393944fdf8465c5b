#include "mixbench/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>

#include "mixbench/kernels.hpp"

namespace mixbench {
namespace {

using std::size_t;
namespace kp = kernels::parallel;

constexpr size_t kParallelThreshold = 1 << 14;

// Maps each flat index of `out` to the flat index of a broadcast operand.
std::vector<size_t> broadcast_index(const Shape& out, const Shape& operand) {
  const size_t rank = out.size();
  std::vector<size_t> strides(rank, 0);
  size_t stride = 1;
  for (size_t i = operand.size(); i-- > 0;) {
    const size_t axis = i + rank - operand.size();
    strides[axis] = operand[i] == 1 ? 0 : stride;
    stride *= operand[i];
  }
  const size_t n = shape_numel(out);
  std::vector<size_t> index(n);
  std::vector<size_t> coord(rank, 0);
  size_t offset = 0;
  for (size_t flat = 0; flat < n; ++flat) {
    index[flat] = offset;
    for (size_t axis = rank; axis-- > 0;) {
      if (++coord[axis] < out[axis]) {
        offset += strides[axis];
        break;
      }
      offset -= strides[axis] * (coord[axis] - 1);
      coord[axis] = 0;
    }
  }
  return index;
}

template <typename Real>
Real gelu_value(Real x) {
  return Real(0.5) * x * (Real(1) + std::erf(x * (Real(1) / std::numbers::sqrt2_v<Real>)));
}

template <typename Real>
Real gelu_derivative(Real x) {
  const Real cdf = Real(0.5) * (Real(1) + std::erf(x * (Real(1) / std::numbers::sqrt2_v<Real>)));
  const Real pdf = std::exp(Real(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<Real> *
                   (Real(1) / std::numbers::sqrt2_v<Real>);
  return cdf + x * pdf;
}

// Reductions with 16 interleaved partial sums, combined in a fixed order:
// vectorizable without reassociation flags and independent of thread count.
constexpr size_t kSumLanes = 16;

template <typename Real, typename Term>
Real lane_reduce(size_t n, Term term) {
  Real lanes[kSumLanes] = {};
  size_t i = 0;
  for (; i + kSumLanes <= n; i += kSumLanes)
#pragma omp simd
    for (size_t l = 0; l < kSumLanes; ++l) lanes[l] += term(i + l);
  for (; i < n; ++i) lanes[i % kSumLanes] += term(i);
  Real total = 0;
  for (size_t l = 0; l < kSumLanes; ++l) total += lanes[l];
  return total;
}

template <typename Real>
Real lane_sum(const Real* x, size_t n) {
  return lane_reduce<Real>(n, [x](size_t i) { return x[i]; });
}

// Whole-array GELU. The float path uses Eigen's vectorized erf/exp; the
// double path stays on std::erf so gradient checks see the exact function.
template <typename Real>
void gelu_forward(const Real* x, Real* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = gelu_value(x[i]);
}

template <typename Real>
void gelu_backward(const Real* x, const Real* g, Real* ga, size_t n) {
  for (size_t i = 0; i < n; ++i) ga[i] += g[i] * gelu_derivative(x[i]);
}

template <>
void gelu_forward<float>(const float* x, float* o, size_t n) {
  const Eigen::Map<const Eigen::ArrayXf> in(x, static_cast<Eigen::Index>(n));
  Eigen::Map<Eigen::ArrayXf> out(o, static_cast<Eigen::Index>(n));
  out = 0.5f * in * (1.0f + (in * (1.0f / std::numbers::sqrt2_v<float>)).erf());
}

template <>
void gelu_backward<float>(const float* x, const float* g, float* ga, size_t n) {
  const auto len = static_cast<Eigen::Index>(n);
  const Eigen::Map<const Eigen::ArrayXf> in(x, len);
  const Eigen::Map<const Eigen::ArrayXf> grad(g, len);
  Eigen::Map<Eigen::ArrayXf> acc(ga, len);
  const float inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<float> / std::numbers::sqrt2_v<float>;
  acc += grad * (0.5f * (1.0f + (in * (1.0f / std::numbers::sqrt2_v<float>)).erf()) +
                 in * (-0.5f * in.square()).exp() * inv_sqrt_2pi);
}

void require_rank(const Shape& shape, size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_string(shape));
  }
}

}  // namespace

template <typename Real>
Var<Real> elementwise(BinaryKind kind, const Var<Real>& a, const Var<Real>& b) {
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  const Shape out_shape = broadcast_shapes(av.shape(), bv.shape());
  const size_t n = shape_numel(out_shape);
  Tensor<Real> out(out_shape);

  const bool same = av.shape() == out_shape && bv.shape() == out_shape;
  std::vector<size_t> ia, ib;
  if (!same) {
    ia = broadcast_index(out_shape, av.shape());
    ib = broadcast_index(out_shape, bv.shape());
  }
  auto op = [kind](Real x, Real y) {
    switch (kind) {
      case BinaryKind::Add: return x + y;
      case BinaryKind::Sub: return x - y;
      case BinaryKind::Mul: return x * y;
    }
    return Real(0);
  };
  if (same) {
    const Real* x = av.data().data();
    const Real* y = bv.data().data();
    Real* o = out.data().data();
#pragma omp parallel for simd if (n > kParallelThreshold)
    for (size_t i = 0; i < n; ++i) o[i] = op(x[i], y[i]);
  } else {
    for (size_t i = 0; i < n; ++i) out[i] = op(av[ia[i]], bv[ib[i]]);
  }

  const size_t ida = a.id(), idb = b.id();
  return a.tape().record(std::move(out), {a, b},
                         [kind, ida, idb, n, same, ia = std::move(ia), ib = std::move(ib)](Tape<Real>& t, size_t self) {
    const auto g = t.grad(self);
    const Tensor<Real>& x = t.value(ida);
    const Tensor<Real>& y = t.value(idb);
    auto at_a = [&](size_t i) { return same ? i : ia[i]; };
    auto at_b = [&](size_t i) { return same ? i : ib[i]; };
    if (t.requires_grad(ida)) {
      auto ga = t.accumulator(ida);
      for (size_t i = 0; i < n; ++i) {
        const Real d = kind == BinaryKind::Mul ? y[at_b(i)] : Real(1);
        ga[at_a(i)] += g[i] * d;
      }
    }
    if (t.requires_grad(idb)) {
      auto gb = t.accumulator(idb);
      for (size_t i = 0; i < n; ++i) {
        const Real d = kind == BinaryKind::Mul ? x[at_a(i)] : (kind == BinaryKind::Sub ? Real(-1) : Real(1));
        gb[at_b(i)] += g[i] * d;
      }
    }
  });
}

template <typename Real>
Var<Real> elementwise(UnaryKind kind, const Var<Real>& a) {
  const Tensor<Real>& av = a.value();
  const size_t n = av.numel();
  Tensor<Real> out(av.shape());
  const Real* x = av.data().data();
  Real* o = out.data().data();
  if (kind == UnaryKind::Gelu) gelu_forward(x, o, n);
#pragma omp parallel for if (n > kParallelThreshold && kind != UnaryKind::Gelu)
  for (size_t i = 0; i < n; ++i) {
    switch (kind) {
      case UnaryKind::Neg: o[i] = -x[i]; break;
      case UnaryKind::Relu: o[i] = x[i] > Real(0) ? x[i] : Real(0); break;
      case UnaryKind::Gelu: break;
      case UnaryKind::Square: o[i] = x[i] * x[i]; break;
    }
  }
  const size_t ida = a.id();
  return a.tape().record(std::move(out), {a}, [kind, ida, n](Tape<Real>& t, size_t self) {
    const Real* g = t.grad(self).data();
    const Real* x = t.value(ida).data().data();
    Real* ga = t.accumulator(ida).data();
    if (kind == UnaryKind::Gelu) {
      gelu_backward(x, g, ga, n);
      return;
    }
#pragma omp parallel for if (n > kParallelThreshold)
    for (size_t i = 0; i < n; ++i) {
      switch (kind) {
        case UnaryKind::Neg: ga[i] -= g[i]; break;
        case UnaryKind::Relu: ga[i] += x[i] > Real(0) ? g[i] : Real(0); break;
        case UnaryKind::Gelu: break;
        case UnaryKind::Square: ga[i] += g[i] * Real(2) * x[i]; break;
      }
    }
  });
}

template <typename Real>
Var<Real> scale(const Var<Real>& a, Real factor) {
  Tensor<Real> out(a.shape());
  const auto x = a.value().data();
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  const size_t ida = a.id();
  return a.tape().record(std::move(out), {a}, [ida, factor](Tape<Real>& t, size_t self) {
    const auto g = t.grad(self);
    auto ga = t.accumulator(ida);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename Real>
Var<Real> sum(const Var<Real>& a) {
  const Real total = lane_sum(a.value().data().data(), a.value().numel());
  const size_t ida = a.id();
  return a.tape().record(Tensor<Real>::scalar(total), {a}, [ida](Tape<Real>& t, size_t self) {
    const Real g = t.grad(self)[0];
    for (auto& v : t.accumulator(ida)) v += g;
  });
}

template <typename Real>
Var<Real> mean(const Var<Real>& a) {
  const size_t n = a.value().numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), Real(1) / static_cast<Real>(n));
}

template <typename Real>
Var<Real> conv2d_depthwise(const Var<Real>& input, const Var<Real>& filters,
                           size_t depth_multiplier, size_t stride) {
  const Shape& xs = input.shape();
  const Shape& fs = filters.shape();
  require_rank(xs, 4, "conv2d_depthwise input");
  require_rank(fs, 4, "conv2d_depthwise filters");
  const size_t channels = xs[1];
  if (depth_multiplier == 0 || fs[0] % channels != 0 || fs[0] / channels != depth_multiplier) {
    throw ShapeError("depthwise filter count " + std::to_string(fs[0]) +
                     " is not input channels " + std::to_string(channels) + " x depth multiplier " +
                     std::to_string(depth_multiplier));
  }
  if (fs[1] != 1 || fs[2] != fs[3]) {
    throw ShapeError("depthwise filters must be [C*d,1,k,k], got " + shape_string(fs));
  }
  if (stride == 0) throw ShapeError("stride must be positive");
  const auto g = kernels::ConvGeometry::same(xs[0], channels, xs[2], xs[3], fs[0], fs[2], stride);
  Tensor<Real> out({g.batch, g.out_channels, g.out_height, g.out_width});
  kp::depthwise_forward(g, input.value().data().data(), filters.value().data().data(),
                        out.data().data());
  const size_t idx = input.id(), idf = filters.id();
  return input.tape().record(std::move(out), {input, filters}, [g, idx, idf](Tape<Real>& t, size_t self) {
    const Real* go = t.grad(self).data();
    if (t.requires_grad(idx)) {
      kp::depthwise_backward_input(g, t.value(idf).data().data(), go, t.accumulator(idx).data());
    }
    if (t.requires_grad(idf)) {
      kp::depthwise_backward_filter(g, t.value(idx).data().data(), go, t.accumulator(idf).data());
    }
  });
}

template <typename Real>
Var<Real> conv2d_pointwise(const Var<Real>& input, const Var<Real>& weights) {
  const Shape& xs = input.shape();
  const Shape& ws = weights.shape();
  require_rank(xs, 4, "conv2d_pointwise input");
  require_rank(ws, 2, "conv2d_pointwise weights");
  if (ws[1] != xs[1]) {
    throw ShapeError("pointwise weights " + shape_string(ws) + " do not match input channels of " +
                     shape_string(xs));
  }
  const size_t batch = xs[0], cin = xs[1], cout = ws[0], pixels = xs[2] * xs[3];
  Tensor<Real> out({batch, cout, xs[2], xs[3]});
  kp::pointwise_forward(batch, cin, cout, pixels, input.value().data().data(),
                        weights.value().data().data(), out.data().data());
  const size_t idx = input.id(), idw = weights.id();
  return input.tape().record(std::move(out), {input, weights},
                             [=](Tape<Real>& t, size_t self) {
    const Real* go = t.grad(self).data();
    if (t.requires_grad(idx)) {
      kp::pointwise_backward_input(batch, cin, cout, pixels, t.value(idw).data().data(), go,
                                   t.accumulator(idx).data());
    }
    if (t.requires_grad(idw)) {
      kp::pointwise_backward_weight(batch, cin, cout, pixels, t.value(idx).data().data(), go,
                                    t.accumulator(idw).data());
    }
  });
}

template <typename Real>
Var<Real> conv2d(const Var<Real>& input, const Var<Real>& weights, size_t stride, Padding padding) {
  const Shape& xs = input.shape();
  const Shape& ws = weights.shape();
  require_rank(xs, 4, "conv2d input");
  require_rank(ws, 4, "conv2d weights");
  if (ws[1] != xs[1] || ws[2] != ws[3]) {
    throw ShapeError("conv2d weights " + shape_string(ws) + " incompatible with input " +
                     shape_string(xs));
  }
  if (stride == 0) throw ShapeError("stride must be positive");
  if (padding == Padding::Valid && (xs[2] < ws[2] || xs[3] < ws[3])) {
    throw ShapeError("conv2d kernel larger than input " + shape_string(xs));
  }
  const auto g = padding == Padding::Same
                     ? kernels::ConvGeometry::same(xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride)
                     : kernels::ConvGeometry::valid(xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride);
  Tensor<Real> out({g.batch, g.out_channels, g.out_height, g.out_width});
  kp::conv2d_forward(g, input.value().data().data(), weights.value().data().data(), out.data().data());
  const size_t idx = input.id(), idw = weights.id();
  return input.tape().record(std::move(out), {input, weights}, [g, idx, idw](Tape<Real>& t, size_t self) {
    const Real* go = t.grad(self).data();
    if (t.requires_grad(idx)) {
      kp::conv2d_backward_input(g, t.value(idw).data().data(), go, t.accumulator(idx).data());
    }
    if (t.requires_grad(idw)) {
      kp::conv2d_backward_weight(g, t.value(idx).data().data(), go, t.accumulator(idw).data());
    }
  });
}

template <typename Real>
Var<Real> subsample(const Var<Real>& input, size_t stride) {
  const Shape& xs = input.shape();
  require_rank(xs, 4, "subsample input");
  if (stride == 0) throw ShapeError("stride must be positive");
  const size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  const size_t oh = (h - 1) / stride + 1, ow = (w - 1) / stride + 1;
  Tensor<Real> out({xs[0], xs[1], oh, ow});
  const auto x = input.value().data();
  for (size_t p = 0; p < planes; ++p)
    for (size_t i = 0; i < oh; ++i)
      for (size_t j = 0; j < ow; ++j) out[(p * oh + i) * ow + j] = x[(p * h + i * stride) * w + j * stride];
  const size_t idx = input.id();
  return input.tape().record(std::move(out), {input}, [=](Tape<Real>& t, size_t self) {
    const auto g = t.grad(self);
    auto gx = t.accumulator(idx);
    for (size_t p = 0; p < planes; ++p)
      for (size_t i = 0; i < oh; ++i)
        for (size_t j = 0; j < ow; ++j) gx[(p * h + i * stride) * w + j * stride] += g[(p * oh + i) * ow + j];
  });
}

template <typename Real>
Var<Real> batch_norm(const Var<Real>& input, const Var<Real>& gamma, const Var<Real>& beta,
                     RunningStats<Real>& stats, bool training) {
  const Shape& xs = input.shape();
  require_rank(xs, 4, "batch_norm input");
  const size_t batch = xs[0], channels = xs[1], plane = xs[2] * xs[3];
  if (batch == 0) throw ShapeError("batch_norm on an empty batch");
  if (gamma.value().numel() != channels || beta.value().numel() != channels) {
    throw ShapeError("batch_norm affine parameters must have " + std::to_string(channels) +
                     " entries, got gamma " + shape_string(gamma.shape()) + ", beta " +
                     shape_string(beta.shape()));
  }
  if (stats.mean.size() != channels) {
    throw ShapeError("batch_norm running stats sized for " + std::to_string(stats.mean.size()) +
                     " channels, input has " + std::to_string(channels));
  }
  const size_t count = batch * plane;
  const Real* x = input.value().data().data();
  const Real* gm = gamma.value().data().data();
  const Real* bt = beta.value().data().data();
  Tensor<Real> out(xs);
  Tensor<Real> xhat(xs);
  std::vector<Real> inv_std(channels);
  Real* out_data = out.data().data();
  Real* xhat_data = xhat.data().data();

  const long nch = static_cast<long>(channels);
#pragma omp parallel for schedule(static)
  for (long cl = 0; cl < nch; ++cl) {
    const size_t c = static_cast<size_t>(cl);
    Real mu, var;
    if (training) {
      Real s = 0;
      for (size_t n = 0; n < batch; ++n) {
        const Real* row = x + (n * channels + c) * plane;
        s += lane_sum(row, plane);
      }
      mu = s / static_cast<Real>(count);
      Real ss = 0;
      for (size_t n = 0; n < batch; ++n) {
        const Real* row = x + (n * channels + c) * plane;
        ss += lane_reduce<Real>(plane, [row, mu](size_t p) { return (row[p] - mu) * (row[p] - mu); });
      }
      var = ss / static_cast<Real>(count);
      const Real unbiased = count > 1 ? ss / static_cast<Real>(count - 1) : var;
      stats.mean[c] = (Real(1) - stats.momentum) * stats.mean[c] + stats.momentum * mu;
      stats.var[c] = (Real(1) - stats.momentum) * stats.var[c] + stats.momentum * unbiased;
    } else {
      mu = stats.mean[c];
      var = stats.var[c];
    }
    const Real is = Real(1) / std::sqrt(var + stats.eps);
    inv_std[c] = is;
    const Real scale_c = gm[c], shift_c = bt[c];
    for (size_t n = 0; n < batch; ++n) {
      const size_t base = (n * channels + c) * plane;
      const Real* xr = x + base;
      Real* hr = xhat_data + base;
      Real* orow = out_data + base;
#pragma omp simd
      for (size_t p = 0; p < plane; ++p) {
        const Real h = (xr[p] - mu) * is;
        hr[p] = h;
        orow[p] = scale_c * h + shift_c;
      }
    }
  }

  const size_t idx = input.id(), idg = gamma.id(), idb = beta.id();
  return input.tape().record(
      std::move(out), {input, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Real>& t, size_t self) {
        const Real* g = t.grad(self).data();
        const Real* gm = t.value(idg).data().data();
        const bool need_x = t.requires_grad(idx);
        Real* gx = need_x ? t.accumulator(idx).data() : nullptr;
        Real* gg = t.requires_grad(idg) ? t.accumulator(idg).data() : nullptr;
        Real* gb = t.requires_grad(idb) ? t.accumulator(idb).data() : nullptr;
#pragma omp parallel for schedule(static)
        for (long cl = 0; cl < static_cast<long>(channels); ++cl) {
          const size_t c = static_cast<size_t>(cl);
          Real sum_g = 0, sum_gx = 0;
          for (size_t n = 0; n < batch; ++n) {
            const size_t base = (n * channels + c) * plane;
            sum_g += lane_sum(g + base, plane);
            sum_gx += lane_reduce<Real>(plane, [&](size_t p) { return g[base + p] * xhat.data()[base + p]; });
          }
          if (gg) gg[c] += sum_gx;
          if (gb) gb[c] += sum_g;
          if (!gx) continue;
          const Real k = gm[c] * inv_std[c];
          const Real m = static_cast<Real>(count);
          const Real mean_g = training ? sum_g / m : Real(0);
          const Real mean_gx = training ? sum_gx / m : Real(0);
          const Real* hat = xhat.data().data();
          for (size_t n = 0; n < batch; ++n) {
            const size_t base = (n * channels + c) * plane;
            const Real* gr = g + base;
            const Real* hr = hat + base;
            Real* gxr = gx + base;
#pragma omp simd
            for (size_t p = 0; p < plane; ++p) gxr[p] += k * (gr[p] - mean_g - hr[p] * mean_gx);
          }
        }
      });
}

template <typename Real>
Var<Real> global_avg_pool(const Var<Real>& input) {
  const Shape& xs = input.shape();
  require_rank(xs, 4, "global_avg_pool input");
  const size_t rows = xs[0] * xs[1], plane = xs[2] * xs[3];
  Tensor<Real> out({xs[0], xs[1]});
  const auto x = input.value().data();
  for (size_t r = 0; r < rows; ++r) {
    Real s = 0;
    s += lane_sum(x.data() + r * plane, plane);
    out[r] = s / static_cast<Real>(plane);
  }
  const size_t idx = input.id();
  return input.tape().record(std::move(out), {input}, [=](Tape<Real>& t, size_t self) {
    const auto g = t.grad(self);
    auto gx = t.accumulator(idx);
    const Real inv = Real(1) / static_cast<Real>(plane);
    for (size_t r = 0; r < rows; ++r)
      for (size_t p = 0; p < plane; ++p) gx[r * plane + p] += g[r] * inv;
  });
}

template <typename Real>
Var<Real> linear(const Var<Real>& input, const Var<Real>& weight, const Var<Real>* bias) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  require_rank(xs, 2, "linear input");
  require_rank(ws, 2, "linear weight");
  if (ws[1] != xs[1]) {
    throw ShapeError("linear weight " + shape_string(ws) + " does not match input " + shape_string(xs));
  }
  const size_t batch = xs[0], in = xs[1], outs = ws[0];
  if (bias && bias->value().numel() != outs) {
    throw ShapeError("linear bias " + shape_string(bias->shape()) + " does not match " +
                     std::to_string(outs) + " outputs");
  }
  const auto x = input.value().data();
  const auto w = weight.value().data();
  Tensor<Real> out({batch, outs});
  for (size_t n = 0; n < batch; ++n)
    for (size_t o = 0; o < outs; ++o) {
      Real s = bias ? bias->value()[o] : Real(0);
      for (size_t i = 0; i < in; ++i) s += w[o * in + i] * x[n * in + i];
      out[n * outs + o] = s;
    }
  const size_t idx = input.id(), idw = weight.id();
  const bool has_bias = bias != nullptr;
  const size_t idb = has_bias ? bias->id() : 0;
  std::vector<Var<Real>> inputs = {input, weight};
  if (has_bias) inputs.push_back(*bias);
  return input.tape().record(std::move(out), inputs, [=](Tape<Real>& t, size_t self) {
    const auto g = t.grad(self);
    const auto xv = t.value(idx).data();
    const auto wv = t.value(idw).data();
    if (t.requires_grad(idx)) {
      auto gx = t.accumulator(idx);
      for (size_t n = 0; n < batch; ++n)
        for (size_t o = 0; o < outs; ++o)
          for (size_t i = 0; i < in; ++i) gx[n * in + i] += g[n * outs + o] * wv[o * in + i];
    }
    if (t.requires_grad(idw)) {
      auto gw = t.accumulator(idw);
      for (size_t o = 0; o < outs; ++o)
        for (size_t n = 0; n < batch; ++n)
          for (size_t i = 0; i < in; ++i) gw[o * in + i] += g[n * outs + o] * xv[n * in + i];
    }
    if (has_bias && t.requires_grad(idb)) {
      auto gb = t.accumulator(idb);
      for (size_t n = 0; n < batch; ++n)
        for (size_t o = 0; o < outs; ++o) gb[o] += g[n * outs + o];
    }
  });
}

template <typename Real>
Var<Real> cross_entropy(const Var<Real>& logits, std::span<const std::int32_t> labels) {
  const Shape& ls = logits.shape();
  require_rank(ls, 2, "cross_entropy logits");
  const size_t batch = ls[0], classes = ls[1];
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy got " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(batch) + " rows");
  }
  if (batch == 0) throw ShapeError("cross_entropy on an empty batch");
  for (auto y : labels) {
    if (y < 0 || static_cast<size_t>(y) >= classes) {
      throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  const auto z = logits.value().data();
  std::vector<Real> probs(batch * classes);
  Real loss = 0;
  for (size_t n = 0; n < batch; ++n) {
    const Real* row = z.data() + n * classes;
    const Real m = *std::max_element(row, row + classes);
    Real s = 0;
    for (size_t c = 0; c < classes; ++c) s += std::exp(row[c] - m);
    const Real log_s = std::log(s);
    for (size_t c = 0; c < classes; ++c) probs[n * classes + c] = std::exp(row[c] - m - log_s);
    loss -= row[labels[n]] - m - log_s;
  }
  loss /= static_cast<Real>(batch);
  std::vector<std::int32_t> targets(labels.begin(), labels.end());
  const size_t idl = logits.id();
  return logits.tape().record(
      Tensor<Real>::scalar(loss), {logits},
      [=, probs = std::move(probs), targets = std::move(targets)](Tape<Real>& t, size_t self) {
        const Real g = t.grad(self)[0] / static_cast<Real>(batch);
        auto gz = t.accumulator(idl);
        for (size_t n = 0; n < batch; ++n)
          for (size_t c = 0; c < classes; ++c) {
            const Real onehot = static_cast<size_t>(targets[n]) == c ? Real(1) : Real(0);
            gz[n * classes + c] += g * (probs[n * classes + c] - onehot);
          }
      });
}

template <typename Real>
Var<Real> mse(const Var<Real>& prediction, const Var<Real>& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("mse shapes differ: " + shape_string(prediction.shape()) + " vs " +
                     shape_string(target.shape()));
  }
  const size_t n = prediction.value().numel();
  if (n == 0) throw ShapeError("mse of empty tensors");
  const Real* p = prediction.value().data().data();
  const Real* q = target.value().data().data();
  const Real s = lane_reduce<Real>(n, [p, q](size_t i) { return (p[i] - q[i]) * (p[i] - q[i]); });
  const size_t idp = prediction.id(), idt = target.id();
  return prediction.tape().record(
      Tensor<Real>::scalar(s / static_cast<Real>(n)), {prediction, target}, [=](Tape<Real>& t, size_t self) {
        const Real g = t.grad(self)[0] * Real(2) / static_cast<Real>(n);
        const auto pv = t.value(idp).data();
        const auto qv = t.value(idt).data();
        if (t.requires_grad(idp)) {
          auto gp = t.accumulator(idp);
          for (size_t i = 0; i < n; ++i) gp[i] += g * (pv[i] - qv[i]);
        }
        if (t.requires_grad(idt)) {
          auto gq = t.accumulator(idt);
          for (size_t i = 0; i < n; ++i) gq[i] -= g * (pv[i] - qv[i]);
        }
      });
}

#define MIXBENCH_INSTANTIATE(Real)                                                                   \
  template Var<Real> elementwise(BinaryKind, const Var<Real>&, const Var<Real>&);                   \
  template Var<Real> elementwise(UnaryKind, const Var<Real>&);                                      \
  template Var<Real> scale(const Var<Real>&, Real);                                                 \
  template Var<Real> sum(const Var<Real>&);                                                         \
  template Var<Real> mean(const Var<Real>&);                                                        \
  template Var<Real> conv2d_depthwise(const Var<Real>&, const Var<Real>&, size_t, size_t);          \
  template Var<Real> conv2d_pointwise(const Var<Real>&, const Var<Real>&);                          \
  template Var<Real> conv2d(const Var<Real>&, const Var<Real>&, size_t, Padding);                   \
  template Var<Real> subsample(const Var<Real>&, size_t);                                           \
  template Var<Real> batch_norm(const Var<Real>&, const Var<Real>&, const Var<Real>&,               \
                                RunningStats<Real>&, bool);                                         \
  template Var<Real> global_avg_pool(const Var<Real>&);                                             \
  template Var<Real> linear(const Var<Real>&, const Var<Real>&, const Var<Real>*);                  \
  template Var<Real> cross_entropy(const Var<Real>&, std::span<const std::int32_t>);                \
  template Var<Real> mse(const Var<Real>&, const Var<Real>&);

MIXBENCH_INSTANTIATE(float)
MIXBENCH_INSTANTIATE(double)
#undef MIXBENCH_INSTANTIATE

}  // namespace mixbench
