#include "testkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mixbench::testkit {

Tensor<double> random_tensor(const Shape& shape, SplitMix64& rng, double lo, double hi) {
  Tensor<double> t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

namespace {

double at4(const Tensor<double>& t, std::size_t n, std::size_t c, long y, long x) {
  const long h = static_cast<long>(t.dim(2)), w = static_cast<long>(t.dim(3));
  if (y < 0 || x < 0 || y >= h || x >= w) return 0.0;
  return t[((n * t.dim(1) + c) * t.dim(2) + static_cast<std::size_t>(y)) * t.dim(3) + static_cast<std::size_t>(x)];
}

}  // namespace

Tensor<double> depthwise_oracle(const Tensor<double>& input, const Tensor<double>& filters,
                                std::size_t depth_multiplier, std::size_t stride) {
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t k = filters.dim(3);
  const long pad = static_cast<long>((k - 1) / 2);
  const std::size_t oh = (h - 1) / stride + 1, ow = (w - 1) / stride + 1;
  Tensor<double> out({n, c * depth_multiplier, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < depth_multiplier; ++j) {
        const std::size_t oc = ch * depth_multiplier + j;
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0;
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v)
                acc += filters[(oc * k + u) * k + v] *
                       at4(input, b, ch, static_cast<long>(y * stride + u) - pad, static_cast<long>(x * stride + v) - pad);
            out[((b * c * depth_multiplier + oc) * oh + y) * ow + x] = acc;
          }
      }
  return out;
}

Tensor<double> pointwise_oracle(const Tensor<double>& input, const Tensor<double>& weights) {
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t co = weights.dim(0);
  Tensor<double> out({n, co, h, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t o = 0; o < co; ++o) {
          double acc = 0;
          for (std::size_t i = 0; i < c; ++i) acc += weights[o * c + i] * input[((b * c + i) * h + y) * w + x];
          out[((b * co + o) * h + y) * w + x] = acc;
        }
  return out;
}

Tensor<double> conv2d_oracle(const Tensor<double>& input, const Tensor<double>& weights, std::size_t stride,
                             bool same_padding) {
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t co = weights.dim(0), k = weights.dim(3);
  const long pad = same_padding ? static_cast<long>((k - 1) / 2) : 0;
  const std::size_t oh = same_padding ? (h - 1) / stride + 1 : (h - k) / stride + 1;
  const std::size_t ow = same_padding ? (w - 1) / stride + 1 : (w - k) / stride + 1;
  Tensor<double> out({n, co, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = 0;
          for (std::size_t i = 0; i < c; ++i)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v)
                acc += weights[((o * c + i) * k + u) * k + v] *
                       at4(input, b, i, static_cast<long>(y * stride + u) - pad, static_cast<long>(x * stride + v) - pad);
          out[((b * co + o) * oh + y) * ow + x] = acc;
        }
  return out;
}

std::vector<std::complex<double>> naive_dft2(const std::vector<double>& image, std::size_t p) {
  std::vector<std::complex<double>> out(p * p);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t u = 0; u < p; ++u)
    for (std::size_t v = 0; v < p; ++v) {
      std::complex<double> acc = 0;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) {
          const double angle = -two_pi * (static_cast<double>(u * y % p) + static_cast<double>(v * x % p)) /
                               static_cast<double>(p);
          acc += image[y * p + x] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
      out[u * p + v] = acc;
    }
  return out;
}

GradCheckResult grad_check(const LossBuilder& loss, std::vector<Tensor<double>> inputs,
                           std::size_t max_samples_per_input, double step) {
  std::vector<Tensor<double>> bound = inputs;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (auto& t : bound) vars.push_back(tape.leaf(t, true));
    tape.backward(loss(tape, vars));
  }
  auto evaluate = [&](std::vector<Tensor<double>>& values) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (auto& t : values) vars.push_back(tape.leaf(t, false));
    return loss(tape, vars).value().item();
  };

  GradCheckResult result;
  SplitMix64 pick(0x5eed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t n = inputs[i].numel();
    std::vector<std::size_t> elements;
    if (n <= max_samples_per_input) {
      for (std::size_t j = 0; j < n; ++j) elements.push_back(j);
    } else {
      for (std::size_t s = 0; s < max_samples_per_input; ++s) elements.push_back(pick.below(n));
    }
    const bool has_grad = bound[i].has_grad();
    for (std::size_t j : elements) {
      std::vector<Tensor<double>> plus = inputs, minus = inputs;
      plus[i][j] += step;
      minus[i][j] -= step;
      const double numeric = (evaluate(plus) - evaluate(minus)) / (2 * step);
      const double analytic = has_grad ? bound[i].grad()[j] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = "input " + std::to_string(i) + " element " + std::to_string(j) + " analytic " +
                       std::to_string(analytic) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

namespace {

using OpFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

LossBuilder weighted(OpFn op, std::uint64_t seed) {
  return [op = std::move(op), seed](Tape<double>& tape, const std::vector<Var<double>>& in) {
    const Var<double> out = op(tape, in);
    SplitMix64 r(seed);
    const Var<double> w = tape.constant(random_tensor(out.shape(), r));
    return sum(mul(out, w));
  };
}

// Moves values off the ReLU kink so the finite difference stays one-sided-free.
Tensor<double> away_from_zero(Tensor<double> t) {
  for (std::size_t i = 0; i < t.numel(); ++i)
    if (std::abs(t[i]) < 0.05) t[i] = t[i] < 0 ? -0.05 - std::abs(t[i]) : 0.05 + t[i];
  return t;
}

std::size_t range(SplitMix64& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

Shape random_shape(SplitMix64& rng, std::size_t max_rank = 4) {
  Shape s(range(rng, 1, max_rank));
  for (auto& d : s) d = range(rng, 1, 4);
  return s;
}

// A shape that broadcasts against `a`: a suffix with some dims set to 1.
Shape broadcast_partner(const Shape& a, SplitMix64& rng) {
  Shape b(a.end() - static_cast<long>(range(rng, 1, a.size())), a.end());
  for (auto& d : b)
    if (rng.below(3) == 0) d = 1;
  return b;
}

Shape nchw(SplitMix64& rng, std::size_t min_hw = 1, std::size_t max_hw = 6) {
  return {range(rng, 1, 3), range(rng, 1, 4), range(rng, min_hw, max_hw), range(rng, min_hw, max_hw)};
}

}  // namespace

std::vector<std::string> gradient_ops() {
  return {"add",      "sub",         "mul",       "neg",       "relu",     "gelu",   "square",
          "scale",    "sum",         "mean",      "depthwise", "pointwise", "conv2d", "subsample",
          "bn_train", "bn_eval",     "avg_pool",  "linear",    "cross_entropy", "mse"};
}

std::vector<GradCase> gradient_cases(std::uint64_t seed, std::size_t shapes_per_op) {
  SplitMix64 rng(seed);
  std::vector<GradCase> cases;
  auto push = [&](const std::string& op, std::vector<Tensor<double>> inputs, OpFn fn) {
    GradCase gc;
    gc.op = op;
    for (std::size_t i = 0; i < inputs.size(); ++i) gc.shape += (i ? " x " : "") + shape_string(inputs[i].shape());
    gc.inputs = std::move(inputs);
    gc.loss = weighted(std::move(fn), rng.next());
    cases.push_back(std::move(gc));
  };
  for (std::size_t s = 0; s < shapes_per_op; ++s) {
    {
      const Shape a = random_shape(rng);
      const Shape b = broadcast_partner(a, rng);
      const bool swap = rng.below(2);
      auto ta = random_tensor(swap ? b : a, rng), tb = random_tensor(swap ? a : b, rng);
      push("add", {ta, tb}, [](auto&, const auto& v) { return add(v[0], v[1]); });
      push("sub", {ta, tb}, [](auto&, const auto& v) { return sub(v[0], v[1]); });
      push("mul", {ta, tb}, [](auto&, const auto& v) { return mul(v[0], v[1]); });
    }
    {
      const Shape a = random_shape(rng);
      push("neg", {random_tensor(a, rng)}, [](auto&, const auto& v) { return elementwise(UnaryKind::Neg, v[0]); });
      push("relu", {away_from_zero(random_tensor(a, rng))}, [](auto&, const auto& v) { return relu(v[0]); });
      push("gelu", {random_tensor(a, rng, -3, 3)}, [](auto&, const auto& v) { return gelu(v[0]); });
      push("square", {random_tensor(a, rng)}, [](auto&, const auto& v) { return square(v[0]); });
      const double factor = rng.uniform(-2, 2);
      push("scale", {random_tensor(a, rng)}, [factor](auto&, const auto& v) { return scale(v[0], factor); });
      push("sum", {random_tensor(a, rng)}, [](auto&, const auto& v) { return sum(v[0]); });
      push("mean", {random_tensor(a, rng)}, [](auto&, const auto& v) { return mean(v[0]); });
    }
    {
      const Shape x = nchw(rng);
      const std::size_t k = range(rng, 1, 5), d = range(rng, 1, 3), stride = range(rng, 1, 2);
      push("depthwise", {random_tensor(x, rng), random_tensor({x[1] * d, 1, k, k}, rng)},
           [d, stride](auto&, const auto& v) { return conv2d_depthwise(v[0], v[1], d, stride); });
    }
    {
      const Shape x = nchw(rng);
      push("pointwise", {random_tensor(x, rng), random_tensor({range(rng, 1, 5), x[1]}, rng)},
           [](auto&, const auto& v) { return conv2d_pointwise(v[0], v[1]); });
    }
    {
      const Shape x = nchw(rng, 3, 6);
      const std::size_t k = range(rng, 1, 3), stride = range(rng, 1, 2);
      const bool same = rng.below(2);
      const Padding pad = same ? Padding::Same : Padding::Valid;
      push("conv2d", {random_tensor(x, rng), random_tensor({range(rng, 1, 4), x[1], k, k}, rng)},
           [stride, pad](auto&, const auto& v) { return conv2d(v[0], v[1], stride, pad); });
    }
    {
      const Shape x = nchw(rng);
      const std::size_t stride = range(rng, 1, 3);
      push("subsample", {random_tensor(x, rng)}, [stride](auto&, const auto& v) { return subsample(v[0], stride); });
    }
    for (bool training : {true, false}) {
      Shape x = nchw(rng);
      if (training && x[0] * x[2] * x[3] < 2) x[2] = 2;
      const std::size_t c = x[1];
      RunningStats<double> stats(c);
      for (std::size_t i = 0; i < c; ++i) {
        stats.mean[i] = rng.uniform(-0.5, 0.5);
        stats.var[i] = rng.uniform(0.5, 2.0);
      }
      push(training ? "bn_train" : "bn_eval",
           {random_tensor(x, rng), random_tensor({c}, rng, 0.5, 1.5), random_tensor({c}, rng)},
           [stats, training](auto&, const auto& v) {
             RunningStats<double> local = stats;
             return batch_norm(v[0], v[1], v[2], local, training);
           });
    }
    push("avg_pool", {random_tensor(nchw(rng), rng)}, [](auto&, const auto& v) { return global_avg_pool(v[0]); });
    {
      const std::size_t n = range(rng, 1, 4), f = range(rng, 1, 6), o = range(rng, 1, 5);
      if (rng.below(2)) {
        push("linear", {random_tensor({n, f}, rng), random_tensor({o, f}, rng), random_tensor({o}, rng)},
             [](auto&, const auto& v) { return linear(v[0], v[1], &v[2]); });
      } else {
        push("linear", {random_tensor({n, f}, rng), random_tensor({o, f}, rng)},
             [](auto&, const auto& v) { return linear(v[0], v[1]); });
      }
    }
    {
      const std::size_t n = range(rng, 1, 5), c = range(rng, 2, 6);
      std::vector<std::int32_t> labels(n);
      for (auto& l : labels) l = static_cast<std::int32_t>(rng.below(c));
      push("cross_entropy", {random_tensor({n, c}, rng, -3, 3)},
           [labels](auto&, const auto& v) { return cross_entropy(v[0], labels); });
    }
    {
      const Shape a = random_shape(rng);
      push("mse", {random_tensor(a, rng), random_tensor(a, rng)}, [](auto&, const auto& v) { return mse(v[0], v[1]); });
    }
  }
  return cases;
}

}  // namespace mixbench::testkit
