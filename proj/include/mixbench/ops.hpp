#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mixbench/tape.hpp"

namespace mixbench {

enum class UnaryKind { Neg, Relu, Gelu, Square };
enum class BinaryKind { Add, Sub, Mul };

// Binary kinds broadcast under trailing-dimension rules.
template <typename Real>
Var<Real> elementwise(BinaryKind kind, const Var<Real>& a, const Var<Real>& b);
template <typename Real>
Var<Real> elementwise(UnaryKind kind, const Var<Real>& a);

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) { return elementwise(BinaryKind::Add, a, b); }
template <typename Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) { return elementwise(BinaryKind::Sub, a, b); }
template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) { return elementwise(BinaryKind::Mul, a, b); }
template <typename Real>
Var<Real> relu(const Var<Real>& a) { return elementwise(UnaryKind::Relu, a); }
template <typename Real>
Var<Real> gelu(const Var<Real>& a) { return elementwise(UnaryKind::Gelu, a); }
template <typename Real>
Var<Real> square(const Var<Real>& a) { return elementwise(UnaryKind::Square, a); }

template <typename Real>
Var<Real> scale(const Var<Real>& a, Real factor);

// Rank-0 reductions over every element.
template <typename Real>
Var<Real> sum(const Var<Real>& a);
template <typename Real>
Var<Real> mean(const Var<Real>& a);

// input [N,C,H,W], filters [C*d,1,k,k] -> [N,C*d,H',W'] with size-preserving
// padding (asymmetric for even k). Output channel c*d+j is channel c
// convolved with filter c*d+j.
template <typename Real>
Var<Real> conv2d_depthwise(const Var<Real>& input, const Var<Real>& filters,
                           std::size_t depth_multiplier, std::size_t stride = 1);

// input [N,C,H,W], weights [C_out,C] -> [N,C_out,H,W].
template <typename Real>
Var<Real> conv2d_pointwise(const Var<Real>& input, const Var<Real>& weights);

enum class Padding { Same, Valid };

// Dense convolution, weights [C_out,C,k,k]. Only the stems use it.
template <typename Real>
Var<Real> conv2d(const Var<Real>& input, const Var<Real>& weights, std::size_t stride,
                 Padding padding);

// Keeps every `stride`-th row and column (aligned with strided same-padding
// convolutions, so a 1x1 strided projection is subsample + pointwise).
template <typename Real>
Var<Real> subsample(const Var<Real>& input, std::size_t stride);

template <typename Real>
struct RunningStats {
  std::vector<Real> mean;
  std::vector<Real> var;
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);

  explicit RunningStats(std::size_t channels = 0) : mean(channels, Real(0)), var(channels, Real(1)) {}
};

// Per-channel normalization over (N,H,W). Training mode uses batch moments and
// updates `stats`; eval mode normalizes with `stats`.
template <typename Real>
Var<Real> batch_norm(const Var<Real>& input, const Var<Real>& gamma, const Var<Real>& beta,
                     RunningStats<Real>& stats, bool training);

// [N,C,H,W] -> [N,C]
template <typename Real>
Var<Real> global_avg_pool(const Var<Real>& input);

// input [N,F], weight [O,F], optional bias [O] -> [N,O]
template <typename Real>
Var<Real> linear(const Var<Real>& input, const Var<Real>& weight, const Var<Real>* bias = nullptr);

// Mean cross-entropy of logits [N,C] against integer labels, via log-softmax.
template <typename Real>
Var<Real> cross_entropy(const Var<Real>& logits, std::span<const std::int32_t> labels);

// Mean squared error over all elements.
template <typename Real>
Var<Real> mse(const Var<Real>& prediction, const Var<Real>& target);

}  // namespace mixbench
