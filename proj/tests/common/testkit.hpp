#pragma once

// Oracles and checkers shared by the unit tests and the acceptance binary.
// The oracles are direct transcriptions of the definitions and share no code
// with the library kernels.

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mixbench/ops.hpp"
#include "mixbench/rng.hpp"
#include "mixbench/tensor.hpp"

namespace mixbench::testkit {

Tensor<double> random_tensor(const Shape& shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0);

// Zero padding of floor((k-1)/2) rows/columns before the image; output size
// (H-1)/stride + 1.
Tensor<double> depthwise_oracle(const Tensor<double>& input, const Tensor<double>& filters,
                                std::size_t depth_multiplier, std::size_t stride);
Tensor<double> pointwise_oracle(const Tensor<double>& input, const Tensor<double>& weights);
Tensor<double> conv2d_oracle(const Tensor<double>& input, const Tensor<double>& weights, std::size_t stride,
                             bool same_padding);

// O(P^4) DFT straight from the definition.
std::vector<std::complex<double>> naive_dft2(const std::vector<double>& image, std::size_t p);

// Central finite differences (step 1e-4 by default) against the tape.
// Relative error per element: |analytic - numeric| / max(|analytic|, |numeric|, 1e-2).
struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::string worst;  // "input i element j"
};

using LossBuilder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

GradCheckResult grad_check(const LossBuilder& loss, std::vector<Tensor<double>> inputs,
                           std::size_t max_samples_per_input = 24, double step = 1e-4);

struct GradCase {
  std::string op;
  std::string shape;
  std::vector<Tensor<double>> inputs;
  LossBuilder loss;
};

// Every differentiable op, `shapes_per_op` random geometries each. Each case's
// loss is sum(op(...) * R) for a fixed random R so no gradient is trivially zero.
std::vector<GradCase> gradient_cases(std::uint64_t seed, std::size_t shapes_per_op);

// Names of the ops covered by gradient_cases.
std::vector<std::string> gradient_ops();

constexpr double kGradRtol = 1e-3;
constexpr double kGradStep = 1e-4;

}  // namespace mixbench::testkit
