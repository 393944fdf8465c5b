// Reference vs parallel convolution kernels at the shapes the models use.
// Run with --benchmark_filter=<regex> to pick a subset.

#include <benchmark/benchmark.h>

#include <vector>

#include "mixbench/kernels.hpp"
#include "mixbench/rng.hpp"

using namespace mixbench;
using namespace mixbench::kernels;

namespace {

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

// args: batch, channels, side, kernel
ConvGeometry depthwise_geometry(const benchmark::State& s) {
  const auto c = static_cast<std::size_t>(s.range(1));
  const auto side = static_cast<std::size_t>(s.range(2));
  return ConvGeometry::same(s.range(0), c, side, side, c, s.range(3));
}

template <bool Parallel>
void BM_DepthwiseForward(benchmark::State& state) {
  const auto g = depthwise_geometry(state);
  const auto in = random_buffer(g.batch * g.in_channels * g.in_plane(), 1);
  const auto f = random_buffer(g.out_channels * g.kernel * g.kernel, 2);
  std::vector<float> out(g.batch * g.out_channels * g.out_plane());
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::depthwise_forward(g, in.data(), f.data(), out.data());
    else
      reference::depthwise_forward(g, in.data(), f.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * g.batch * g.out_channels * g.out_plane() * g.kernel * g.kernel);
}

template <bool Parallel>
void BM_DepthwiseBackwardFilter(benchmark::State& state) {
  const auto g = depthwise_geometry(state);
  const auto in = random_buffer(g.batch * g.in_channels * g.in_plane(), 3);
  const auto go = random_buffer(g.batch * g.out_channels * g.out_plane(), 4);
  std::vector<float> gf(g.out_channels * g.kernel * g.kernel);
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::depthwise_backward_filter(g, in.data(), go.data(), gf.data());
    else
      reference::depthwise_backward_filter(g, in.data(), go.data(), gf.data());
    benchmark::DoNotOptimize(gf.data());
  }
  state.SetItemsProcessed(state.iterations() * g.batch * g.out_channels * g.out_plane() * g.kernel * g.kernel);
}

// args: batch, in_channels, out_channels, pixels
template <bool Parallel>
void BM_PointwiseForward(benchmark::State& state) {
  const std::size_t n = state.range(0), ci = state.range(1), co = state.range(2), p = state.range(3);
  const auto in = random_buffer(n * ci * p, 5);
  const auto w = random_buffer(co * ci, 6);
  std::vector<float> out(n * co * p);
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::pointwise_forward(n, ci, co, p, in.data(), w.data(), out.data());
    else
      reference::pointwise_forward(n, ci, co, p, in.data(), w.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * n * ci * co * p);
}

template <bool Parallel>
void BM_PointwiseBackwardWeight(benchmark::State& state) {
  const std::size_t n = state.range(0), ci = state.range(1), co = state.range(2), p = state.range(3);
  const auto in = random_buffer(n * ci * p, 7);
  const auto go = random_buffer(n * co * p, 8);
  std::vector<float> gw(co * ci);
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::pointwise_backward_weight(n, ci, co, p, in.data(), go.data(), gw.data());
    else
      reference::pointwise_backward_weight(n, ci, co, p, in.data(), go.data(), gw.data());
    benchmark::DoNotOptimize(gw.data());
  }
  state.SetItemsProcessed(state.iterations() * n * ci * co * p);
}

// args: batch, in_channels, out_channels, side (3x3, same padding)
template <bool Parallel>
void BM_Conv2dForward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(3));
  const auto g = ConvGeometry::same(state.range(0), state.range(1), side, side, state.range(2), 3);
  const auto in = random_buffer(g.batch * g.in_channels * g.in_plane(), 9);
  const auto w = random_buffer(g.out_channels * g.in_channels * 9, 10);
  std::vector<float> out(g.batch * g.out_channels * g.out_plane());
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::conv2d_forward(g, in.data(), w.data(), out.data());
    else
      reference::conv2d_forward(g, in.data(), w.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * g.batch * g.out_channels * g.out_plane() * g.in_channels * 9);
}

// ResNet stage 1 (144 depthwise channels at 32x32), ConvMixer (64 ch, k=8),
// unshuffler (128 ch, k=7, 28x28).
void depthwise_args(benchmark::internal::Benchmark* b) {
  b->Args({32, 144, 32, 3})->Args({32, 64, 32, 8})->Args({8, 128, 28, 7});
}
void pointwise_args(benchmark::internal::Benchmark* b) {
  b->Args({32, 144, 16, 1024})->Args({32, 64, 64, 1024})->Args({8, 128, 128, 784});
}

}  // namespace

BENCHMARK_TEMPLATE(BM_DepthwiseForward, false)->Name("depthwise_forward/reference")->Apply(depthwise_args);
BENCHMARK_TEMPLATE(BM_DepthwiseForward, true)->Name("depthwise_forward/parallel")->Apply(depthwise_args);
BENCHMARK_TEMPLATE(BM_DepthwiseBackwardFilter, false)->Name("depthwise_backward_filter/reference")->Apply(depthwise_args);
BENCHMARK_TEMPLATE(BM_DepthwiseBackwardFilter, true)->Name("depthwise_backward_filter/parallel")->Apply(depthwise_args);
BENCHMARK_TEMPLATE(BM_PointwiseForward, false)->Name("pointwise_forward/reference")->Apply(pointwise_args);
BENCHMARK_TEMPLATE(BM_PointwiseForward, true)->Name("pointwise_forward/parallel")->Apply(pointwise_args);
BENCHMARK_TEMPLATE(BM_PointwiseBackwardWeight, false)->Name("pointwise_backward_weight/reference")->Apply(pointwise_args);
BENCHMARK_TEMPLATE(BM_PointwiseBackwardWeight, true)->Name("pointwise_backward_weight/parallel")->Apply(pointwise_args);
BENCHMARK_TEMPLATE(BM_Conv2dForward, false)->Name("conv2d_forward/reference")->Args({32, 3, 16, 32});
BENCHMARK_TEMPLATE(BM_Conv2dForward, true)->Name("conv2d_forward/parallel")->Args({32, 3, 16, 32});

BENCHMARK_MAIN();
