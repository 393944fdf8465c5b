#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mixbench/ops.hpp"
#include "mixbench/rng.hpp"
#include "mixbench/tensor.hpp"

namespace mixbench {

// Which parameter families learn. "Chans" = ChannelsOnly, "Space" = SpatialOnly.
enum class MixingMode { Full, ChannelsOnly, SpatialOnly };

// How frozen (or initial) depthwise filter banks are filled.
enum class FilterInit { RandomIndependent, RandomShared, Box, Identity };

// What a parameter group mixes. Stem convolutions mix both and are frozen
// together with the spatial filters in ChannelsOnly mode.
enum class ParamKind { Spatial, Channel, Stem };

std::string to_string(MixingMode mode);
std::string to_string(FilterInit init);
std::string to_string(ParamKind kind);
MixingMode parse_mixing_mode(std::string_view text);
FilterInit parse_filter_init(std::string_view text);
ParamKind parse_param_kind(std::string_view text);

bool is_trainable(ParamKind kind, MixingMode mode);

struct SeparableConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t depth_multiplier = 1;
  MixingMode mode = MixingMode::Full;
  FilterInit init = FilterInit::RandomIndependent;
  std::size_t stride = 1;
};

struct ParamCounts {
  std::size_t depthwise = 0;        // c_in * k^2 * d
  std::size_t pointwise = 0;        // c_in * d * c_out
  std::size_t separable = 0;        // depthwise + pointwise
  std::size_t conv_equivalent = 0;  // c_in * c_out * k^2
};

ParamCounts param_counts(const SeparableConvSpec& spec);

// A named set of tensors sharing one trainable flag. Frozen groups are never
// handed to an optimizer; init_checksum lets callers prove they did not move.
template <typename Real>
struct ParamGroup {
  std::string name;
  ParamKind kind = ParamKind::Channel;
  bool trainable = true;
  std::vector<std::string> tensor_names;
  std::vector<Tensor<Real>> tensors;
  std::uint64_t init_checksum = 0;

  std::uint64_t current_checksum() const;
  bool verify() const { return current_checksum() == init_checksum; }
  void seal() { init_checksum = current_checksum(); }
  std::size_t numel() const;
  Tensor<Real>& tensor(std::string_view tensor_name);
};

template <typename Real>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  // Adds a group whose trainability follows (kind, mode). The group is sealed.
  ParamGroup<Real>& add(std::string name, ParamKind kind, MixingMode mode,
                        std::vector<std::pair<std::string, Tensor<Real>>> tensors);

  std::size_t size() const { return groups_.size(); }
  ParamGroup<Real>& operator[](std::size_t i) { return *groups_[i]; }
  const ParamGroup<Real>& operator[](std::size_t i) const { return *groups_[i]; }
  ParamGroup<Real>* find(std::string_view name);

  std::size_t total_params() const;
  std::size_t trainable_params() const;
  // True when every frozen group still matches its init checksum.
  bool verify_frozen() const;
  std::vector<std::string> failed_frozen() const;
  void reseal();
  void zero_grad();

 private:
  std::vector<std::unique_ptr<ParamGroup<Real>>> groups_;
};

template <typename Real>
Tensor<Real> uniform_tensor(Shape shape, double bound, SplitMix64& rng);

// Depthwise bank [c_in*d, 1, k, k]. Random kinds draw from U(-1/k, 1/k).
// Throws std::invalid_argument for Identity with even k.
template <typename Real>
Tensor<Real> make_depthwise_filters(std::size_t in_channels, std::size_t depth_multiplier,
                                    std::size_t kernel, FilterInit init, SplitMix64& rng);

// Low-pass smoothing of every k x k filter: `index` passes of the normalized
// binomial [1,2,1]x[1,2,1]/16 with edge-duplicating symmetric padding, which
// preserves each filter's sum. index 0 returns the input.
template <typename Real>
Tensor<Real> smooth_filters(const Tensor<Real>& filters, std::size_t index);

// Each layer binds its parameter groups to the tape on every forward call;
// frozen tensors enter as non-differentiable leaves.

template <typename Real>
class DepthwiseConv2d {
 public:
  DepthwiseConv2d() = default;
  DepthwiseConv2d(ParamGroup<Real>* group, std::size_t depth_multiplier, std::size_t stride)
      : group_(group), depth_multiplier_(depth_multiplier), stride_(stride) {}
  Var<Real> forward(const Var<Real>& x) const;
  ParamGroup<Real>& group() const { return *group_; }

 private:
  ParamGroup<Real>* group_ = nullptr;
  std::size_t depth_multiplier_ = 1;
  std::size_t stride_ = 1;
};

template <typename Real>
class PointwiseConv2d {
 public:
  PointwiseConv2d() = default;
  explicit PointwiseConv2d(ParamGroup<Real>* group) : group_(group) {}
  Var<Real> forward(const Var<Real>& x) const;
  ParamGroup<Real>& group() const { return *group_; }

 private:
  ParamGroup<Real>* group_ = nullptr;
};

template <typename Real>
class SeparableConv2d {
 public:
  SeparableConv2d() = default;
  SeparableConv2d(SeparableConvSpec spec, DepthwiseConv2d<Real> depthwise, PointwiseConv2d<Real> pointwise)
      : spec_(spec), depthwise_(depthwise), pointwise_(pointwise) {}
  Var<Real> forward(const Var<Real>& x) const { return pointwise_.forward(depthwise_.forward(x)); }
  const SeparableConvSpec& spec() const { return spec_; }
  const DepthwiseConv2d<Real>& depthwise() const { return depthwise_; }
  const PointwiseConv2d<Real>& pointwise() const { return pointwise_; }

 private:
  SeparableConvSpec spec_;
  DepthwiseConv2d<Real> depthwise_;
  PointwiseConv2d<Real> pointwise_;
};

template <typename Real>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamGroup<Real>* group, std::size_t stride, Padding padding)
      : group_(group), stride_(stride), padding_(padding) {}
  Var<Real> forward(const Var<Real>& x) const;
  ParamGroup<Real>& group() const { return *group_; }

 private:
  ParamGroup<Real>* group_ = nullptr;
  std::size_t stride_ = 1;
  Padding padding_ = Padding::Same;
};

template <typename Real>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(ParamGroup<Real>* group);
  Var<Real> forward(const Var<Real>& x, bool training);
  ParamGroup<Real>& group() const { return *group_; }
  RunningStats<Real>& stats() { return stats_; }
  const RunningStats<Real>& stats() const { return stats_; }

 private:
  ParamGroup<Real>* group_ = nullptr;
  RunningStats<Real> stats_;
};

template <typename Real>
class Linear {
 public:
  Linear() = default;
  explicit Linear(ParamGroup<Real>* group) : group_(group) {}
  Var<Real> forward(const Var<Real>& x) const;
  ParamGroup<Real>& group() const { return *group_; }

 private:
  ParamGroup<Real>* group_ = nullptr;
};

// Builders. Each adds its groups to `store`, draws from `rng`, and seals.
template <typename Real>
SeparableConv2d<Real> build_separable_conv(ParameterStore<Real>& store, const std::string& name,
                                           const SeparableConvSpec& spec, SplitMix64& rng,
                                           std::size_t smoothing_index = 0);
template <typename Real>
DepthwiseConv2d<Real> build_depthwise(ParameterStore<Real>& store, const std::string& name,
                                      std::size_t channels, std::size_t kernel,
                                      std::size_t depth_multiplier, std::size_t stride,
                                      MixingMode mode, FilterInit init, SplitMix64& rng,
                                      std::size_t smoothing_index = 0);
template <typename Real>
PointwiseConv2d<Real> build_pointwise(ParameterStore<Real>& store, const std::string& name,
                                      std::size_t in_channels, std::size_t out_channels,
                                      MixingMode mode, SplitMix64& rng);
template <typename Real>
Conv2d<Real> build_conv(ParameterStore<Real>& store, const std::string& name, std::size_t in_channels,
                        std::size_t out_channels, std::size_t kernel, std::size_t stride,
                        Padding padding, MixingMode mode, SplitMix64& rng);
template <typename Real>
BatchNorm2d<Real> build_batch_norm(ParameterStore<Real>& store, const std::string& name,
                                   std::size_t channels, MixingMode mode);
template <typename Real>
Linear<Real> build_linear(ParameterStore<Real>& store, const std::string& name, std::size_t in_features,
                          std::size_t out_features, MixingMode mode, SplitMix64& rng);

}  // namespace mixbench
