#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mixbench/layers.hpp"

namespace mixbench {

// CIFAR-style separable ResNet: stem + 3 stages of 2n separable convs
// (widths w, 2w, 4w) + linear head, 6n+2 layers in total.
struct ResNetConfig {
  std::size_t n = 1;
  std::size_t base_width = 16;
  std::size_t num_classes = 10;
  std::size_t in_channels = 3;
  MixingMode mode = MixingMode::Full;
  std::size_t depth_multiplier = 9;
  std::size_t kernel = 3;
  FilterInit init = FilterInit::RandomIndependent;
  std::size_t smoothing = 0;
};

struct ConvMixerConfig {
  std::size_t depth = 4;
  std::size_t width = 64;
  std::size_t kernel = 8;
  std::size_t patch = 1;
  std::size_t num_classes = 10;
  std::size_t in_channels = 3;
  MixingMode mode = MixingMode::Full;
  FilterInit init = FilterInit::RandomIndependent;
  std::size_t smoothing = 0;
};

// Patch-size-1 ConvMixer trunk followed by a pointwise projection back to
// the image channels; output has the input's shape.
struct UnshufflerConfig {
  std::size_t depth = 8;
  std::size_t width = 128;
  std::size_t kernel = 7;
  std::size_t out_channels = 1;
  MixingMode mode = MixingMode::Full;
  FilterInit init = FilterInit::RandomIndependent;
  std::size_t smoothing = 0;
};

template <typename Real>
class Model {
 public:
  virtual ~Model() = default;
  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  virtual Var<Real> forward(const Var<Real>& x, bool training) = 0;
  virtual std::string family() const = 0;
  // Architecture description as key=value pairs (config + layer ordering).
  virtual std::vector<std::pair<std::string, std::string>> describe() const = 0;
  virtual std::size_t layer_count() const = 0;
  // Normalization statistics, keyed by their parameter group name.
  virtual std::vector<std::pair<std::string, RunningStats<Real>*>> running_stats() = 0;

  ParameterStore<Real>& params() { return params_; }
  const ParameterStore<Real>& params() const { return params_; }
  MixingMode mode() const { return mode_; }

 protected:
  explicit Model(MixingMode mode) : mode_(mode) {}
  ParameterStore<Real> params_;
  MixingMode mode_ = MixingMode::Full;
};

template <typename Real>
std::unique_ptr<Model<Real>> build_separable_resnet(const ResNetConfig& cfg, std::uint64_t seed);
template <typename Real>
std::unique_ptr<Model<Real>> build_convmixer(const ConvMixerConfig& cfg, std::uint64_t seed);
template <typename Real>
std::unique_ptr<Model<Real>> build_unshuffler(const UnshufflerConfig& cfg, std::uint64_t seed);

// Every depthwise filter bank of a model, in construction order.
template <typename Real>
std::vector<const Tensor<Real>*> depthwise_banks(const Model<Real>& model);

}  // namespace mixbench
