#include "mixbench/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mixbench {

using std::size_t;

std::string to_string(MixingMode mode) {
  switch (mode) {
    case MixingMode::Full: return "full";
    case MixingMode::ChannelsOnly: return "chans";
    case MixingMode::SpatialOnly: return "space";
  }
  return "?";
}

std::string to_string(FilterInit init) {
  switch (init) {
    case FilterInit::RandomIndependent: return "random-independent";
    case FilterInit::RandomShared: return "random-shared";
    case FilterInit::Box: return "box";
    case FilterInit::Identity: return "identity";
  }
  return "?";
}

std::string to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::Spatial: return "spatial";
    case ParamKind::Channel: return "channel";
    case ParamKind::Stem: return "stem";
  }
  return "?";
}

MixingMode parse_mixing_mode(std::string_view text) {
  if (text == "full") return MixingMode::Full;
  if (text == "chans" || text == "channels-only") return MixingMode::ChannelsOnly;
  if (text == "space" || text == "spatial-only") return MixingMode::SpatialOnly;
  throw std::invalid_argument("unknown mixing mode '" + std::string(text) + "' (full|chans|space)");
}

FilterInit parse_filter_init(std::string_view text) {
  if (text == "random-independent" || text == "different") return FilterInit::RandomIndependent;
  if (text == "random-shared" || text == "same") return FilterInit::RandomShared;
  if (text == "box") return FilterInit::Box;
  if (text == "identity") return FilterInit::Identity;
  throw std::invalid_argument("unknown filter init '" + std::string(text) +
                              "' (random-independent|random-shared|box|identity)");
}

ParamKind parse_param_kind(std::string_view text) {
  if (text == "spatial") return ParamKind::Spatial;
  if (text == "channel") return ParamKind::Channel;
  if (text == "stem") return ParamKind::Stem;
  throw std::invalid_argument("unknown parameter kind '" + std::string(text) + "'");
}

bool is_trainable(ParamKind kind, MixingMode mode) {
  switch (kind) {
    case ParamKind::Spatial:
    case ParamKind::Stem: return mode != MixingMode::ChannelsOnly;
    case ParamKind::Channel: return mode != MixingMode::SpatialOnly;
  }
  return true;
}

ParamCounts param_counts(const SeparableConvSpec& spec) {
  if (spec.in_channels == 0 || spec.out_channels == 0 || spec.kernel == 0 || spec.depth_multiplier == 0) {
    throw std::invalid_argument("separable conv spec fields must be positive");
  }
  ParamCounts c;
  const size_t k2 = spec.kernel * spec.kernel;
  c.depthwise = spec.in_channels * k2 * spec.depth_multiplier;
  c.pointwise = spec.in_channels * spec.depth_multiplier * spec.out_channels;
  c.separable = c.depthwise + c.pointwise;
  c.conv_equivalent = spec.in_channels * spec.out_channels * k2;
  return c;
}

template <typename Real>
std::uint64_t ParamGroup<Real>::current_checksum() const {
  // FNV-1a over the concatenated tensor bytes.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data().data());
    for (size_t i = 0; i < t.numel() * sizeof(Real); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

template <typename Real>
size_t ParamGroup<Real>::numel() const {
  size_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

template <typename Real>
Tensor<Real>& ParamGroup<Real>::tensor(std::string_view tensor_name) {
  for (size_t i = 0; i < tensor_names.size(); ++i)
    if (tensor_names[i] == tensor_name) return tensors[i];
  throw std::out_of_range("group " + name + " has no tensor " + std::string(tensor_name));
}

template <typename Real>
ParamGroup<Real>& ParameterStore<Real>::add(std::string name, ParamKind kind, MixingMode mode,
                                            std::vector<std::pair<std::string, Tensor<Real>>> tensors) {
  auto group = std::make_unique<ParamGroup<Real>>();
  group->name = std::move(name);
  group->kind = kind;
  group->trainable = is_trainable(kind, mode);
  for (auto& [tname, t] : tensors) {
    group->tensor_names.push_back(tname);
    group->tensors.push_back(std::move(t));
  }
  group->seal();
  groups_.push_back(std::move(group));
  return *groups_.back();
}

template <typename Real>
ParamGroup<Real>* ParameterStore<Real>::find(std::string_view name) {
  for (auto& g : groups_)
    if (g->name == name) return g.get();
  return nullptr;
}

template <typename Real>
size_t ParameterStore<Real>::total_params() const {
  size_t n = 0;
  for (const auto& g : groups_) n += g->numel();
  return n;
}

template <typename Real>
size_t ParameterStore<Real>::trainable_params() const {
  size_t n = 0;
  for (const auto& g : groups_)
    if (g->trainable) n += g->numel();
  return n;
}

template <typename Real>
bool ParameterStore<Real>::verify_frozen() const {
  return failed_frozen().empty();
}

template <typename Real>
std::vector<std::string> ParameterStore<Real>::failed_frozen() const {
  std::vector<std::string> failed;
  for (const auto& g : groups_)
    if (!g->trainable && !g->verify()) failed.push_back(g->name);
  return failed;
}

template <typename Real>
void ParameterStore<Real>::reseal() {
  for (auto& g : groups_) g->seal();
}

template <typename Real>
void ParameterStore<Real>::zero_grad() {
  for (auto& g : groups_)
    for (auto& t : g->tensors) t.zero_grad();
}

template <typename Real>
Tensor<Real> uniform_tensor(Shape shape, double bound, SplitMix64& rng) {
  Tensor<Real> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

template <typename Real>
Tensor<Real> make_depthwise_filters(size_t in_channels, size_t depth_multiplier, size_t kernel,
                                    FilterInit init, SplitMix64& rng) {
  const size_t k2 = kernel * kernel;
  const size_t count = in_channels * depth_multiplier;
  Tensor<Real> f({count, 1, kernel, kernel});
  const double bound = 1.0 / std::sqrt(static_cast<double>(k2));
  switch (init) {
    case FilterInit::RandomIndependent:
      for (auto& v : f.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
      break;
    case FilterInit::RandomShared: {
      std::vector<Real> shared(depth_multiplier * k2);
      for (auto& v : shared) v = static_cast<Real>(rng.uniform(-bound, bound));
      for (size_t c = 0; c < in_channels; ++c)
        for (size_t j = 0; j < depth_multiplier; ++j)
          for (size_t i = 0; i < k2; ++i) f[(c * depth_multiplier + j) * k2 + i] = shared[j * k2 + i];
      break;
    }
    case FilterInit::Box:
      for (auto& v : f.data()) v = Real(1) / static_cast<Real>(k2);
      break;
    case FilterInit::Identity:
      if (kernel % 2 == 0) {
        throw std::invalid_argument("identity filters need an odd kernel size, got " + std::to_string(kernel));
      }
      for (size_t o = 0; o < count; ++o) f[o * k2 + (kernel / 2) * kernel + kernel / 2] = Real(1);
      break;
  }
  return f;
}

template <typename Real>
Tensor<Real> smooth_filters(const Tensor<Real>& filters, size_t index) {
  if (filters.rank() != 4 || filters.dim(2) != filters.dim(3)) {
    throw ShapeError("smooth_filters expects [F,1,k,k], got " + shape_string(filters.shape()));
  }
  Tensor<Real> out = filters;
  if (index == 0) return out;
  const size_t k = filters.dim(2);
  const size_t planes = filters.dim(0) * filters.dim(1);
  const Real taps[3] = {Real(0.25), Real(0.5), Real(0.25)};
  auto mirror = [k](long i) -> size_t {
    if (i < 0) i = -i - 1;
    if (i >= static_cast<long>(k)) i = 2 * static_cast<long>(k) - i - 1;
    return static_cast<size_t>(std::clamp(i, 0L, static_cast<long>(k) - 1));
  };
  std::vector<Real> tmp(k * k);
  for (size_t pass = 0; pass < index; ++pass) {
    for (size_t p = 0; p < planes; ++p) {
      Real* f = out.data().data() + p * k * k;
      // separable: rows then columns
      for (size_t r = 0; r < k; ++r)
        for (size_t c = 0; c < k; ++c) {
          Real s = 0;
          for (long t = -1; t <= 1; ++t) s += taps[t + 1] * f[r * k + mirror(static_cast<long>(c) + t)];
          tmp[r * k + c] = s;
        }
      for (size_t r = 0; r < k; ++r)
        for (size_t c = 0; c < k; ++c) {
          Real s = 0;
          for (long t = -1; t <= 1; ++t) s += taps[t + 1] * tmp[mirror(static_cast<long>(r) + t) * k + c];
          f[r * k + c] = s;
        }
    }
  }
  return out;
}

template <typename Real>
Var<Real> DepthwiseConv2d<Real>::forward(const Var<Real>& x) const {
  auto& filters = group_->tensors[0];
  auto f = x.tape().leaf(filters, group_->trainable);
  return conv2d_depthwise(x, f, depth_multiplier_, stride_);
}

template <typename Real>
Var<Real> PointwiseConv2d<Real>::forward(const Var<Real>& x) const {
  auto w = x.tape().leaf(group_->tensors[0], group_->trainable);
  return conv2d_pointwise(x, w);
}

template <typename Real>
Var<Real> Conv2d<Real>::forward(const Var<Real>& x) const {
  auto w = x.tape().leaf(group_->tensors[0], group_->trainable);
  return conv2d(x, w, stride_, padding_);
}

template <typename Real>
BatchNorm2d<Real>::BatchNorm2d(ParamGroup<Real>* group)
    : group_(group), stats_(group->tensors[0].numel()) {}

template <typename Real>
Var<Real> BatchNorm2d<Real>::forward(const Var<Real>& x, bool training) {
  auto& tape = x.tape();
  auto gamma = tape.leaf(group_->tensors[0], group_->trainable);
  auto beta = tape.leaf(group_->tensors[1], group_->trainable);
  return batch_norm(x, gamma, beta, stats_, training);
}

template <typename Real>
Var<Real> Linear<Real>::forward(const Var<Real>& x) const {
  auto& tape = x.tape();
  auto w = tape.leaf(group_->tensors[0], group_->trainable);
  auto b = tape.leaf(group_->tensors[1], group_->trainable);
  return linear(x, w, &b);
}

template <typename Real>
DepthwiseConv2d<Real> build_depthwise(ParameterStore<Real>& store, const std::string& name,
                                      size_t channels, size_t kernel, size_t depth_multiplier,
                                      size_t stride, MixingMode mode, FilterInit init, SplitMix64& rng,
                                      size_t smoothing_index) {
  auto filters = make_depthwise_filters<Real>(channels, depth_multiplier, kernel, init, rng);
  if (smoothing_index > 0) filters = smooth_filters(filters, smoothing_index);
  auto& group = store.add(name, ParamKind::Spatial, mode, {{"filters", std::move(filters)}});
  return DepthwiseConv2d<Real>(&group, depth_multiplier, stride);
}

template <typename Real>
PointwiseConv2d<Real> build_pointwise(ParameterStore<Real>& store, const std::string& name,
                                      size_t in_channels, size_t out_channels, MixingMode mode,
                                      SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels));
  auto& group = store.add(name, ParamKind::Channel, mode,
                          {{"weight", uniform_tensor<Real>({out_channels, in_channels}, bound, rng)}});
  return PointwiseConv2d<Real>(&group);
}

template <typename Real>
SeparableConv2d<Real> build_separable_conv(ParameterStore<Real>& store, const std::string& name,
                                           const SeparableConvSpec& spec, SplitMix64& rng,
                                           size_t smoothing_index) {
  param_counts(spec);  // validates
  auto dw = build_depthwise(store, name + ".depthwise", spec.in_channels, spec.kernel,
                            spec.depth_multiplier, spec.stride, spec.mode, spec.init, rng, smoothing_index);
  auto pw = build_pointwise(store, name + ".pointwise", spec.in_channels * spec.depth_multiplier,
                            spec.out_channels, spec.mode, rng);
  return SeparableConv2d<Real>(spec, dw, pw);
}

template <typename Real>
Conv2d<Real> build_conv(ParameterStore<Real>& store, const std::string& name, size_t in_channels,
                        size_t out_channels, size_t kernel, size_t stride, Padding padding,
                        MixingMode mode, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
  auto& group = store.add(name, ParamKind::Stem, mode,
                          {{"weight", uniform_tensor<Real>({out_channels, in_channels, kernel, kernel}, bound, rng)}});
  return Conv2d<Real>(&group, stride, padding);
}

template <typename Real>
BatchNorm2d<Real> build_batch_norm(ParameterStore<Real>& store, const std::string& name,
                                   size_t channels, MixingMode mode) {
  auto& group = store.add(name, ParamKind::Channel, mode,
                          {{"gamma", Tensor<Real>::ones({channels})}, {"beta", Tensor<Real>::zeros({channels})}});
  return BatchNorm2d<Real>(&group);
}

template <typename Real>
Linear<Real> build_linear(ParameterStore<Real>& store, const std::string& name, size_t in_features,
                          size_t out_features, MixingMode mode, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  auto weight = uniform_tensor<Real>({out_features, in_features}, bound, rng);
  auto bias = uniform_tensor<Real>({out_features}, bound, rng);
  auto& group = store.add(name, ParamKind::Channel, mode, {{"weight", std::move(weight)}, {"bias", std::move(bias)}});
  return Linear<Real>(&group);
}

#define MIXBENCH_INSTANTIATE(Real)                                                                  \
  template struct ParamGroup<Real>;                                                                \
  template class ParameterStore<Real>;                                                             \
  template class DepthwiseConv2d<Real>;                                                            \
  template class PointwiseConv2d<Real>;                                                            \
  template class Conv2d<Real>;                                                                     \
  template class BatchNorm2d<Real>;                                                                \
  template class Linear<Real>;                                                                     \
  template Tensor<Real> uniform_tensor(Shape, double, SplitMix64&);                                \
  template Tensor<Real> make_depthwise_filters(size_t, size_t, size_t, FilterInit, SplitMix64&);   \
  template Tensor<Real> smooth_filters(const Tensor<Real>&, size_t);                               \
  template SeparableConv2d<Real> build_separable_conv(ParameterStore<Real>&, const std::string&,   \
                                                      const SeparableConvSpec&, SplitMix64&, size_t); \
  template DepthwiseConv2d<Real> build_depthwise(ParameterStore<Real>&, const std::string&, size_t, \
                                                 size_t, size_t, size_t, MixingMode, FilterInit,    \
                                                 SplitMix64&, size_t);                              \
  template PointwiseConv2d<Real> build_pointwise(ParameterStore<Real>&, const std::string&, size_t, \
                                                 size_t, MixingMode, SplitMix64&);                  \
  template Conv2d<Real> build_conv(ParameterStore<Real>&, const std::string&, size_t, size_t,       \
                                   size_t, size_t, Padding, MixingMode, SplitMix64&);               \
  template BatchNorm2d<Real> build_batch_norm(ParameterStore<Real>&, const std::string&, size_t,    \
                                              MixingMode);                                          \
  template Linear<Real> build_linear(ParameterStore<Real>&, const std::string&, size_t, size_t,     \
                                     MixingMode, SplitMix64&);

MIXBENCH_INSTANTIATE(float)
MIXBENCH_INSTANTIATE(double)
#undef MIXBENCH_INSTANTIATE

}  // namespace mixbench
