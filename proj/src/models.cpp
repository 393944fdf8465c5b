#include "mixbench/models.hpp"

#include <stdexcept>

namespace mixbench {
namespace {

using std::size_t;

template <typename Real>
struct PreActBlock {
  BatchNorm2d<Real> bn1;
  SeparableConv2d<Real> conv1;
  BatchNorm2d<Real> bn2;
  SeparableConv2d<Real> conv2;
  bool has_projection = false;
  PointwiseConv2d<Real> projection;
  size_t stride = 1;

  Var<Real> forward(const Var<Real>& x, bool training) {
    Var<Real> a = relu(bn1.forward(x, training));
    Var<Real> shortcut = has_projection ? projection.forward(stride > 1 ? subsample(a, stride) : a) : x;
    Var<Real> h = conv1.forward(a);
    h = conv2.forward(relu(bn2.forward(h, training)));
    return add(h, shortcut);
  }
};

template <typename Real>
class SeparableResNet final : public Model<Real> {
 public:
  SeparableResNet(const ResNetConfig& cfg, std::uint64_t seed) : Model<Real>(cfg.mode), cfg_(cfg) {
    if (cfg.n < 1) throw std::invalid_argument("resnet needs n >= 1");
    auto& store = this->params_;
    SplitMix64 rng(seed);
    stem_ = build_conv(store, "stem.conv", cfg.in_channels, cfg.base_width, 3, 1, Padding::Same, cfg.mode, rng);
    size_t width_in = cfg.base_width;
    for (size_t stage = 0; stage < 3; ++stage) {
      const size_t width = cfg.base_width << stage;
      for (size_t b = 0; b < cfg.n; ++b) {
        const std::string name = "stage" + std::to_string(stage + 1) + ".block" + std::to_string(b);
        PreActBlock<Real> block;
        block.stride = (stage > 0 && b == 0) ? 2 : 1;
        block.bn1 = build_batch_norm(store, name + ".bn1", width_in, cfg.mode);
        SeparableConvSpec s1{width_in, width, cfg.kernel, cfg.depth_multiplier, cfg.mode, cfg.init, block.stride};
        block.conv1 = build_separable_conv(store, name + ".conv1", s1, rng, cfg.smoothing);
        block.bn2 = build_batch_norm(store, name + ".bn2", width, cfg.mode);
        SeparableConvSpec s2{width, width, cfg.kernel, cfg.depth_multiplier, cfg.mode, cfg.init, 1};
        block.conv2 = build_separable_conv(store, name + ".conv2", s2, rng, cfg.smoothing);
        if (block.stride != 1 || width_in != width) {
          block.has_projection = true;
          block.projection = build_pointwise(store, name + ".shortcut", width_in, width, cfg.mode, rng);
        }
        blocks_.push_back(std::move(block));
        width_in = width;
      }
    }
    final_bn_ = build_batch_norm(store, "head.bn", width_in, cfg.mode);
    head_ = build_linear(store, "head.linear", width_in, cfg.num_classes, cfg.mode, rng);
  }

  Var<Real> forward(const Var<Real>& x, bool training) override {
    Var<Real> h = stem_.forward(x);
    for (auto& block : blocks_) h = block.forward(h, training);
    h = relu(final_bn_.forward(h, training));
    return head_.forward(global_avg_pool(h));
  }

  std::string family() const override { return "resnet"; }

  std::vector<std::pair<std::string, std::string>> describe() const override {
    return {{"family", family()},
            {"n", std::to_string(cfg_.n)},
            {"base_width", std::to_string(cfg_.base_width)},
            {"num_classes", std::to_string(cfg_.num_classes)},
            {"in_channels", std::to_string(cfg_.in_channels)},
            {"mode", to_string(cfg_.mode)},
            {"depth_multiplier", std::to_string(cfg_.depth_multiplier)},
            {"kernel", std::to_string(cfg_.kernel)},
            {"init", to_string(cfg_.init)},
            {"smoothing", std::to_string(cfg_.smoothing)},
            {"layers", std::to_string(layer_count())},
            {"ordering", "stem,[bn,relu,sepconv,bn,relu,sepconv]+shortcut,bn,relu,pool,linear"}};
  }

  size_t layer_count() const override { return 1 + 2 * blocks_.size() + 1; }

  std::vector<std::pair<std::string, RunningStats<Real>*>> running_stats() override {
    std::vector<std::pair<std::string, RunningStats<Real>*>> out;
    for (auto& b : blocks_) {
      out.emplace_back(b.bn1.group().name, &b.bn1.stats());
      out.emplace_back(b.bn2.group().name, &b.bn2.stats());
    }
    out.emplace_back(final_bn_.group().name, &final_bn_.stats());
    return out;
  }

 private:
  ResNetConfig cfg_;
  Conv2d<Real> stem_;
  std::vector<PreActBlock<Real>> blocks_;
  BatchNorm2d<Real> final_bn_;
  Linear<Real> head_;
};

template <typename Real>
struct MixerBlock {
  DepthwiseConv2d<Real> depthwise;
  BatchNorm2d<Real> bn1;
  PointwiseConv2d<Real> pointwise;
  BatchNorm2d<Real> bn2;

  Var<Real> forward(const Var<Real>& x, bool training) {
    Var<Real> h = add(x, bn1.forward(gelu(depthwise.forward(x)), training));
    return bn2.forward(gelu(pointwise.forward(h)), training);
  }
};

// Shared stem + isotropic trunk of the classifier and the unshuffler.
template <typename Real>
struct MixerTrunk {
  Conv2d<Real> stem;
  BatchNorm2d<Real> stem_bn;
  std::vector<MixerBlock<Real>> blocks;

  void build(ParameterStore<Real>& store, size_t in_channels, size_t width, size_t depth, size_t kernel,
             size_t patch, MixingMode mode, FilterInit init, size_t smoothing, SplitMix64& rng) {
    if (depth < 1) throw std::invalid_argument("convmixer needs depth >= 1");
    stem = build_conv(store, "stem.conv", in_channels, width, patch, patch, Padding::Valid, mode, rng);
    stem_bn = build_batch_norm(store, "stem.bn", width, mode);
    for (size_t i = 0; i < depth; ++i) {
      const std::string name = "block" + std::to_string(i);
      MixerBlock<Real> b;
      b.depthwise = build_depthwise(store, name + ".depthwise", width, kernel, 1, 1, mode, init, rng, smoothing);
      b.bn1 = build_batch_norm(store, name + ".bn1", width, mode);
      b.pointwise = build_pointwise(store, name + ".pointwise", width, width, mode, rng);
      b.bn2 = build_batch_norm(store, name + ".bn2", width, mode);
      blocks.push_back(std::move(b));
    }
  }

  Var<Real> forward(const Var<Real>& x, bool training) {
    Var<Real> h = stem_bn.forward(gelu(stem.forward(x)), training);
    for (auto& b : blocks) h = b.forward(h, training);
    return h;
  }

  void collect_stats(std::vector<std::pair<std::string, RunningStats<Real>*>>& out) {
    out.emplace_back(stem_bn.group().name, &stem_bn.stats());
    for (auto& b : blocks) {
      out.emplace_back(b.bn1.group().name, &b.bn1.stats());
      out.emplace_back(b.bn2.group().name, &b.bn2.stats());
    }
  }
};

constexpr const char* kMixerOrdering =
    "stem(conv,gelu,bn),[residual(depthwise,gelu,bn),pointwise,gelu,bn]";

template <typename Real>
class ConvMixer final : public Model<Real> {
 public:
  ConvMixer(const ConvMixerConfig& cfg, std::uint64_t seed) : Model<Real>(cfg.mode), cfg_(cfg) {
    SplitMix64 rng(seed);
    trunk_.build(this->params_, cfg.in_channels, cfg.width, cfg.depth, cfg.kernel, cfg.patch, cfg.mode,
                 cfg.init, cfg.smoothing, rng);
    head_ = build_linear(this->params_, "head.linear", cfg.width, cfg.num_classes, cfg.mode, rng);
  }

  Var<Real> forward(const Var<Real>& x, bool training) override {
    return head_.forward(global_avg_pool(trunk_.forward(x, training)));
  }

  std::string family() const override { return "convmixer"; }

  std::vector<std::pair<std::string, std::string>> describe() const override {
    return {{"family", family()},
            {"depth", std::to_string(cfg_.depth)},
            {"width", std::to_string(cfg_.width)},
            {"kernel", std::to_string(cfg_.kernel)},
            {"patch", std::to_string(cfg_.patch)},
            {"num_classes", std::to_string(cfg_.num_classes)},
            {"in_channels", std::to_string(cfg_.in_channels)},
            {"mode", to_string(cfg_.mode)},
            {"init", to_string(cfg_.init)},
            {"smoothing", std::to_string(cfg_.smoothing)},
            {"layers", std::to_string(layer_count())},
            {"ordering", std::string(kMixerOrdering) + ",pool,linear"}};
  }

  size_t layer_count() const override { return 1 + 2 * cfg_.depth + 1; }

  std::vector<std::pair<std::string, RunningStats<Real>*>> running_stats() override {
    std::vector<std::pair<std::string, RunningStats<Real>*>> out;
    trunk_.collect_stats(out);
    return out;
  }

 private:
  ConvMixerConfig cfg_;
  MixerTrunk<Real> trunk_;
  Linear<Real> head_;
};

template <typename Real>
class Unshuffler final : public Model<Real> {
 public:
  Unshuffler(const UnshufflerConfig& cfg, std::uint64_t seed) : Model<Real>(cfg.mode), cfg_(cfg) {
    if (cfg.out_channels != 1 && cfg.out_channels != 3) {
      throw std::invalid_argument("unshuffler out_channels must be 1 or 3");
    }
    SplitMix64 rng(seed);
    trunk_.build(this->params_, cfg.out_channels, cfg.width, cfg.depth, cfg.kernel, 1, cfg.mode, cfg.init,
                 cfg.smoothing, rng);
    projection_ = build_pointwise(this->params_, "head.projection", cfg.width, cfg.out_channels, cfg.mode, rng);
  }

  Var<Real> forward(const Var<Real>& x, bool training) override {
    return projection_.forward(trunk_.forward(x, training));
  }

  std::string family() const override { return "unshuffler"; }

  std::vector<std::pair<std::string, std::string>> describe() const override {
    return {{"family", family()},
            {"depth", std::to_string(cfg_.depth)},
            {"width", std::to_string(cfg_.width)},
            {"kernel", std::to_string(cfg_.kernel)},
            {"out_channels", std::to_string(cfg_.out_channels)},
            {"mode", to_string(cfg_.mode)},
            {"init", to_string(cfg_.init)},
            {"smoothing", std::to_string(cfg_.smoothing)},
            {"layers", std::to_string(layer_count())},
            {"ordering", std::string(kMixerOrdering) + ",pointwise"}};
  }

  size_t layer_count() const override { return 1 + 2 * cfg_.depth + 1; }

  std::vector<std::pair<std::string, RunningStats<Real>*>> running_stats() override {
    std::vector<std::pair<std::string, RunningStats<Real>*>> out;
    trunk_.collect_stats(out);
    return out;
  }

 private:
  UnshufflerConfig cfg_;
  MixerTrunk<Real> trunk_;
  PointwiseConv2d<Real> projection_;
};

}  // namespace

template <typename Real>
std::unique_ptr<Model<Real>> build_separable_resnet(const ResNetConfig& cfg, std::uint64_t seed) {
  return std::make_unique<SeparableResNet<Real>>(cfg, seed);
}

template <typename Real>
std::unique_ptr<Model<Real>> build_convmixer(const ConvMixerConfig& cfg, std::uint64_t seed) {
  return std::make_unique<ConvMixer<Real>>(cfg, seed);
}

template <typename Real>
std::unique_ptr<Model<Real>> build_unshuffler(const UnshufflerConfig& cfg, std::uint64_t seed) {
  return std::make_unique<Unshuffler<Real>>(cfg, seed);
}

template <typename Real>
std::vector<const Tensor<Real>*> depthwise_banks(const Model<Real>& model) {
  std::vector<const Tensor<Real>*> banks;
  const auto& store = model.params();
  for (size_t i = 0; i < store.size(); ++i)
    if (store[i].kind == ParamKind::Spatial) banks.push_back(&store[i].tensors[0]);
  return banks;
}

#define MIXBENCH_INSTANTIATE(Real)                                                                 \
  template std::unique_ptr<Model<Real>> build_separable_resnet(const ResNetConfig&, std::uint64_t); \
  template std::unique_ptr<Model<Real>> build_convmixer(const ConvMixerConfig&, std::uint64_t);     \
  template std::unique_ptr<Model<Real>> build_unshuffler(const UnshufflerConfig&, std::uint64_t);   \
  template std::vector<const Tensor<Real>*> depthwise_banks(const Model<Real>&);

MIXBENCH_INSTANTIATE(float)
MIXBENCH_INSTANTIATE(double)
#undef MIXBENCH_INSTANTIATE

}  // namespace mixbench
