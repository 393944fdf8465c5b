#include "mixbench/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "mixbench/checkpoint.hpp"
#include "mixbench/errors.hpp"
#include "mixbench/spectral.hpp"

namespace mixbench {

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Classify: return "classify";
    case ExperimentKind::Unshuffle: return "unshuffle";
    case ExperimentKind::Robustness: return "robustness";
    case ExperimentKind::Envelope: return "envelope";
    case ExperimentKind::FilterAblation: return "filter-ablation";
    case ExperimentKind::WidthSweep: return "width-sweep";
  }
  return "?";
}

std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::ResNet: return "resnet";
    case ModelFamily::ConvMixer: return "convmixer";
    case ModelFamily::Unshuffler: return "unshuffler";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(std::string_view text) {
  for (auto k : {ExperimentKind::Classify, ExperimentKind::Unshuffle, ExperimentKind::Robustness,
                 ExperimentKind::Envelope, ExperimentKind::FilterAblation, ExperimentKind::WidthSweep})
    if (text == to_string(k)) return k;
  throw std::invalid_argument("unknown experiment '" + std::string(text) +
                              "' (classify|unshuffle|robustness|envelope|filter-ablation|width-sweep)");
}

ModelFamily parse_model_family(std::string_view text) {
  for (auto f : {ModelFamily::ResNet, ModelFamily::ConvMixer, ModelFamily::Unshuffler})
    if (text == to_string(f)) return f;
  throw std::invalid_argument("unknown model family '" + std::string(text) + "' (resnet|convmixer|unshuffler)");
}

std::vector<std::filesystem::path> DataConfig::train_files() const {
  if (format == "mnist") return {root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte"};
  std::vector<std::filesystem::path> files;
  for (int i = 1; i <= 5; ++i) files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
  return files;
}

std::vector<std::filesystem::path> DataConfig::test_files() const {
  if (format == "mnist") return {root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte"};
  return {root / "test_batch.bin"};
}

namespace {

// Converts parser exceptions into ConfigError for `key`.
template <typename F>
auto parse_field(const std::string& key, F&& parse) {
  try {
    return parse();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, e.what());
  }
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

template <typename T>
std::string join_values(const std::vector<T>& values) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << values[i];
  return out.str();
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string part; std::getline(in, part, ',');) {
    part.erase(0, part.find_first_not_of(' '));
    part.erase(part.find_last_not_of(' ') + 1);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::size_t family_kernel(const ExperimentConfig& cfg) {
  switch (cfg.family) {
    case ModelFamily::ResNet: return cfg.resnet.kernel;
    case ModelFamily::ConvMixer: return cfg.convmixer.kernel;
    case ModelFamily::Unshuffler: return cfg.unshuffler.kernel;
  }
  return 3;
}

FilterInit family_init(const ExperimentConfig& cfg) {
  switch (cfg.family) {
    case ModelFamily::ResNet: return cfg.resnet.init;
    case ModelFamily::ConvMixer: return cfg.convmixer.init;
    case ModelFamily::Unshuffler: return cfg.unshuffler.init;
  }
  return FilterInit::RandomIndependent;
}

std::size_t family_smoothing(const ExperimentConfig& cfg) {
  switch (cfg.family) {
    case ModelFamily::ResNet: return cfg.resnet.smoothing;
    case ModelFamily::ConvMixer: return cfg.convmixer.smoothing;
    case ModelFamily::Unshuffler: return cfg.unshuffler.smoothing;
  }
  return 0;
}

MixingMode family_mode(const ExperimentConfig& cfg) {
  switch (cfg.family) {
    case ModelFamily::ResNet: return cfg.resnet.mode;
    case ModelFamily::ConvMixer: return cfg.convmixer.mode;
    case ModelFamily::Unshuffler: return cfg.unshuffler.mode;
  }
  return MixingMode::Full;
}

// Descriptive keys written by resolved() so a run documents its fixed
// choices. They are accepted on input only when unchanged.
constexpr std::pair<const char*, const char*> kNotes[] = {
    {"model.padding", "same: floor((k-1)/2) before, ceil((k-1)/2) after"},
    {"data.normalization", "pixels scaled to [0,1], no standardization"},
    {"robustness.pgd_step_size", "epsilon/2"},
    {"robustness.pgd_random_start", "false"},
    {"robustness.normalization", "running statistics (eval mode)"},
    {"envelope.threshold", "0.25 * max of the largest bank's envelope"},
};

const char* fixed_note(std::string_view key) {
  for (const auto& [k, v] : kNotes)
    if (key == k) return v;
  return "";
}

void check_notes(const KeyValues& in) {
  for (const auto& [k, v] : kNotes)
    if (in.has(k) && in.get(k) != v) throw ConfigError(k, "fixed by the implementation: " + std::string(v));
}

}  // namespace

ExperimentConfig ExperimentConfig::from_keyvalues(const KeyValues& kv) {
  ExperimentConfig cfg;
  cfg.source = kv;
  const KeyValues& in = cfg.source;
  cfg.kind = parse_field("experiment", [&] { return parse_experiment_kind(in.get("experiment")); });
  cfg.seed = in.get_u64("seed");
  cfg.output = in.get("output");
  const std::string precision = in.get("precision", "float");
  if (precision != "float" && precision != "double") throw ConfigError("precision", "expected float or double");
  cfg.precision = precision == "double" ? Precision::Double : Precision::Float;

  const std::string default_family = cfg.kind == ExperimentKind::Unshuffle ? "unshuffler" : "resnet";
  cfg.family = parse_field("model.family", [&] { return parse_model_family(in.get("model.family", default_family)); });
  const auto mode = parse_field("model.mode", [&] { return parse_mixing_mode(in.get("model.mode", "full")); });
  const auto init =
      parse_field("model.init", [&] { return parse_filter_init(in.get("model.init", "random-independent")); });
  const std::size_t smoothing = in.get_size("model.smoothing", 0);
  switch (cfg.family) {
    case ModelFamily::ResNet:
      cfg.resnet.n = in.get_size("model.n", cfg.resnet.n);
      cfg.resnet.base_width = in.get_size("model.base_width", cfg.resnet.base_width);
      cfg.resnet.depth_multiplier = in.get_size("model.depth_multiplier", cfg.resnet.depth_multiplier);
      cfg.resnet.kernel = in.get_size("model.kernel", cfg.resnet.kernel);
      cfg.resnet.mode = mode;
      cfg.resnet.init = init;
      cfg.resnet.smoothing = smoothing;
      if (cfg.resnet.n < 1) throw ConfigError("model.n", "must be >= 1");
      break;
    case ModelFamily::ConvMixer:
      cfg.convmixer.depth = in.get_size("model.depth", cfg.convmixer.depth);
      cfg.convmixer.width = in.get_size("model.width", cfg.convmixer.width);
      cfg.convmixer.kernel = in.get_size("model.kernel", cfg.convmixer.kernel);
      cfg.convmixer.patch = in.get_size("model.patch", cfg.convmixer.patch);
      cfg.convmixer.mode = mode;
      cfg.convmixer.init = init;
      cfg.convmixer.smoothing = smoothing;
      if (cfg.convmixer.depth < 1) throw ConfigError("model.depth", "must be >= 1");
      break;
    case ModelFamily::Unshuffler:
      cfg.unshuffler.depth = in.get_size("model.depth", cfg.unshuffler.depth);
      cfg.unshuffler.width = in.get_size("model.width", cfg.unshuffler.width);
      cfg.unshuffler.kernel = in.get_size("model.kernel", cfg.unshuffler.kernel);
      cfg.unshuffler.mode = mode;
      cfg.unshuffler.init = init;
      cfg.unshuffler.smoothing = smoothing;
      break;
  }
  if (family_kernel(cfg) < 1) throw ConfigError("model.kernel", "must be >= 1");
  if (cfg.kind == ExperimentKind::Unshuffle && cfg.family != ModelFamily::Unshuffler)
    throw ConfigError("model.family", "unshuffle requires the unshuffler family");
  if (cfg.kind != ExperimentKind::Unshuffle && cfg.kind != ExperimentKind::Envelope &&
      cfg.family == ModelFamily::Unshuffler)
    throw ConfigError("model.family", "the unshuffler family only runs the unshuffle experiment");

  if (cfg.kind != ExperimentKind::Envelope) {
    cfg.data.format = in.get("data.format", "mnist");
    if (cfg.data.format != "mnist" && cfg.data.format != "cifar10")
      throw ConfigError("data.format", "expected mnist or cifar10");
    cfg.data.root = resolve_data_path(in.get("data.root"));
    cfg.data.train_limit = in.get_size("data.train_limit", 0);
    cfg.data.test_limit = in.get_size("data.test_limit", 0);

    OptimConfig& o = cfg.optim;
    o = cfg.family == ModelFamily::Unshuffler ? OptimConfig::unshuffler_default() : OptimConfig::resnet_default();
    o.kind = parse_field("optim.kind", [&] { return parse_optimizer(in.get("optim.kind", to_string(o.kind))); });
    o.lr = in.get_double("optim.lr", o.lr);
    o.momentum = in.get_double("optim.momentum", o.momentum);
    o.beta1 = in.get_double("optim.beta1", o.beta1);
    o.beta2 = in.get_double("optim.beta2", o.beta2);
    o.adam_eps = in.get_double("optim.adam_eps", o.adam_eps);
    o.weight_decay = in.get_double("optim.weight_decay", o.weight_decay);
    o.epochs = in.get_size("optim.epochs", o.epochs);
    o.batch_size = in.get_size("optim.batch_size", o.batch_size);
    o.schedule =
        parse_field("optim.schedule", [&] { return parse_schedule(in.get("optim.schedule", to_string(o.schedule))); });
    o.step_every = in.get_size("optim.step_every", o.step_every);
    o.step_gamma = in.get_double("optim.step_gamma", o.step_gamma);
    o.augment = in.get_bool("optim.augment", o.augment);
    o.shuffle_seed = in.has("optim.shuffle_seed") ? in.get_u64("optim.shuffle_seed") : cfg.seed;
    o.validate();

    if (in.get_bool("attack.train", false)) {
      AttackConfig a;
      a.epsilon = in.get_double("attack.epsilon");
      a.iterations = in.get_size("attack.iterations", 1);
      a.step_size = in.get_double("attack.step_size", -1);
      a.validate();
      cfg.train_attack = a;
    }
  }

  if (cfg.kind == ExperimentKind::Robustness) {
    cfg.epsilons = in.get_doubles("robustness.epsilons");
    if (cfg.epsilons.empty() || cfg.epsilons.front() != 0.0 || !std::is_sorted(cfg.epsilons.begin(), cfg.epsilons.end()))
      throw ConfigError("robustness.epsilons", "must be ascending and start at 0");
    cfg.attack_kinds.clear();
    for (const auto& name : split_list(in.get("robustness.attacks", "fgsm,pgd")))
      cfg.attack_kinds.push_back(parse_field("robustness.attacks", [&] { return parse_attack_kind(name); }));
    cfg.pgd_iterations = in.get_size("robustness.pgd_iterations", cfg.pgd_iterations);
    if (cfg.pgd_iterations < 1) throw ConfigError("robustness.pgd_iterations", "must be >= 1");
  }
  if (cfg.kind == ExperimentKind::Unshuffle) {
    cfg.permutation_seed = in.has("permutation.seed") ? in.get_u64("permutation.seed") : cfg.seed;
    cfg.image_grid_count = in.get_size("images.count", cfg.image_grid_count);
  }
  if (cfg.kind == ExperimentKind::Envelope) {
    if (in.has("envelope.bank_sizes")) cfg.bank_sizes = in.get_sizes("envelope.bank_sizes");
    cfg.envelope_pad = in.get_size("envelope.pad", cfg.envelope_pad);
    if (cfg.bank_sizes.empty() || std::find(cfg.bank_sizes.begin(), cfg.bank_sizes.end(), 0u) != cfg.bank_sizes.end())
      throw ConfigError("envelope.bank_sizes", "sizes must be >= 1");
    if (!is_power_of_two(cfg.envelope_pad) || cfg.envelope_pad < family_kernel(cfg))
      throw ConfigError("envelope.pad", "must be a power of two no smaller than the kernel");
  }
  if (cfg.kind == ExperimentKind::WidthSweep) {
    if (in.has("sweep.widths")) cfg.sweep_widths = in.get_sizes("sweep.widths");
    if (cfg.sweep_widths.empty()) throw ConfigError("sweep.widths", "needs at least one width");
  }
  if (cfg.kind == ExperimentKind::FilterAblation && in.has("ablation.inits")) {
    cfg.ablation_inits.clear();
    for (const auto& name : split_list(in.get("ablation.inits")))
      cfg.ablation_inits.push_back(parse_field("ablation.inits", [&] { return parse_filter_init(name); }));
  }

  check_notes(in);

  const auto unused = in.unused_keys();
  if (!unused.empty()) throw ConfigError(unused.front(), "unknown key for experiment " + to_string(cfg.kind));
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_keyvalues(KeyValues::load(path));
}

KeyValues ExperimentConfig::resolved() const {
  KeyValues kv;
  kv.set("experiment", to_string(kind));
  kv.set("seed", std::to_string(seed));
  kv.set("output", output.string());
  kv.set("precision", precision == Precision::Double ? "double" : "float");
  kv.set("model.family", to_string(family));
  kv.set("model.mode", to_string(family_mode(*this)));
  kv.set("model.init", to_string(family_init(*this)));
  kv.set("model.smoothing", std::to_string(family_smoothing(*this)));
  kv.set("model.kernel", std::to_string(family_kernel(*this)));
  switch (family) {
    case ModelFamily::ResNet:
      kv.set("model.n", std::to_string(resnet.n));
      kv.set("model.base_width", std::to_string(resnet.base_width));
      kv.set("model.depth_multiplier", std::to_string(resnet.depth_multiplier));
      break;
    case ModelFamily::ConvMixer:
      kv.set("model.depth", std::to_string(convmixer.depth));
      kv.set("model.width", std::to_string(convmixer.width));
      kv.set("model.patch", std::to_string(convmixer.patch));
      break;
    case ModelFamily::Unshuffler:
      kv.set("model.depth", std::to_string(unshuffler.depth));
      kv.set("model.width", std::to_string(unshuffler.width));
      break;
  }
  kv.set("model.padding", fixed_note("model.padding"));
  if (kind != ExperimentKind::Envelope) {
    kv.set("data.format", data.format);
    kv.set("data.root", data.root.string());
    kv.set("data.train_limit", std::to_string(data.train_limit));
    kv.set("data.test_limit", std::to_string(data.test_limit));
    kv.set("data.normalization", fixed_note("data.normalization"));
    kv.set("optim.kind", to_string(optim.kind));
    kv.set("optim.lr", format_double(optim.lr));
    kv.set("optim.momentum", format_double(optim.momentum));
    kv.set("optim.beta1", format_double(optim.beta1));
    kv.set("optim.beta2", format_double(optim.beta2));
    kv.set("optim.adam_eps", format_double(optim.adam_eps));
    kv.set("optim.weight_decay", format_double(optim.weight_decay));
    kv.set("optim.epochs", std::to_string(optim.epochs));
    kv.set("optim.batch_size", std::to_string(optim.batch_size));
    kv.set("optim.schedule", to_string(optim.schedule));
    kv.set("optim.step_every", std::to_string(optim.step_every));
    kv.set("optim.step_gamma", format_double(optim.step_gamma));
    kv.set("optim.augment", optim.augment ? "true" : "false");
    kv.set("optim.shuffle_seed", std::to_string(optim.shuffle_seed));
    kv.set("attack.train", train_attack ? "true" : "false");
    if (train_attack) {
      kv.set("attack.epsilon", format_double(train_attack->epsilon));
      kv.set("attack.iterations", std::to_string(train_attack->iterations));
      kv.set("attack.step_size", format_double(train_attack->effective_step()));
    }
  }
  if (kind == ExperimentKind::Robustness) {
    kv.set("robustness.epsilons", join_values(epsilons));
    std::vector<std::string> names;
    for (auto k : attack_kinds) names.push_back(to_string(k));
    kv.set("robustness.attacks", join_values(names));
    kv.set("robustness.pgd_iterations", std::to_string(pgd_iterations));
    kv.set("robustness.pgd_step_size", fixed_note("robustness.pgd_step_size"));
    kv.set("robustness.pgd_random_start", fixed_note("robustness.pgd_random_start"));
    kv.set("robustness.normalization", fixed_note("robustness.normalization"));
  }
  if (kind == ExperimentKind::Unshuffle) {
    kv.set("permutation.seed", std::to_string(permutation_seed));
    kv.set("images.count", std::to_string(image_grid_count));
  }
  if (kind == ExperimentKind::Envelope) {
    kv.set("envelope.bank_sizes", join_values(bank_sizes));
    kv.set("envelope.pad", std::to_string(envelope_pad));
    kv.set("envelope.threshold", fixed_note("envelope.threshold"));
  }
  if (kind == ExperimentKind::WidthSweep) kv.set("sweep.widths", join_values(sweep_widths));
  if (kind == ExperimentKind::FilterAblation) {
    std::vector<std::string> names;
    for (auto i : ablation_inits) names.push_back(to_string(i));
    kv.set("ablation.inits", join_values(names));
  }
  return kv;
}

void ExperimentConfig::check_inputs() const {
  if (kind == ExperimentKind::Envelope) return;
  auto files = data.train_files();
  const auto test = data.test_files();
  files.insert(files.end(), test.begin(), test.end());
  for (const auto& f : files)
    if (!std::filesystem::exists(f)) throw DataError("missing dataset file " + f.string());
}

std::pair<Dataset, Dataset> load_datasets(const DataConfig& data) {
  Dataset train_set, test_set;
  const auto train_files = data.train_files();
  const auto test_files = data.test_files();
  if (data.format == "mnist") {
    train_set = load_idx(train_files[0], train_files[1], Split::Train);
    test_set = load_idx(test_files[0], test_files[1], Split::Test);
  } else {
    train_set = load_cifar_binary(train_files, Split::Train);
    test_set = load_cifar_binary(test_files, Split::Test);
  }
  if (data.train_limit && data.train_limit < train_set.size()) train_set = train_set.slice(0, data.train_limit);
  if (data.test_limit && data.test_limit < test_set.size()) test_set = test_set.slice(0, data.test_limit);
  return {std::move(train_set), std::move(test_set)};
}

void save_image_grid(const Tensor<float>& images, std::size_t columns, const std::filesystem::path& path) {
  if (images.rank() != 4) throw ShapeError("image grid expects [N,C,H,W], got " + shape_string(images.shape()));
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (c != 1 && c != 3) throw ShapeError("image grid needs 1 or 3 channels, got " + std::to_string(c));
  columns = std::max<std::size_t>(1, std::min(columns, n));
  const std::size_t rows = (n + columns - 1) / columns;
  const std::size_t gw = columns * (w + 1) - 1, gh = rows * (h + 1) - 1;
  std::vector<unsigned char> pixels(gw * gh * c, 128);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t oy = (i / columns) * (h + 1), ox = (i % columns) * (w + 1);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const float v = std::clamp(images[((i * c + ch) * h + y) * w + x], 0.0f, 1.0f);
          pixels[((oy + y) * gw + ox + x) * c + ch] = static_cast<unsigned char>(std::lround(v * 255.0f));
        }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << (c == 1 ? "P5\n" : "P6\n") << gw << ' ' << gh << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

namespace {

struct Runner {
  const ExperimentConfig& cfg;
  std::ostream* log;
  RunResult result;

  void note(const std::string& text) const {
    if (log) *log << text << std::endl;
  }

  std::filesystem::path artifact(const std::filesystem::path& relative) {
    const auto p = cfg.output / relative;
    std::filesystem::create_directories(p.parent_path());
    result.artifacts.push_back(p);
    return p;
  }

  template <typename Real>
  std::unique_ptr<Model<Real>> build(ModelFamily family, MixingMode mode, FilterInit init, std::size_t width,
                                     const Dataset& data) const {
    switch (family) {
      case ModelFamily::ResNet: {
        ResNetConfig r = cfg.resnet;
        r.mode = mode;
        r.init = init;
        r.base_width = width;
        r.in_channels = data.channels();
        r.num_classes = data.num_classes;
        return build_separable_resnet<Real>(r, cfg.seed);
      }
      case ModelFamily::ConvMixer: {
        ConvMixerConfig c = cfg.convmixer;
        c.mode = mode;
        c.init = init;
        c.width = width;
        c.in_channels = data.channels();
        c.num_classes = data.num_classes;
        return build_convmixer<Real>(c, cfg.seed);
      }
      case ModelFamily::Unshuffler: {
        UnshufflerConfig u = cfg.unshuffler;
        u.mode = mode;
        u.init = init;
        u.width = width;
        u.out_channels = data.channels();
        return build_unshuffler<Real>(u, cfg.seed);
      }
    }
    return nullptr;
  }

  std::size_t base_width() const {
    switch (cfg.family) {
      case ModelFamily::ResNet: return cfg.resnet.base_width;
      case ModelFamily::ConvMixer: return cfg.convmixer.width;
      case ModelFamily::Unshuffler: return cfg.unshuffler.width;
    }
    return 0;
  }

  template <typename Real>
  TrainReport classify(Model<Real>& model, const Dataset& train_set, const Dataset& test_set,
                       const std::filesystem::path& dir) {
    TrainOptions options;
    options.task = Task::Classify;
    options.adversarial = cfg.train_attack ? &*cfg.train_attack : nullptr;
    options.log = log;
    TrainReport report = train(model, train_set, test_set, cfg.optim, options);
    report.write_csv(artifact(dir / "report.csv"));
    result.artifacts.push_back(save_checkpoint(model, cfg.output / dir / "checkpoint"));
    return report;
  }

  template <typename Real>
  void run_classify() {
    const auto [train_set, test_set] = load_datasets(cfg.data);
    auto model = build<Real>(cfg.family, family_mode(cfg), family_init(cfg), base_width(), train_set);
    result.metric = classify(*model, train_set, test_set, "").final_metric();
  }

  template <typename Real>
  void run_robustness() {
    const auto [train_set, test_set] = load_datasets(cfg.data);
    auto model = build<Real>(cfg.family, family_mode(cfg), family_init(cfg), base_width(), train_set);
    result.metric = classify(*model, train_set, test_set, "").final_metric();
    std::vector<RobustnessRow> rows;
    for (AttackKind kind : cfg.attack_kinds) {
      note("robustness curve: " + to_string(kind));
      auto curve = robustness_curve(*model, test_set, cfg.epsilons, kind, cfg.pgd_iterations);
      rows.insert(rows.end(), curve.begin(), curve.end());
    }
    write_robustness_csv(rows, artifact("robustness.csv"));
  }

  template <typename Real>
  void run_unshuffle() {
    const auto [train_set, test_set] = load_datasets(cfg.data);
    const Permutation perm = make_permutation(train_set.height(), train_set.width(), cfg.permutation_seed);
    save_permutation(perm, artifact("permutation.txt"));
    auto model = build<Real>(cfg.family, family_mode(cfg), family_init(cfg), base_width(), train_set);
    TrainOptions options;
    options.task = Task::Reconstruct;
    options.permutation = &perm;
    options.log = log;
    const TrainReport report = train(*model, train_set, test_set, cfg.optim, options);
    report.write_csv(artifact("report.csv"));
    result.artifacts.push_back(save_checkpoint(*model, cfg.output / "checkpoint"));
    result.metric = report.final_metric();

    const std::size_t count = std::min(cfg.image_grid_count, test_set.size());
    if (count == 0) return;
    const Dataset shown = test_set.slice(0, count);
    const Tensor<Real> original = shown.images.template cast<Real>();
    const Tensor<Real> shuffled = apply_permutation(original, perm);
    Tape<Real> tape;
    Tensor<Real> input = shuffled;
    const Tensor<Real> recon = model->forward(tape.leaf(input, false), false).value();
    const std::size_t plane = original.numel() / count;
    Tensor<float> grid({3 * count, shown.channels(), shown.height(), shown.width()});
    for (std::size_t i = 0; i < plane * count; ++i) {
      grid[i] = static_cast<float>(original[i]);
      grid[plane * count + i] = static_cast<float>(shuffled[i]);
      grid[2 * plane * count + i] = static_cast<float>(recon[i]);
    }
    save_image_grid(grid, count, artifact(shown.channels() == 1 ? "reconstructions.pgm" : "reconstructions.ppm"));
  }

  template <typename Real>
  void run_envelope() {
    const std::size_t largest = *std::max_element(cfg.bank_sizes.begin(), cfg.bank_sizes.end());
    const std::size_t k = family_kernel(cfg);
    SplitMix64 rng(cfg.seed);
    const Tensor<Real> bank =
        smooth_filters(make_depthwise_filters<Real>(1, largest, k, family_init(cfg), rng), family_smoothing(cfg));
    const SpectralEnvelope full = envelope(bank, cfg.envelope_pad);
    const double tau = default_threshold(full);
    save_mxt(full.to_tensor(), artifact("envelope.mxt"));
    std::ofstream csv(artifact("envelope.csv"));
    csv << "filters,threshold,coverage,high_band_coverage,high_band_energy\n" << std::setprecision(10);
    for (std::size_t f : cfg.bank_sizes) {
      Tensor<Real> subset({f, 1, k, k});
      std::copy_n(bank.data().begin(), f * k * k, subset.data().begin());
      const SpectralEnvelope env = envelope(subset, cfg.envelope_pad);
      const double cov = tau > 0 ? coverage(env, tau) : 0.0;
      const double high = tau > 0 ? high_band_coverage(env, tau) : 0.0;
      csv << f << ',' << tau << ',' << cov << ',' << high << ',' << high_band_energy(env) << '\n';
      save_envelope_pgm(env, artifact("envelope_" + std::to_string(f) + ".pgm"));
    }
    result.metric = std::numeric_limits<double>::quiet_NaN();
  }

  template <typename Real>
  void run_filter_ablation() {
    const auto [train_set, test_set] = load_datasets(cfg.data);
    std::ofstream csv(artifact("ablation.csv"));
    csv << "init,mode,accuracy,trainable_params,total_params,freeze_verified\n" << std::setprecision(10);
    for (FilterInit init : cfg.ablation_inits) {
      note("filter init: " + to_string(init));
      auto model = build<Real>(cfg.family, family_mode(cfg), init, base_width(), train_set);
      const TrainReport report = classify(*model, train_set, test_set, to_string(init));
      csv << to_string(init) << ',' << to_string(family_mode(cfg)) << ',' << report.final_metric() << ','
          << report.trainable_params << ',' << report.total_params << ',' << (report.freeze_verified ? 1 : 0)
          << '\n';
    }
    result.metric = std::numeric_limits<double>::quiet_NaN();
  }

  template <typename Real>
  void run_width_sweep() {
    const auto [train_set, test_set] = load_datasets(cfg.data);
    std::ofstream csv(artifact("sweep.csv"));
    csv << "width,mode,accuracy,trainable_params,total_params,freeze_verified\n" << std::setprecision(10);
    for (std::size_t width : cfg.sweep_widths)
      for (MixingMode mode : {MixingMode::Full, MixingMode::ChannelsOnly}) {
        note("width " + std::to_string(width) + " mode " + to_string(mode));
        auto model = build<Real>(cfg.family, mode, family_init(cfg), width, train_set);
        const TrainReport report =
            classify(*model, train_set, test_set, "w" + std::to_string(width) + "_" + to_string(mode));
        csv << width << ',' << to_string(mode) << ',' << report.final_metric() << ',' << report.trainable_params
            << ',' << report.total_params << ',' << (report.freeze_verified ? 1 : 0) << '\n';
      }
    result.metric = std::numeric_limits<double>::quiet_NaN();
  }

  template <typename Real>
  void run() {
    switch (cfg.kind) {
      case ExperimentKind::Classify: run_classify<Real>(); break;
      case ExperimentKind::Unshuffle: run_unshuffle<Real>(); break;
      case ExperimentKind::Robustness: run_robustness<Real>(); break;
      case ExperimentKind::Envelope: run_envelope<Real>(); break;
      case ExperimentKind::FilterAblation: run_filter_ablation<Real>(); break;
      case ExperimentKind::WidthSweep: run_width_sweep<Real>(); break;
    }
  }
};

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.check_inputs();
  std::filesystem::create_directories(cfg.output);
  Runner runner{cfg, log, {}};
  runner.result.output = cfg.output;
  cfg.source.save(runner.artifact("config.txt"));
  cfg.resolved().save(runner.artifact("resolved.txt"));
  if (cfg.precision == Precision::Double) {
    runner.run<double>();
  } else {
    runner.run<float>();
  }
  return runner.result;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("no column named " + name);
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != table.header.size())
        throw DataError(path.string() + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(table.header.size()));
      table.rows.push_back(std::move(cells));
    }
  }
  if (first) throw DataError(path.string() + ": empty CSV");
  return table;
}

namespace {

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

bool to_number(const std::string& text, double& value) {
  char* end = nullptr;
  value = std::strtod(text.c_str(), &end);
  return !text.empty() && end == text.c_str() + text.size() && std::isfinite(value);
}

}  // namespace

std::filesystem::path compare_reports(const std::vector<std::filesystem::path>& reports, const std::string& x,
                                      const std::string& y, const std::filesystem::path& svg) {
  if (reports.empty()) throw DataError("compare needs at least one report");
  std::vector<CsvTable> tables;
  for (const auto& path : reports) {
    tables.push_back(read_csv(path));
    if (tables.back().header != tables.front().header)
      throw DataError("header of " + path.string() + " differs from " + reports.front().string());
  }
  const std::size_t xi = tables.front().column(x);
  const std::size_t yi = tables.front().column(y);

  std::vector<std::string> labels;
  std::map<std::string, int> seen;
  for (const auto& path : reports) {
    std::string label = path.parent_path().filename().string();
    label = label.empty() ? path.stem().string() : label + "/" + path.stem().string();
    const int n = ++seen[label];
    labels.push_back(n == 1 ? label : label + "#" + std::to_string(n));
  }

  std::vector<std::string> xs;
  std::map<std::string, std::size_t> x_index;
  for (const auto& t : tables)
    for (const auto& row : t.rows)
      if (x_index.emplace(row[xi], xs.size()).second) xs.push_back(row[xi]);
  std::vector<std::vector<std::string>> merged(xs.size(), std::vector<std::string>(tables.size()));
  for (std::size_t r = 0; r < tables.size(); ++r)
    for (const auto& row : tables[r].rows) merged[x_index[row[xi]]][r] = row[yi];

  auto csv_path = svg;
  csv_path.replace_extension(".csv");
  if (!svg.parent_path().empty()) std::filesystem::create_directories(svg.parent_path());
  {
    std::ofstream csv(csv_path);
    if (!csv) throw DataError("cannot write " + csv_path.string());
    csv << x;
    for (const auto& l : labels) csv << ',' << l;
    csv << '\n';
    for (std::size_t i = 0; i < xs.size(); ++i) {
      csv << xs[i];
      for (const auto& cell : merged[i]) csv << ',' << cell;
      csv << '\n';
    }
  }

  std::vector<std::vector<std::pair<double, double>>> series(tables.size());
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (std::size_t r = 0; r < tables.size(); ++r)
    for (const auto& row : tables[r].rows) {
      double xv, yv;
      if (!to_number(row[xi], xv) || !to_number(row[yi], yv)) continue;
      series[r].emplace_back(xv, yv);
      x0 = std::min(x0, xv), x1 = std::max(x1, xv), y0 = std::min(y0, yv), y1 = std::max(y1, yv);
    }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x0 == x1) x0 -= 0.5, x1 += 0.5;
  if (y0 == y1) y0 -= 0.5, y1 += 0.5;

  constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 160, kTop = 20, kBottom = 40;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return kTop + (1 - (v - y0) / (y1 - y0)) * ph; };
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

  std::ofstream out(svg);
  if (!out) throw DataError("cannot write " + svg.string());
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kLeft << "\" y=\"" << kHeight - 8 << "\">" << x0 << "</text>\n";
  out << "<text x=\"" << kLeft + pw << "\" y=\"" << kHeight - 8 << "\" text-anchor=\"end\">" << x1 << "</text>\n";
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 8 << "\" text-anchor=\"middle\">" << xml_escape(x)
      << "</text>\n";
  out << "<text x=\"" << kLeft - 4 << "\" y=\"" << kTop + ph << "\" text-anchor=\"end\">" << y0 << "</text>\n";
  out << "<text x=\"" << kLeft - 4 << "\" y=\"" << kTop + 10 << "\" text-anchor=\"end\">" << y1 << "</text>\n";
  out << "<text x=\"12\" y=\"" << kTop + ph / 2 << "\" transform=\"rotate(-90 12 " << kTop + ph / 2
      << ")\" text-anchor=\"middle\">" << xml_escape(y) << "</text>\n";
  for (std::size_t r = 0; r < series.size(); ++r) {
    const char* color = kPalette[r % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[r].size(); ++i)
      out << (i ? " " : "") << px(series[r][i].first) << ',' << py(series[r][i].second);
    out << "\"/>\n";
    const double ly = kTop + 14 * static_cast<double>(r + 1);
    out << "<line x1=\"" << kLeft + pw + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kLeft + pw + 30 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    out << "<text x=\"" << kLeft + pw + 34 << "\" y=\"" << ly << "\">" << xml_escape(labels[r]) << "</text>\n";
  }
  out << "</svg>\n";
  return csv_path;
}

}  // namespace mixbench
