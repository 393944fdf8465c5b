#include "mixbench/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mixbench/ops.hpp"

namespace mixbench {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

std::string to_string(Schedule schedule) {
  switch (schedule) {
    case Schedule::Cosine: return "cosine";
    case Schedule::Step: return "step";
    case Schedule::Constant: return "constant";
  }
  return "?";
}

std::string to_string(Task task) { return task == Task::Classify ? "classify" : "reconstruct"; }

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "sgd" || text == "sgd-momentum") return OptimizerKind::SgdMomentum;
  if (text == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer: " + std::string(text));
}

Schedule parse_schedule(std::string_view text) {
  if (text == "cosine") return Schedule::Cosine;
  if (text == "step") return Schedule::Step;
  if (text == "constant") return Schedule::Constant;
  throw std::invalid_argument("unknown schedule: " + std::string(text));
}

Task parse_task(std::string_view text) {
  if (text == "classify") return Task::Classify;
  if (text == "reconstruct") return Task::Reconstruct;
  throw std::invalid_argument("unknown task: " + std::string(text));
}

void OptimConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("optim.lr", "must be > 0");
  if (batch_size < 1) throw ConfigError("optim.batch_size", "must be >= 1");
  if (momentum < 0 || momentum >= 1) throw ConfigError("optim.momentum", "must be in [0, 1)");
  if (beta1 < 0 || beta1 >= 1) throw ConfigError("optim.beta1", "must be in [0, 1)");
  if (beta2 < 0 || beta2 >= 1) throw ConfigError("optim.beta2", "must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("optim.weight_decay", "must be >= 0");
  if (schedule == Schedule::Step && step_every < 1) throw ConfigError("optim.step_every", "must be >= 1");
}

OptimConfig OptimConfig::resnet_default() { return OptimConfig{}; }

OptimConfig OptimConfig::unshuffler_default() {
  OptimConfig cfg;
  cfg.kind = OptimizerKind::Adam;
  cfg.lr = 1e-3;
  cfg.weight_decay = 0;
  cfg.schedule = Schedule::Constant;
  cfg.batch_size = 32;
  return cfg;
}

double scheduled_lr(const OptimConfig& cfg, std::size_t step, std::size_t steps_per_epoch) {
  const std::size_t total = std::max<std::size_t>(1, cfg.epochs * steps_per_epoch);
  switch (cfg.schedule) {
    case Schedule::Cosine:
      return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
    case Schedule::Step:
      return cfg.lr * std::pow(cfg.step_gamma, static_cast<double>(step / (cfg.step_every * std::max<std::size_t>(1, steps_per_epoch))));
    case Schedule::Constant:
      return cfg.lr;
  }
  return cfg.lr;
}

template <typename Real>
Optimizer<Real>::Optimizer(ParameterStore<Real>& store, const OptimConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t g = 0; g < store.size(); ++g) {
    if (!store[g].trainable) continue;
    for (auto& t : store[g].tensors) {
      params_.push_back(&t);
      first_.emplace_back(t.numel(), Real(0));
      if (cfg_.kind == OptimizerKind::Adam) second_.emplace_back(t.numel(), Real(0));
    }
  }
}

template <typename Real>
std::size_t Optimizer<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params_) n += p->numel();
  return n;
}

template <typename Real>
void Optimizer<Real>::step(double lr) {
  ++steps_;
  const Real wd = static_cast<Real>(cfg_.weight_decay);
  const Real rate = static_cast<Real>(lr);
  if (cfg_.kind == OptimizerKind::SgdMomentum) {
    const Real mu = static_cast<Real>(cfg_.momentum);
    for (std::size_t p = 0; p < params_.size(); ++p) {
      Tensor<Real>& t = *params_[p];
      if (!t.has_grad()) continue;
      auto w = t.data();
      auto g = t.grad();
      auto& v = first_[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = mu * v[i] + g[i] + wd * w[i];
        w[i] -= rate * v[i];
      }
      t.zero_grad();
    }
    return;
  }
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const Real c1 = static_cast<Real>(1.0 / (1.0 - std::pow(b1, static_cast<double>(steps_))));
  const Real c2 = static_cast<Real>(1.0 / (1.0 - std::pow(b2, static_cast<double>(steps_))));
  const Real rb1 = static_cast<Real>(b1), rb2 = static_cast<Real>(b2), eps = static_cast<Real>(cfg_.adam_eps);
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor<Real>& t = *params_[p];
    if (!t.has_grad()) continue;
    auto w = t.data();
    auto g = t.grad();
    auto& m = first_[p];
    auto& s = second_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Real gi = g[i] + wd * w[i];
      m[i] = rb1 * m[i] + (Real(1) - rb1) * gi;
      s[i] = rb2 * s[i] + (Real(1) - rb2) * gi * gi;
      w[i] -= rate * (m[i] * c1) / (std::sqrt(s[i] * c2) + eps);
    }
    t.zero_grad();
  }
}

std::string TrainReport::csv_header() {
  return "epoch,train_loss,val_metric,metric_kind,wall_seconds,trainable_params,total_params,freeze_verified";
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << csv_header() << '\n' << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.epoch << ',';
    if (std::isnan(r.train_loss)) {
      out << "nan";
    } else {
      out << r.train_loss;
    }
    out << ',' << r.val_metric << ',' << metric_kind << ',' << r.wall_seconds << ',' << trainable_params << ','
        << total_params << ',' << (freeze_verified ? "true" : "false") << '\n';
  }
}

template <typename Real>
Tensor<Real> batch_images(const Dataset& data, std::span<const std::size_t> indices) {
  const std::size_t per = data.channels() * data.height() * data.width();
  Tensor<Real> out({indices.size(), data.channels(), data.height(), data.width()});
  const auto src = data.images.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < indices.size(); ++i)
    for (std::size_t j = 0; j < per; ++j) dst[i * per + j] = static_cast<Real>(src[indices[i] * per + j]);
  return out;
}

template <typename Real>
std::size_t count_correct(const Tensor<Real>& logits, std::span<const std::int32_t> labels) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (logits[i * c + j] > logits[i * c + best]) best = j;
    if (static_cast<std::int32_t>(best) == labels[i]) ++correct;
  }
  return correct;
}

template <typename Real>
double batch_loss(Model<Real>& model, const Tensor<Real>& inputs, std::span<const std::int32_t> labels,
                  const Tensor<Real>* targets) {
  Tape<Real> tape;
  Var<Real> out = model.forward(tape.constant(inputs), false);
  Var<Real> loss = targets ? mse(out, tape.constant(*targets)) : cross_entropy(out, labels);
  return static_cast<double>(loss.value().item());
}

template <typename Real>
double evaluate(Model<Real>& model, const Dataset& data, Task task, const AttackConfig* attack_cfg,
                const Permutation* permutation, std::size_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate on an empty dataset");
  std::size_t correct = 0;
  double squared_error = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - begin);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), begin);
    Tensor<Real> images = batch_images<Real>(data, idx);
    const std::span<const std::int32_t> labels(data.labels.data() + begin, count);
    if (task == Task::Classify) {
      if (attack_cfg) images = attack(model, images, labels, *attack_cfg);
      Tape<Real> tape;
      correct += count_correct(model.forward(tape.constant(images), false).value(), labels);
    } else {
      Tensor<Real> inputs = permutation ? apply_permutation(images, *permutation) : images;
      Tape<Real> tape;
      const Tensor<Real>& recon = model.forward(tape.constant(inputs), false).value();
      for (std::size_t i = 0; i < images.numel(); ++i) {
        const double d = static_cast<double>(images[i]) - static_cast<double>(recon[i]);
        squared_error += d * d;
      }
    }
  }
  if (task == Task::Classify) return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
  const double mse_value = squared_error / static_cast<double>(data.images.numel());
  if (mse_value == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse_value);
}

template <typename Real>
TrainReport train(Model<Real>& model, const Dataset& train_set, const Dataset& test_set, const OptimConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("training set is empty");
  if (options.adversarial) options.adversarial->validate();
  const bool reconstruct = options.task == Task::Reconstruct;
  Optimizer<Real> optimizer(model.params(), cfg);
  TrainReport report;
  report.metric_kind = reconstruct ? "psnr" : "accuracy";
  report.total_params = model.params().total_params();
  report.trainable_params = model.params().trainable_params();

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  auto metric = [&] {
    return evaluate(model, test_set, options.task, nullptr, options.permutation, options.eval_batch_size);
  };
  report.rows.push_back({0, std::numeric_limits<double>::quiet_NaN(), metric(), elapsed()});
  if (options.log) *options.log << "epoch 0 " << report.metric_kind << ' ' << report.rows.back().val_metric << '\n';

  SplitMix64 order_rng(cfg.shuffle_seed);
  SplitMix64 augment_rng(cfg.shuffle_seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  const std::size_t steps_per_epoch = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> order(train_set.size());
  std::size_t global_step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[order_rng.below(i + 1)]);
    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++global_step) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t count = std::min(cfg.batch_size, order.size() - begin);
      const std::span<const std::size_t> idx(order.data() + begin, count);
      std::vector<std::int32_t> labels(count);
      for (std::size_t i = 0; i < count; ++i) labels[i] = train_set.labels[idx[i]];
      Tensor<Real> images = batch_images<Real>(train_set, idx);
      if (cfg.augment && !reconstruct) {
        Tensor<float> aug = images.template cast<float>();
        augment_flip_crop(aug, augment_rng);
        images = aug.template cast<Real>();
      }
      if (options.adversarial && !reconstruct) images = fgsm(model, images, labels, *options.adversarial);
      const double lr = scheduled_lr(cfg, global_step, steps_per_epoch);
      Tape<Real> tape;
      Var<Real> loss;
      if (reconstruct) {
        Tensor<Real> inputs = options.permutation ? apply_permutation(images, *options.permutation) : images;
        Var<Real> out = model.forward(tape.constant(std::move(inputs)), true);
        loss = mse(out, tape.constant(images));
      } else {
        loss = cross_entropy(model.forward(tape.constant(images), true), labels);
      }
      const double value = static_cast<double>(loss.value().item());
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " batch " << b << " (lr=" << lr << ")";
        throw NumericError(msg.str());
      }
      tape.backward(loss);
      optimizer.step(lr);
      loss_sum += value * static_cast<double>(count);
      seen += count;
    }
    report.rows.push_back({epoch, loss_sum / static_cast<double>(seen), metric(), elapsed()});
    if (options.log) {
      *options.log << "epoch " << epoch << " loss " << report.rows.back().train_loss << ' ' << report.metric_kind << ' '
                   << report.rows.back().val_metric << " (" << report.rows.back().wall_seconds << "s)\n";
    }
  }
  report.freeze_verified = model.params().verify_frozen();
  return report;
}

template class Optimizer<float>;
template class Optimizer<double>;

#define MIXBENCH_INSTANTIATE(Real)                                                                             \
  template Tensor<Real> batch_images<Real>(const Dataset&, std::span<const std::size_t>);                     \
  template std::size_t count_correct(const Tensor<Real>&, std::span<const std::int32_t>);                     \
  template double batch_loss(Model<Real>&, const Tensor<Real>&, std::span<const std::int32_t>,                \
                             const Tensor<Real>*);                                                            \
  template double evaluate(Model<Real>&, const Dataset&, Task, const AttackConfig*, const Permutation*,       \
                           std::size_t);                                                                      \
  template TrainReport train(Model<Real>&, const Dataset&, const Dataset&, const OptimConfig&,                \
                             const TrainOptions&);

MIXBENCH_INSTANTIATE(float)
MIXBENCH_INSTANTIATE(double)
#undef MIXBENCH_INSTANTIATE

}  // namespace mixbench
