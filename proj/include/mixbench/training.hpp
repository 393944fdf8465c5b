#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mixbench/adversarial.hpp"
#include "mixbench/data.hpp"
#include "mixbench/models.hpp"

namespace mixbench {

enum class OptimizerKind { SgdMomentum, Adam };
enum class Schedule { Cosine, Step, Constant };
enum class Task { Classify, Reconstruct };

std::string to_string(OptimizerKind kind);
std::string to_string(Schedule schedule);
std::string to_string(Task task);
OptimizerKind parse_optimizer(std::string_view text);
Schedule parse_schedule(std::string_view text);
Task parse_task(std::string_view text);

struct OptimConfig {
  OptimizerKind kind = OptimizerKind::SgdMomentum;
  double lr = 0.05;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 5e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  Schedule schedule = Schedule::Cosine;
  std::size_t step_every = 10;  // epochs between step decays
  double step_gamma = 0.1;
  bool augment = false;
  std::uint64_t shuffle_seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;

  static OptimConfig resnet_default();
  static OptimConfig unshuffler_default();
};

// Learning rate after `step` of `total_steps` optimizer steps.
double scheduled_lr(const OptimConfig& cfg, std::size_t step, std::size_t steps_per_epoch);

// Holds references to the trainable tensors only; frozen groups never enter.
template <typename Real>
class Optimizer {
 public:
  Optimizer(ParameterStore<Real>& store, const OptimConfig& cfg);

  // Applies one update from the accumulated grads, then clears them.
  void step(double lr);
  std::size_t parameter_count() const;
  std::size_t tensor_count() const { return params_.size(); }
  std::size_t steps() const { return steps_; }

 private:
  OptimConfig cfg_;
  std::vector<Tensor<Real>*> params_;
  std::vector<std::vector<Real>> first_;
  std::vector<std::vector<Real>> second_;
  std::size_t steps_ = 0;
};

struct EpochRow {
  std::size_t epoch = 0;
  double train_loss = 0;  // NaN for the initialization row
  double val_metric = 0;
  double wall_seconds = 0;
};

struct TrainReport {
  std::vector<EpochRow> rows;
  std::string metric_kind;  // "accuracy" (percent) or "psnr" (dB)
  std::size_t trainable_params = 0;
  std::size_t total_params = 0;
  bool freeze_verified = false;

  double final_metric() const { return rows.back().val_metric; }
  static std::string csv_header();
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainOptions {
  Task task = Task::Classify;
  const AttackConfig* adversarial = nullptr;  // FGSM applied to every training batch
  const Permutation* permutation = nullptr;   // reconstruct: input = sigma(image)
  std::size_t eval_batch_size = 32;
  std::ostream* log = nullptr;
};

template <typename Real>
TrainReport train(Model<Real>& model, const Dataset& train_set, const Dataset& test_set, const OptimConfig& cfg,
                  const TrainOptions& options = {});

// Top-1 accuracy in percent (classify) or PSNR in dB over the whole set
// (reconstruct). Normalization uses running statistics.
template <typename Real>
double evaluate(Model<Real>& model, const Dataset& data, Task task, const AttackConfig* attack = nullptr,
                const Permutation* permutation = nullptr, std::size_t batch_size = 32);

// Mean loss of one batch in eval mode (no parameter update).
template <typename Real>
double batch_loss(Model<Real>& model, const Tensor<Real>& inputs, std::span<const std::int32_t> labels,
                  const Tensor<Real>* targets);

// Images of `data` at `indices` as a Real tensor.
template <typename Real>
Tensor<Real> batch_images(const Dataset& data, std::span<const std::size_t> indices);

template <typename Real>
std::size_t count_correct(const Tensor<Real>& logits, std::span<const std::int32_t> labels);

}  // namespace mixbench
