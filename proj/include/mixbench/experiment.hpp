#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mixbench/adversarial.hpp"
#include "mixbench/config.hpp"
#include "mixbench/data.hpp"
#include "mixbench/models.hpp"
#include "mixbench/training.hpp"

namespace mixbench {

enum class ExperimentKind { Classify, Unshuffle, Robustness, Envelope, FilterAblation, WidthSweep };
enum class ModelFamily { ResNet, ConvMixer, Unshuffler };
enum class Precision { Float, Double };

std::string to_string(ExperimentKind kind);
std::string to_string(ModelFamily family);
ExperimentKind parse_experiment_kind(std::string_view text);
ModelFamily parse_model_family(std::string_view text);

// data.format=mnist reads {train,t10k}-{images-idx3,labels-idx1}-ubyte from
// data.root; data.format=cifar10 reads data_batch_{1..5}.bin and
// test_batch.bin. Limits keep the first N samples (0 = all).
struct DataConfig {
  std::string format = "mnist";
  std::filesystem::path root;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;

  std::vector<std::filesystem::path> train_files() const;
  std::vector<std::filesystem::path> test_files() const;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Classify;
  std::uint64_t seed = 0;
  std::filesystem::path output;
  Precision precision = Precision::Float;

  ModelFamily family = ModelFamily::ResNet;
  ResNetConfig resnet;
  ConvMixerConfig convmixer;
  UnshufflerConfig unshuffler;

  DataConfig data;
  OptimConfig optim;
  std::optional<AttackConfig> train_attack;  // FGSM-defended training when set

  std::vector<double> epsilons{0.0};
  std::vector<AttackKind> attack_kinds{AttackKind::Fgsm};
  std::size_t pgd_iterations = 2;

  std::uint64_t permutation_seed = 0;
  std::size_t image_grid_count = 8;

  std::vector<std::size_t> bank_sizes{1, 2, 4, 8, 16, 32, 64};
  std::size_t envelope_pad = 512;

  std::vector<std::size_t> sweep_widths{8, 16, 32};
  std::vector<FilterInit> ablation_inits{FilterInit::RandomIndependent, FilterInit::RandomShared, FilterInit::Box,
                                         FilterInit::Identity};

  KeyValues source;

  // Throws ConfigError naming the first bad or unknown key.
  static ExperimentConfig from_keyvalues(const KeyValues& kv);
  static ExperimentConfig load(const std::filesystem::path& path);
  // Every effective setting, defaults included.
  KeyValues resolved() const;
  // Throws DataError naming the first referenced file that does not exist.
  void check_inputs() const;
};

struct RunResult {
  std::filesystem::path output;
  std::vector<std::filesystem::path> artifacts;
  double metric = 0;  // final accuracy / PSNR of the main run, NaN if none
};

// Executes one experiment and writes its artifacts into cfg.output.
RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

// Loads the train and test sets of a config, applying the limits.
std::pair<Dataset, Dataset> load_datasets(const DataConfig& data);

// Images [N,C,H,W] tiled `columns` wide with a 1-pixel gap; PGM for one
// channel, PPM for three. Values are clamped to [0,1].
void save_image_grid(const Tensor<float>& images, std::size_t columns, const std::filesystem::path& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws DataError if absent
};

CsvTable read_csv(const std::filesystem::path& path);

// Merges the y column of every report against the shared x column into a
// wide CSV (written next to `svg` with a .csv extension) and draws one
// polyline per report. Reports must share an identical header.
std::filesystem::path compare_reports(const std::vector<std::filesystem::path>& reports, const std::string& x,
                                      const std::string& y, const std::filesystem::path& svg);

}  // namespace mixbench
