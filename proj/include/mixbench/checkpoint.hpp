#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mixbench/models.hpp"

namespace mixbench {

// A checkpoint is a directory holding manifest.txt (key=value) and one MXT1
// file per tensor. Manifest keys:
//   format=mixbench-checkpoint-1
//   groups=<name>,<name>,...  stats=<name>,...   (names may contain dots)
//   model.<key>=<value>                     from Model::describe()
//   group.<name>.kind / .trainable / .init_checksum / .checksum
//   group.<name>.tensor.<tensor>=<file>
//   group.<name>.tensor.<tensor>.file_checksum=<fnv1a of the stored f32 data>
//   stats.<name>.mean=<file>, stats.<name>.var=<file>
// Checksums are 16 hex digits of 64-bit FNV-1a.
template <typename Real>
std::filesystem::path save_checkpoint(Model<Real>& model, const std::filesystem::path& dir);

// Overwrites the parameters and running statistics of a freshly built model
// of the same architecture, then reseals every group. Throws DataError on a
// missing group, shape mismatch or corrupted tensor file.
template <typename Real>
void load_checkpoint(Model<Real>& model, const std::filesystem::path& manifest);

struct CheckpointTensor {
  std::string group;
  std::string tensor;
  std::string file;
  Shape shape;
  bool checksum_ok = false;
};

struct CheckpointGroup {
  std::string name;
  std::string kind;
  bool trainable = false;
  std::string init_checksum;
  std::string checksum;
  // Frozen groups must still match their initialization.
  bool frozen_intact() const { return trainable || init_checksum == checksum; }
};

struct CheckpointSummary {
  std::vector<std::pair<std::string, std::string>> model;
  std::vector<CheckpointGroup> groups;
  std::vector<CheckpointTensor> tensors;
  std::size_t total_params = 0;
  std::size_t trainable_params = 0;

  bool ok() const;
};

// Reads every tensor file and verifies its stored checksum.
CheckpointSummary inspect_checkpoint(const std::filesystem::path& manifest);

}  // namespace mixbench
