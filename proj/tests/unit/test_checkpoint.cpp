#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mixbench/checkpoint.hpp"
#include "mixbench/errors.hpp"
#include "testkit.hpp"

using namespace mixbench;
namespace fs = std::filesystem;

namespace {

ConvMixerConfig small_mixer(MixingMode mode) {
  ConvMixerConfig cfg;
  cfg.width = 6;
  cfg.depth = 2;
  cfg.kernel = 3;
  cfg.patch = 2;
  cfg.mode = mode;
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mixbench_ckpt_" + name);
  fs::remove_all(dir);
  return dir;
}

Tensor<float> eval_logits(Model<float>& model, const Tensor<float>& x) {
  Tape<float> tape;
  return model.forward(tape.constant(x), false).value();
}

}  // namespace

TEST(Checkpoint, RoundTripRestoresParametersAndStatistics) {
  const auto dir = scratch_dir("roundtrip");
  auto model = build_convmixer<float>(small_mixer(MixingMode::ChannelsOnly), 80);
  SplitMix64 rng(80);
  Tensor<float> x({4, 3, 8, 8});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(0, 1));
  {
    Tape<float> tape;
    model->forward(tape.constant(x), true);  // moves the running statistics
  }
  auto& pw = model->params().find("block0.pointwise")->tensors[0];
  pw[0] += 0.25f;  // a trained group drifting from init is fine
  const auto manifest = save_checkpoint(*model, dir);
  EXPECT_TRUE(fs::exists(manifest));

  auto fresh = build_convmixer<float>(small_mixer(MixingMode::ChannelsOnly), 999);
  load_checkpoint(*fresh, manifest);
  for (std::size_t g = 0; g < model->params().size(); ++g)
    EXPECT_EQ(fresh->params()[g].current_checksum(), model->params()[g].current_checksum()) << model->params()[g].name;
  const auto a = model->running_stats(), b = fresh->running_stats();
  for (std::size_t s = 0; s < a.size(); ++s) {
    EXPECT_EQ(a[s].second->mean, b[s].second->mean);
    EXPECT_EQ(a[s].second->var, b[s].second->var);
  }
  EXPECT_EQ(eval_logits(*fresh, x), eval_logits(*model, x));
  EXPECT_TRUE(fresh->params().verify_frozen());
  fs::remove_all(dir);
}

TEST(Checkpoint, InspectSummarizesAndVerifies) {
  const auto dir = scratch_dir("inspect");
  auto model = build_convmixer<float>(small_mixer(MixingMode::ChannelsOnly), 81);
  const auto manifest = save_checkpoint(*model, dir);
  const auto summary = inspect_checkpoint(manifest);
  EXPECT_TRUE(summary.ok());
  EXPECT_EQ(summary.total_params, model->params().total_params());
  EXPECT_EQ(summary.trainable_params, model->params().trainable_params());
  EXPECT_EQ(summary.groups.size(), model->params().size());
  bool saw_family = false;
  for (const auto& [k, v] : summary.model) saw_family |= k == "family" && v == "convmixer";
  EXPECT_TRUE(saw_family);
  for (const auto& g : summary.groups) EXPECT_TRUE(g.frozen_intact()) << g.name;
  fs::remove_all(dir);
}

TEST(Checkpoint, InspectFlagsMovedFrozenGroup) {
  const auto dir = scratch_dir("moved");
  auto model = build_convmixer<float>(small_mixer(MixingMode::ChannelsOnly), 82);
  model->params().find("block1.depthwise")->tensors[0][3] += 1.0f;
  const auto summary = inspect_checkpoint(save_checkpoint(*model, dir));
  EXPECT_FALSE(summary.ok());
  for (const auto& g : summary.groups) EXPECT_EQ(g.frozen_intact(), g.name != "block1.depthwise") << g.name;
  fs::remove_all(dir);
}

TEST(Checkpoint, CorruptTensorFileIsDetected) {
  const auto dir = scratch_dir("corrupt");
  auto model = build_convmixer<float>(small_mixer(MixingMode::Full), 83);
  const auto manifest = save_checkpoint(*model, dir);
  const auto file = dir / "tensors" / "block0.pointwise.weight.mxt";
  ASSERT_TRUE(fs::exists(file));
  {
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(fs::file_size(file)) - 2);
    f.put('\x7f');
  }
  const auto summary = inspect_checkpoint(manifest);
  EXPECT_FALSE(summary.ok());
  std::size_t bad = 0;
  for (const auto& t : summary.tensors) bad += !t.checksum_ok;
  EXPECT_EQ(bad, 1u);
  auto fresh = build_convmixer<float>(small_mixer(MixingMode::Full), 83);
  EXPECT_THROW(load_checkpoint(*fresh, manifest), DataError);

  fs::resize_file(file, 10);
  EXPECT_THROW(inspect_checkpoint(manifest), DataError);
  fs::remove_all(dir);
}

TEST(Checkpoint, ArchitectureMismatchAndBadManifest) {
  const auto dir = scratch_dir("mismatch");
  auto model = build_convmixer<float>(small_mixer(MixingMode::Full), 84);
  const auto manifest = save_checkpoint(*model, dir);
  auto wider_cfg = small_mixer(MixingMode::Full);
  wider_cfg.width = 8;
  auto wider = build_convmixer<float>(wider_cfg, 84);
  EXPECT_THROW(load_checkpoint(*wider, manifest), DataError);
  auto deeper_cfg = small_mixer(MixingMode::Full);
  deeper_cfg.depth = 1;
  auto shallower = build_convmixer<float>(deeper_cfg, 84);
  EXPECT_THROW(load_checkpoint(*shallower, manifest), DataError);

  std::ofstream(dir / "bogus.txt") << "format=something-else\n";
  EXPECT_THROW(inspect_checkpoint(dir / "bogus.txt"), DataError);
  EXPECT_THROW(inspect_checkpoint(dir / "absent.txt"), DataError);
  fs::remove_all(dir);
}

TEST(Checkpoint, DoubleModelsStoreSinglePrecision) {
  const auto dir = scratch_dir("double");
  ResNetConfig cfg;
  cfg.base_width = 4;
  auto model = build_separable_resnet<double>(cfg, 85);
  const auto manifest = save_checkpoint(*model, dir);
  auto fresh = build_separable_resnet<double>(cfg, 86);
  load_checkpoint(*fresh, manifest);
  for (std::size_t g = 0; g < model->params().size(); ++g) {
    const auto& a = model->params()[g].tensors[0];
    const auto& b = fresh->params()[g].tensors[0];
    for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(b[i], static_cast<double>(static_cast<float>(a[i])));
  }
  EXPECT_TRUE(fresh->params().verify_frozen());
  fs::remove_all(dir);
}
