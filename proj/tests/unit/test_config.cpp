#include <gtest/gtest.h>

#include <cstdlib>

#include "mixbench/config.hpp"
#include "mixbench/errors.hpp"
#include "mixbench/experiment.hpp"

using namespace mixbench;

namespace {

std::string field_of(const std::string& text) {
  try {
    ExperimentConfig::from_keyvalues(KeyValues::parse(text));
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

const char* kClassify =
    "experiment=classify\n"
    "seed=3\n"
    "output=/tmp/out\n"
    "data.format=cifar10\n"
    "data.root=/data/cifar\n";

}  // namespace

TEST(KeyValues, ParsesCommentsBlanksAndWhitespace) {
  const auto kv = KeyValues::parse("# header\n\n  a = 1 \nb=two words\n#c=3\nlist = 1, 2 ,3\n");
  EXPECT_EQ(kv.entries().size(), 3u);
  EXPECT_EQ(kv.get("a"), "1");
  EXPECT_EQ(kv.get("b"), "two words");
  EXPECT_FALSE(kv.has("c"));
  EXPECT_EQ(kv.get_sizes("list"), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(kv.get("missing", "fallback"), "fallback");
}

TEST(KeyValues, ErrorsNameTheKeyOrLine) {
  try {
    KeyValues::parse("a=1\nnot a pair\n", "cfg.txt");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "cfg.txt:2");
  }
  try {
    KeyValues::parse("a=1\na=2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "a");
  }
  const auto kv = KeyValues::parse("x=1.5\nn=-3\nb=maybe\n");
  EXPECT_DOUBLE_EQ(kv.get_double("x"), 1.5);
  EXPECT_THROW(kv.get_size("x"), ConfigError);
  EXPECT_THROW(kv.get_size("n"), ConfigError);
  EXPECT_THROW(kv.get_bool("b", false), ConfigError);
  try {
    kv.get("absent");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "absent");
  }
}

TEST(KeyValues, TracksUnusedKeysAndRoundTrips) {
  auto kv = KeyValues::parse("a=1\nb=2\nc=3\n");
  kv.get("a");
  kv.get_size("c", 0);
  EXPECT_EQ(kv.unused_keys(), std::vector<std::string>{"b"});
  kv.set("d", "4");
  kv.set("a", "9");
  EXPECT_EQ(kv.serialize(), "a=9\nb=2\nc=3\nd=4\n");
  EXPECT_EQ(KeyValues::parse(kv.serialize()).entries(), kv.entries());
  EXPECT_THROW(KeyValues::load("/nonexistent/config.txt"), DataError);
}

TEST(KeyValues, BooleansAndLists) {
  const auto kv = KeyValues::parse("t=true\nf=0\ny=yes\neps=0,0.5,1e-3\n");
  EXPECT_TRUE(kv.get_bool("t", false));
  EXPECT_FALSE(kv.get_bool("f", true));
  EXPECT_TRUE(kv.get_bool("y", false));
  EXPECT_TRUE(kv.get_bool("none", true));
  EXPECT_EQ(kv.get_doubles("eps"), (std::vector<double>{0, 0.5, 1e-3}));
  // Values longer than the small-string buffer.
  const auto long_lists = KeyValues::parse("sizes=1,2,4,8,16,32,64,128,256,512\neps=0,0.00392156862745098,0.0078125\n");
  EXPECT_EQ(long_lists.get_sizes("sizes").back(), 512u);
  EXPECT_EQ(long_lists.get_doubles("eps"), (std::vector<double>{0, 0.00392156862745098, 0.0078125}));
}

TEST(DataPath, ResolvesRelativeAgainstEnvironment) {
  ::setenv("MIXBENCH_DATA_DIR", "/srv/data", 1);
  EXPECT_EQ(resolve_data_path("mnist"), std::filesystem::path("/srv/data/mnist"));
  EXPECT_EQ(resolve_data_path("/abs/mnist"), std::filesystem::path("/abs/mnist"));
  ::unsetenv("MIXBENCH_DATA_DIR");
  EXPECT_EQ(resolve_data_path("mnist"), std::filesystem::path("mnist"));
}

TEST(ExperimentConfig, ClassifyDefaults) {
  const auto cfg = ExperimentConfig::from_keyvalues(KeyValues::parse(kClassify));
  EXPECT_EQ(cfg.kind, ExperimentKind::Classify);
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.family, ModelFamily::ResNet);
  EXPECT_EQ(cfg.resnet.mode, MixingMode::Full);
  EXPECT_EQ(cfg.precision, Precision::Float);
  EXPECT_EQ(cfg.optim.kind, OptimizerKind::SgdMomentum);
  EXPECT_EQ(cfg.optim.shuffle_seed, 3u);
  EXPECT_FALSE(cfg.train_attack.has_value());
  EXPECT_EQ(cfg.data.train_files().size(), 5u);
  EXPECT_EQ(cfg.data.test_files().front().filename(), "test_batch.bin");
}

TEST(ExperimentConfig, FamilySpecificKeys) {
  const auto cfg = ExperimentConfig::from_keyvalues(KeyValues::parse(
      std::string(kClassify) +
      "model.family=convmixer\nmodel.mode=chans\nmodel.width=64\nmodel.kernel=8\nmodel.depth=4\nmodel.patch=1\n"
      "model.init=box\nmodel.smoothing=2\noptim.kind=adam\noptim.lr=0.01\nattack.train=true\nattack.epsilon=0.01\n"));
  EXPECT_EQ(cfg.family, ModelFamily::ConvMixer);
  EXPECT_EQ(cfg.convmixer.mode, MixingMode::ChannelsOnly);
  EXPECT_EQ(cfg.convmixer.width, 64u);
  EXPECT_EQ(cfg.convmixer.init, FilterInit::Box);
  EXPECT_EQ(cfg.convmixer.smoothing, 2u);
  EXPECT_EQ(cfg.optim.kind, OptimizerKind::Adam);
  ASSERT_TRUE(cfg.train_attack.has_value());
  EXPECT_DOUBLE_EQ(cfg.train_attack->epsilon, 0.01);
}

TEST(ExperimentConfig, RejectionsNameTheField) {
  EXPECT_EQ(field_of("seed=1\noutput=o\n"), "experiment");
  EXPECT_EQ(field_of("experiment=classify\noutput=o\ndata.root=r\n"), "seed");
  EXPECT_EQ(field_of("experiment=sing\nseed=1\noutput=o\n"), "experiment");
  EXPECT_EQ(field_of(std::string(kClassify) + "model.widht=3\n"), "model.widht");
  EXPECT_EQ(field_of(std::string(kClassify) + "model.mode=sideways\n"), "model.mode");
  EXPECT_EQ(field_of(std::string(kClassify) + "optim.lr=-1\n"), "optim.lr");
  EXPECT_EQ(field_of(std::string(kClassify) + "optim.batch_size=lots\n"), "optim.batch_size");
  EXPECT_EQ(field_of(std::string(kClassify) + "precision=half\n"), "precision");
  EXPECT_EQ(field_of(std::string(kClassify) + "model.family=unshuffler\n"), "model.family");
  EXPECT_EQ(field_of("experiment=unshuffle\nseed=1\noutput=o\ndata.root=r\nmodel.family=resnet\n"), "model.family");
  EXPECT_EQ(field_of("experiment=robustness\nseed=1\noutput=o\ndata.root=r\nrobustness.epsilons=0.1,0.2\n"),
            "robustness.epsilons");
  EXPECT_EQ(field_of("experiment=envelope\nseed=1\noutput=o\nenvelope.pad=100\n"), "envelope.pad");
  EXPECT_EQ(field_of("experiment=envelope\nseed=1\noutput=o\nenvelope.bank_sizes=1,0\n"), "envelope.bank_sizes");
  // Keys that belong to another experiment are rejected too.
  EXPECT_EQ(field_of(std::string(kClassify) + "permutation.seed=4\n"), "permutation.seed");
}

TEST(ExperimentConfig, ResolvedRoundTrips) {
  const auto cfg = ExperimentConfig::from_keyvalues(
      KeyValues::parse("experiment=robustness\nseed=11\noutput=/tmp/o\ndata.root=/d\nrobustness.epsilons=0,0.01\n"));
  EXPECT_EQ(cfg.attack_kinds, (std::vector<AttackKind>{AttackKind::Fgsm, AttackKind::Pgd}));
  const auto resolved = cfg.resolved();
  EXPECT_TRUE(resolved.has("optim.lr"));
  EXPECT_TRUE(resolved.has("model.n"));
  const auto again = ExperimentConfig::from_keyvalues(KeyValues::parse(resolved.serialize()));
  EXPECT_EQ(again.resolved().serialize(), resolved.serialize());
  EXPECT_EQ(again.epsilons, cfg.epsilons);
  EXPECT_EQ(again.optim.lr, cfg.optim.lr);
}

TEST(ExperimentConfig, UnshuffleAndEnvelopeDefaults) {
  const auto u = ExperimentConfig::from_keyvalues(
      KeyValues::parse("experiment=unshuffle\nseed=5\noutput=o\ndata.root=/mnist\nmodel.mode=chans\n"));
  EXPECT_EQ(u.family, ModelFamily::Unshuffler);
  EXPECT_EQ(u.unshuffler.depth, 8u);
  EXPECT_EQ(u.unshuffler.width, 128u);
  EXPECT_EQ(u.unshuffler.kernel, 7u);
  EXPECT_EQ(u.permutation_seed, 5u);
  EXPECT_EQ(u.optim.kind, OptimizerKind::Adam);
  EXPECT_DOUBLE_EQ(u.optim.lr, 1e-3);

  const auto e = ExperimentConfig::from_keyvalues(KeyValues::parse("experiment=envelope\nseed=5\noutput=o\n"));
  EXPECT_EQ(e.bank_sizes.back(), 64u);
  EXPECT_EQ(e.envelope_pad, 512u);
}

TEST(ExperimentConfig, MissingDatasetNamesThePath) {
  const auto cfg = ExperimentConfig::from_keyvalues(KeyValues::parse(
      "experiment=classify\nseed=1\noutput=o\ndata.format=mnist\ndata.root=/nonexistent/mnist\n"));
  try {
    cfg.check_inputs();
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/mnist/train-images-idx3-ubyte"), std::string::npos) << e.what();
  }
}

TEST(ExperimentConfig, DescriptiveKeysMustMatch) {
  EXPECT_EQ(field_of(std::string(kClassify) + "model.padding=valid\n"), "model.padding");
  EXPECT_EQ(field_of(std::string(kClassify) + "data.normalization=imagenet\n"), "data.normalization");
}
