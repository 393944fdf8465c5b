#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mixbench/adversarial.hpp"
#include "mixbench/errors.hpp"
#include "mixbench/training.hpp"
#include "testkit.hpp"

using namespace mixbench;

namespace {

// logits = W * x for inputs shaped [N, F, 1, 1].
template <typename Real>
class LinearProbe final : public Model<Real> {
 public:
  LinearProbe(std::size_t features, std::size_t classes, std::uint64_t seed) : Model<Real>(MixingMode::Full) {
    SplitMix64 rng(seed);
    weight_ = &this->params_.add("probe", ParamKind::Channel, MixingMode::Full,
                                 {{"weight", uniform_tensor<Real>({classes, features}, 1.0, rng)}})
                   .tensors[0];
  }
  Var<Real> forward(const Var<Real>& x, bool) override {
    return linear(global_avg_pool(x), x.tape().leaf(*weight_));
  }
  std::string family() const override { return "probe"; }
  std::vector<std::pair<std::string, std::string>> describe() const override { return {}; }
  std::size_t layer_count() const override { return 1; }
  std::vector<std::pair<std::string, RunningStats<Real>*>> running_stats() override { return {}; }
  const Tensor<Real>& weight() const { return *weight_; }

 private:
  Tensor<Real>* weight_ = nullptr;
};

template <typename Real>
Tensor<Real> uniform_inputs(std::size_t n, std::size_t f, double lo, double hi, SplitMix64& rng) {
  Tensor<Real> x({n, f, 1, 1});
  for (auto& v : x.data()) v = static_cast<Real>(rng.uniform(lo, hi));
  return x;
}

std::vector<std::int32_t> random_labels(std::size_t n, std::size_t classes, SplitMix64& rng) {
  std::vector<std::int32_t> y(n);
  for (auto& v : y) v = static_cast<std::int32_t>(rng.below(classes));
  return y;
}

template <typename Real>
double linf(const Tensor<Real>& a, const Tensor<Real>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST(InputGradient, MatchesSoftmaxOracleAndPreservesParamGrads) {
  LinearProbe<double> model(5, 3, 60);
  SplitMix64 rng(60);
  const auto x = uniform_inputs<double>(4, 5, 0, 1, rng);
  const auto y = random_labels(4, 3, rng);
  auto& w = model.params()[0].tensors[0];
  w.grad()[0] = 42.0;
  const auto g = input_gradient(model, x, y);
  EXPECT_EQ(w.grad()[0], 42.0);
  for (std::size_t n = 0; n < 4; ++n) {
    double logits[3] = {0, 0, 0};
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t f = 0; f < 5; ++f) logits[c] += w[c * 5 + f] * x[n * 5 + f];
    const double mx = std::max({logits[0], logits[1], logits[2]});
    double z = 0, p[3];
    for (std::size_t c = 0; c < 3; ++c) z += p[c] = std::exp(logits[c] - mx);
    for (double& v : p) v /= z;
    for (std::size_t f = 0; f < 5; ++f) {
      double expected = 0;
      for (std::size_t c = 0; c < 3; ++c) expected += (p[c] - (static_cast<std::int32_t>(c) == y[n])) * w[c * 5 + f];
      EXPECT_NEAR(g[n * 5 + f], expected / 4.0, 1e-12);
    }
  }
}

TEST(Fgsm, ZeroEpsilonIsBitExact) {
  LinearProbe<float> model(6, 4, 61);
  SplitMix64 rng(61);
  const auto x = uniform_inputs<float>(10, 6, 0, 1, rng);
  const auto y = random_labels(10, 4, rng);
  AttackConfig cfg;
  EXPECT_EQ(fgsm(model, x, y, cfg), x);
  cfg.iterations = 5;
  EXPECT_EQ(pgd(model, x, y, cfg), x);
}

TEST(Fgsm, StepsAlongWeightDifferenceForBinaryLinearModel) {
  LinearProbe<double> model(8, 2, 62);
  const auto& w = model.weight();
  Tensor<double> x({1, 8, 1, 1}, 0.5);
  const std::vector<std::int32_t> y{0};
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  const auto adv = fgsm(model, x, y, cfg);
  for (std::size_t f = 0; f < 8; ++f) {
    const double d = w[8 + f] - w[f];
    EXPECT_DOUBLE_EQ(adv[f], 0.5 + (d > 0 ? 0.1 : -0.1)) << f;
  }
  EXPECT_GT(batch_loss<double>(model, adv, y, nullptr), batch_loss<double>(model, x, y, nullptr));
}

TEST(Attacks, StayInsideEpsilonBallAndClampRange) {
  LinearProbe<float> model(16, 10, 63);
  SplitMix64 rng(63);
  const auto x = uniform_inputs<float>(1000, 16, 0, 1, rng);
  const auto y = random_labels(1000, 10, rng);
  for (double eps : {1.0 / 255, 8.0 / 255, 0.1, 0.3}) {
    AttackConfig cfg;
    cfg.epsilon = eps;
    const auto f = fgsm(model, x, y, cfg);
    EXPECT_LE(linf(f, x), eps);
    for (std::size_t t = 1; t <= 5; ++t) {
      cfg.iterations = t;
      const auto p = pgd(model, x, y, cfg);
      EXPECT_LE(linf(p, x), eps) << "pgd iterations " << t;
      for (float v : p.data()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    }
    for (float v : f.data()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Pgd, OneIterationWithFullStepIsFgsm) {
  LinearProbe<float> model(12, 5, 64);
  SplitMix64 rng(64);
  const auto x = uniform_inputs<float>(50, 12, 0, 1, rng);
  const auto y = random_labels(50, 5, rng);
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.step_size = 0.05;
  EXPECT_EQ(pgd(model, x, y, cfg), fgsm(model, x, y, cfg));
  EXPECT_EQ(attack(model, x, y, cfg), fgsm(model, x, y, cfg));
}

TEST(Pgd, OversizedStepIsProjectedToTheBoundary) {
  LinearProbe<double> model(6, 2, 65);
  Tensor<double> x({1, 6, 1, 1}, 0.5);
  const std::vector<std::int32_t> y{1};
  AttackConfig cfg;
  cfg.epsilon = 0.02;
  cfg.step_size = 0.2;
  cfg.iterations = 3;
  const auto adv = pgd(model, x, y, cfg);
  for (std::size_t f = 0; f < 6; ++f) EXPECT_NEAR(std::abs(adv[f] - 0.5), 0.02, 1e-15);
}

TEST(ProjectLinf, ClipsToBallAndRange) {
  std::vector<float> x{0.0f, 1.0f, 0.5f, 0.3f};
  std::vector<float> c{-0.5f, 1.5f, 0.9f, 0.31f};
  project_linf<float>(c, x, 0.1, 0.0, 1.0);
  EXPECT_EQ(c[0], 0.0f);
  EXPECT_EQ(c[1], 1.0f);
  EXPECT_LE(c[2] - x[2], 0.1f);
  EXPECT_GT(c[2], 0.59f);
  EXPECT_EQ(c[3], 0.31f);
}

TEST(AttackConfig, Validation) {
  AttackConfig cfg;
  cfg.epsilon = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = AttackConfig{};
  cfg.iterations = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = AttackConfig{};
  cfg.epsilon = 0.1;
  EXPECT_DOUBLE_EQ(cfg.effective_step(), 0.1);
  cfg.iterations = 4;
  EXPECT_DOUBLE_EQ(cfg.effective_step(), 0.05);
  EXPECT_EQ(parse_attack_kind("pgd"), AttackKind::Pgd);
  EXPECT_THROW(parse_attack_kind("cw"), std::invalid_argument);
}

TEST(Robustness, BinaryLinearCurveIsMonotoneAndStartsClean) {
  LinearProbe<float> model(20, 2, 66);
  SplitMix64 rng(66);
  Dataset data;
  data.images = uniform_inputs<float>(300, 20, 0.2, 0.8, rng);
  data.labels = random_labels(300, 2, rng);
  const std::vector<double> eps{0.0, 0.01, 0.02, 0.05, 0.1};
  for (auto kind : {AttackKind::Fgsm, AttackKind::Pgd}) {
    const auto rows = robustness_curve(model, data, eps, kind, 3);
    ASSERT_EQ(rows.size(), eps.size());
    EXPECT_EQ(rows[0].accuracy, rows[0].clean_accuracy);
    EXPECT_EQ(rows[0].clean_accuracy, evaluate(model, data, Task::Classify));
    EXPECT_EQ(rows[1].attack, kind == AttackKind::Fgsm ? "fgsm" : "pgd-3");
    EXPECT_EQ(rows[1].model_mode, "full");
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(rows[i].accuracy, rows[i - 1].accuracy);
    EXPECT_LT(rows.back().accuracy, rows.front().accuracy);
  }
  const std::vector<double> bad{0.01, 0.02};
  EXPECT_THROW(robustness_curve(model, data, bad, AttackKind::Fgsm), ConfigError);
}

TEST(Robustness, RelativeImprovementAndCsv) {
  std::vector<RobustnessRow> random{{0.0, 80, 80, "fgsm", "full"}, {0.1, 20, 80, "fgsm", "full"}};
  std::vector<RobustnessRow> smooth{{0.0, 80, 80, "fgsm", "full"}, {0.1, 30, 80, "fgsm", "full"}};
  const auto rel = relative_improvement(smooth, random);
  EXPECT_DOUBLE_EQ(rel[0], 0.0);
  EXPECT_DOUBLE_EQ(rel[1], 0.5);
  smooth.pop_back();
  EXPECT_THROW(relative_improvement(smooth, random), std::invalid_argument);

  const auto path = std::filesystem::temp_directory_path() / "mixbench_robustness_test.csv";
  write_robustness_csv(random, path);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  std::getline(in, row);
  EXPECT_EQ(header, "epsilon,accuracy,clean_accuracy,attack,model_mode");
  EXPECT_EQ(row, "0.1,20,80,fgsm,full");
  std::filesystem::remove(path);
}

TEST(Attacks, ConvolutionalModelLosesAccuracyUnderAttack) {
  ConvMixerConfig cfg;
  cfg.width = 8;
  cfg.depth = 1;
  cfg.kernel = 3;
  cfg.in_channels = 1;
  cfg.num_classes = 3;
  auto model = build_convmixer<double>(cfg, 67);
  SplitMix64 rng(67);
  Tensor<double> x({16, 1, 6, 6});
  for (auto& v : x.data()) v = rng.uniform(0.1, 0.9);
  std::vector<std::int32_t> y(16);
  // Label each sample with the model's own prediction so clean accuracy is 100%.
  {
    Tape<double> tape;
    const auto logits = model->forward(tape.constant(x), false).value();
    for (std::size_t i = 0; i < 16; ++i)
      y[i] = static_cast<std::int32_t>(std::max_element(&logits.data()[i * 3], &logits.data()[i * 3 + 3]) - &logits.data()[i * 3]);
  }
  AttackConfig a;
  a.epsilon = 0.5;
  a.iterations = 5;
  const auto adv = pgd(*model, x, y, a);
  EXPECT_GT(batch_loss<double>(*model, adv, y, nullptr), batch_loss<double>(*model, x, y, nullptr));
}
