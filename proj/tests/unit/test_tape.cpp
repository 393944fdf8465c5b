#include <gtest/gtest.h>

#include "mixbench/ops.hpp"
#include "testkit.hpp"

using namespace mixbench;

TEST(Tape, SumGradientIsOnes) {
  Tensor<double> x({3}, std::vector<double>{1, -2, 5});
  Tape<double> tape;
  tape.backward(sum(tape.leaf(x)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{1, 1, 1}));
}

TEST(Tape, SquareGradientIsTwoX) {
  Tensor<double> x({2}, std::vector<double>{1, 2});
  Tape<double> tape;
  tape.backward(sum(square(tape.leaf(x))));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Tape, RepeatedBackwardAccumulates) {
  Tensor<double> x({2}, std::vector<double>{1, 2});
  Tape<double> tape;
  auto loss = sum(square(tape.leaf(x)));
  tape.backward(loss);
  tape.backward(loss);
  EXPECT_EQ(x.grad()[0], 4.0);
  EXPECT_EQ(x.grad()[1], 8.0);
}

TEST(Tape, NonScalarLossThrows) {
  Tensor<double> x({2}, 1.0);
  Tape<double> tape;
  auto y = square(tape.leaf(x));
  EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(Tape, FrozenLeafNeverAccumulates) {
  Tensor<double> x({2}, 1.0), w({2}, 3.0);
  Tape<double> tape;
  tape.backward(sum(mul(tape.leaf(x, true), tape.leaf(w, false))));
  EXPECT_TRUE(x.has_grad());
  EXPECT_FALSE(w.has_grad());
}

TEST(Tape, SharedSubexpressionVisitedOnce) {
  // y = x*x used twice: d/dx (y + y) = 4x.
  Tensor<double> x({1}, 3.0);
  Tape<double> tape;
  auto v = tape.leaf(x);
  auto y = mul(v, v);
  tape.backward(sum(add(y, y)));
  EXPECT_EQ(x.grad()[0], 12.0);
}

TEST(Tape, InputsPrecedeOutputs) {
  Tensor<double> x({2}, 1.0);
  Tape<double> tape;
  auto a = tape.leaf(x);
  auto b = square(a);
  auto c = sum(b);
  EXPECT_LT(a.id(), b.id());
  EXPECT_LT(b.id(), c.id());
  EXPECT_EQ(tape.size(), 3u);
}

TEST(Tape, DeterministicGradients) {
  SplitMix64 rng(4);
  const auto x0 = testkit::random_tensor({2, 3, 5, 5}, rng);
  const auto f0 = testkit::random_tensor({6, 1, 3, 3}, rng);
  const auto w0 = testkit::random_tensor({4, 6}, rng);
  auto run = [&] {
    Tensor<double> x = x0, f = f0, w = w0;
    Tape<double> tape;
    auto y = conv2d_pointwise(gelu(conv2d_depthwise(tape.leaf(x), tape.leaf(f), 2)), tape.leaf(w));
    tape.backward(mean(square(y)));
    return std::vector<std::vector<double>>{{x.grad().begin(), x.grad().end()},
                                            {f.grad().begin(), f.grad().end()},
                                            {w.grad().begin(), w.grad().end()}};
  };
  EXPECT_EQ(run(), run());
}
