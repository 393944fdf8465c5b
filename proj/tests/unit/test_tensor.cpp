#include <gtest/gtest.h>

#include <filesystem>

#include "mixbench/ops.hpp"
#include "mixbench/tensor.hpp"
#include "testkit.hpp"

using namespace mixbench;

TEST(Tensor, ShapeProductEqualsDataLength) {
  SplitMix64 rng(1);
  for (int i = 0; i < 50; ++i) {
    Shape s(1 + rng.below(4));
    for (auto& d : s) d = 1 + rng.below(5);
    Tensor<float> t(s);
    EXPECT_EQ(t.numel(), shape_numel(s));
  }
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
}

TEST(Tensor, GradAllocatedLazilyWithSameShape) {
  Tensor<double> t({2, 3});
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad().size(), t.numel());
  EXPECT_TRUE(t.has_grad());
  t.zero_grad();
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, BroadcastShapes) {
  EXPECT_EQ(broadcast_shapes({2, 3, 4}, {4}), (Shape{2, 3, 4}));
  EXPECT_EQ(broadcast_shapes({2, 1, 4}, {3, 1}), (Shape{2, 3, 4}));
  EXPECT_EQ(broadcast_shapes({}, {5}), (Shape{5}));
  try {
    broadcast_shapes({2, 3}, {4});
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4]"), std::string::npos) << msg;
  }
}

TEST(Tensor, ChecksumIsFnv1aOverBytes) {
  // FNV-1a of the empty string and of one zero float, computed by hand.
  EXPECT_EQ(checksum(Tensor<float>(Shape{0})), 0xcbf29ce484222325ULL);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int i = 0; i < 4; ++i) h = (h ^ 0) * 0x100000001b3ULL;
  EXPECT_EQ(checksum(Tensor<float>({1})), h);
  Tensor<float> a({3}, 1.0f), b({3}, 1.0f);
  EXPECT_EQ(checksum(a), checksum(b));
  b[2] = std::nextafter(1.0f, 2.0f);
  EXPECT_NE(checksum(a), checksum(b));
}

TEST(Tensor, MxtRoundTripAndLayout) {
  Tensor<float> t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  const auto bytes = encode_mxt(t);
  ASSERT_EQ(bytes.size(), 4u + 4 + 2 * 4 + 6 * 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MXT1");
  EXPECT_EQ(bytes[4], 2);  // rank, little endian
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes[12], 3);
  EXPECT_EQ(decode_mxt(bytes), t);

  const auto path = std::filesystem::temp_directory_path() / "mixbench_roundtrip.mxt";
  save_mxt(t, path);
  EXPECT_EQ(load_mxt(path), t);
  std::filesystem::remove(path);
}

TEST(Tensor, MxtRejectsCorruptInput) {
  Tensor<float> t({2, 2}, 1.0f);
  auto bytes = encode_mxt(t);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_mxt(bad_magic), DataError);
  bytes.pop_back();
  EXPECT_THROW(decode_mxt(bytes), DataError);
  EXPECT_THROW(load_mxt("/nonexistent/file.mxt"), DataError);
}

TEST(Elementwise, TrivialExamples) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2}, std::vector<double>{1, 2}));
  auto b = tape.constant(Tensor<double>({2}, std::vector<double>{3, 4}));
  EXPECT_EQ(add(a, b).value(), Tensor<double>({2}, std::vector<double>{4, 6}));
  SplitMix64 rng(2);
  auto x = tape.constant(testkit::random_tensor({3, 4}, rng));
  auto ones = tape.constant(Tensor<double>::ones({3, 4}));
  EXPECT_EQ(mul(x, ones).value(), x.value());
  auto zero = tape.constant(Tensor<double>::scalar(0.0));
  EXPECT_EQ(gelu(zero).value().item(), 0.0);
}

TEST(Elementwise, ShapeMismatchNamesBothShapes) {
  Tape<float> tape;
  auto a = tape.constant(Tensor<float>({2, 3}));
  auto b = tape.constant(Tensor<float>({2}));
  try {
    add(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2]"), std::string::npos) << msg;
  }
}

TEST(Elementwise, AddAndMulCommuteBitwiseInDouble) {
  SplitMix64 rng(3);
  for (int i = 0; i < 20; ++i) {
    Tape<double> tape;
    auto a = tape.constant(testkit::random_tensor({4, 5}, rng));
    auto b = tape.constant(testkit::random_tensor({4, 5}, rng));
    EXPECT_EQ(add(a, b).value(), add(b, a).value());
    EXPECT_EQ(mul(a, b).value(), mul(b, a).value());
  }
}
