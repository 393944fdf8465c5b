#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mixbench/data.hpp"
#include "mixbench/errors.hpp"
#include "testkit.hpp"

using namespace mixbench;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("mixbench_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Two 2x3 images with pixel values 0..11 and labels {7, 2}.
void write_idx_fixture(const fs::path& images, const fs::path& labels) {
  std::vector<std::uint8_t> img;
  put_be32(img, 0x00000803);
  put_be32(img, 2);
  put_be32(img, 2);
  put_be32(img, 3);
  for (std::uint8_t i = 0; i < 12; ++i) img.push_back(static_cast<std::uint8_t>(i * 20));
  write_bytes(images, img);
  std::vector<std::uint8_t> lab;
  put_be32(lab, 0x00000801);
  put_be32(lab, 2);
  lab.push_back(7);
  lab.push_back(2);
  write_bytes(labels, lab);
}

std::vector<std::uint8_t> cifar_record(std::uint8_t label, std::uint8_t base) {
  std::vector<std::uint8_t> rec{label};
  for (std::size_t i = 0; i < 3072; ++i) rec.push_back(static_cast<std::uint8_t>((base + i) % 256));
  return rec;
}

}  // namespace

TEST(Idx, LoadsFixture) {
  TempDir dir;
  write_idx_fixture(dir / "img", dir / "lab");
  const auto ds = load_idx(dir / "img", dir / "lab", Split::Test);
  EXPECT_EQ(ds.images.shape(), (Shape{2, 1, 2, 3}));
  EXPECT_EQ(ds.labels, (std::vector<std::int32_t>{7, 2}));
  EXPECT_EQ(ds.split, Split::Test);
  EXPECT_FLOAT_EQ(ds.images[0], 0.0f);
  EXPECT_FLOAT_EQ(ds.images[7], 140.0f / 255.0f);
  EXPECT_FLOAT_EQ(ds.images[11], 220.0f / 255.0f);
}

TEST(Idx, RejectsBadMagicTruncationAndMismatch) {
  TempDir dir;
  write_idx_fixture(dir / "img", dir / "lab");
  EXPECT_THROW(load_idx(dir / "lab", dir / "lab"), DataError);
  EXPECT_THROW(load_idx(dir / "img", dir / "img"), DataError);
  EXPECT_THROW(load_idx(dir / "missing", dir / "lab"), DataError);

  auto img = std::vector<std::uint8_t>();
  put_be32(img, 0x00000803);
  put_be32(img, 2);
  put_be32(img, 2);
  put_be32(img, 3);
  img.resize(img.size() + 5);
  write_bytes(dir / "short", img);
  EXPECT_THROW(load_idx(dir / "short", dir / "lab"), DataError);

  std::vector<std::uint8_t> lab;
  put_be32(lab, 0x00000801);
  put_be32(lab, 3);
  lab.insert(lab.end(), {1, 2, 3});
  write_bytes(dir / "lab3", lab);
  try {
    load_idx(dir / "img", dir / "lab3");
    FAIL() << "count mismatch accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("mismatch"), std::string::npos);
  }
}

TEST(Cifar, LoadsRecordsAcrossFiles) {
  TempDir dir;
  auto a = cifar_record(3, 0), b = cifar_record(9, 100);
  a.insert(a.end(), b.begin(), b.end());
  write_bytes(dir / "a.bin", a);
  write_bytes(dir / "b.bin", cifar_record(0, 50));
  const std::vector<fs::path> files{dir / "a.bin", dir / "b.bin"};
  const auto ds = load_cifar_binary(files);
  EXPECT_EQ(ds.images.shape(), (Shape{3, 3, 32, 32}));
  EXPECT_EQ(ds.labels, (std::vector<std::int32_t>{3, 9, 0}));
  EXPECT_FLOAT_EQ(ds.images[1024], static_cast<float>(1024 % 256) / 255.0f);
  EXPECT_FLOAT_EQ(ds.images[3072], 100.0f / 255.0f);
  EXPECT_FLOAT_EQ(ds.images[2 * 3072 + 5], 55.0f / 255.0f);
}

TEST(Cifar, RejectsBadLengthAndLabel) {
  TempDir dir;
  auto rec = cifar_record(1, 0);
  rec.pop_back();
  write_bytes(dir / "short.bin", rec);
  std::vector<fs::path> files{dir / "short.bin"};
  EXPECT_THROW(load_cifar_binary(files), DataError);
  write_bytes(dir / "label.bin", cifar_record(12, 0));
  files = {dir / "label.bin"};
  EXPECT_THROW(load_cifar_binary(files), DataError);
}

TEST(Dataset, SliceAndGather) {
  SplitMix64 rng(50);
  Dataset ds;
  ds.images = Tensor<float>({4, 1, 2, 2});
  for (std::size_t i = 0; i < 16; ++i) ds.images[i] = static_cast<float>(i);
  ds.labels = {0, 1, 2, 3};
  const auto s = ds.slice(1, 2);
  EXPECT_EQ(s.labels, (std::vector<std::int32_t>{1, 2}));
  EXPECT_EQ(s.images[0], 4.0f);
  const std::vector<std::size_t> idx{3, 0};
  const auto g = ds.gather(idx);
  EXPECT_EQ(g.labels, (std::vector<std::int32_t>{3, 0}));
  EXPECT_EQ(g.images[0], 12.0f);
  EXPECT_EQ(g.images[4], 0.0f);
  EXPECT_THROW(ds.slice(3, 2), std::out_of_range);
}

TEST(Permutation, IsABijectionThatPreservesPixelValues) {
  SplitMix64 rng(51);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = make_permutation(7, 9, seed);
    ASSERT_TRUE(p.is_bijection());
    auto images = testkit::random_tensor({2, 3, 7, 9}, rng);
    const auto shuffled = apply_permutation(images, p);
    for (std::size_t plane = 0; plane < 6; ++plane) {
      std::vector<double> a(images.data().begin() + plane * 63, images.data().begin() + (plane + 1) * 63);
      std::vector<double> b(shuffled.data().begin() + plane * 63, shuffled.data().begin() + (plane + 1) * 63);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      ASSERT_EQ(a, b);
    }
    EXPECT_EQ(apply_permutation(shuffled, p.inverse()), images);
  }
}

TEST(Permutation, SameSeedSameSigmaAndChannelsMoveTogether) {
  EXPECT_EQ(make_permutation(28, 28, 3).sigma, make_permutation(28, 28, 3).sigma);
  EXPECT_NE(make_permutation(28, 28, 3).sigma, make_permutation(28, 28, 4).sigma);
  const auto p = make_permutation(4, 4, 5);
  Tensor<float> img({1, 2, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) img[i] = img[16 + i] = static_cast<float>(i);
  const auto out = apply_permutation(img, p);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(out[i], out[16 + i]);
    EXPECT_EQ(out[p.sigma[i]], static_cast<float>(i));
  }
  EXPECT_THROW(apply_permutation(Tensor<float>({1, 1, 4, 5}), p), ShapeError);
}

TEST(Permutation, SaveLoadRoundTrip) {
  TempDir dir;
  const auto p = make_permutation(5, 6, 77);
  save_permutation(p, dir / "perm.txt");
  EXPECT_EQ(load_permutation(dir / "perm.txt", 5, 6).sigma, p.sigma);
  EXPECT_THROW(load_permutation(dir / "perm.txt", 4, 6), DataError);
  std::ofstream(dir / "dup.txt") << "0 1\n1 1\n2 0\n3 3\n";
  EXPECT_THROW(load_permutation(dir / "dup.txt", 2, 2), DataError);
}

TEST(Psnr, KnownValues) {
  Tensor<double> a({2, 2}, 0.5);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  Tensor<double> b({2, 2}, 0.6);  // MSE 0.01 -> 20 dB
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_NEAR(psnr(a, b, 255.0), 20.0 + 20.0 * std::log10(255.0), 1e-9);
  EXPECT_THROW(psnr(a, Tensor<double>({4})), ShapeError);
}

TEST(Psnr, MatchesDirectFormula) {
  SplitMix64 rng(52);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = testkit::random_tensor({3, 1, 5, 5}, rng), b = testkit::random_tensor({3, 1, 5, 5}, rng);
    long double se = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) se += (long double)(a[i] - b[i]) * (a[i] - b[i]);
    const double expected = -10.0 * std::log10(static_cast<double>(se / a.numel()));
    EXPECT_NEAR(psnr(a, b), expected, 1e-9);
  }
}

TEST(Augment, FlipCropKeepsContentAndZeroFills) {
  SplitMix64 rng(53);
  Tensor<float> images({64, 1, 8, 8}, 1.0f);
  augment_flip_crop(images, rng, 2);
  std::size_t untouched = 0, zeros = 0;
  for (std::size_t n = 0; n < 64; ++n) {
    double s = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      const float v = images[n * 64 + i];
      ASSERT_TRUE(v == 0.0f || v == 1.0f);
      s += v;
      zeros += v == 0.0f;
    }
    untouched += s == 64;
    EXPECT_GE(s, 36);  // at most 2 rows and 2 columns shift out
  }
  EXPECT_GT(untouched, 0u);
  EXPECT_GT(zeros, 0u);

  Tensor<float> ramp({1, 1, 1, 4}, std::vector<float>{1, 2, 3, 4});
  bool saw_flip = false;
  SplitMix64 r2(54);
  for (int t = 0; t < 50 && !saw_flip; ++t) {
    auto copy = ramp;
    augment_flip_crop(copy, r2, 0);
    saw_flip = copy[0] == 4.0f;
    if (!saw_flip) EXPECT_EQ(copy, ramp);
  }
  EXPECT_TRUE(saw_flip);
}

TEST(Idx, RealMnistWhenAvailable) {
  const fs::path root = "/root/data/mnist";
  if (!fs::exists(root / "t10k-images-idx3-ubyte")) GTEST_SKIP() << "MNIST not present";
  const auto ds = load_idx(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte", Split::Test);
  EXPECT_EQ(ds.images.shape(), (Shape{10000, 1, 28, 28}));
  EXPECT_EQ(*std::max_element(ds.labels.begin(), ds.labels.end()), 9);
}
