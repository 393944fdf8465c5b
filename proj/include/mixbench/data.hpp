#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "mixbench/rng.hpp"
#include "mixbench/tensor.hpp"

namespace mixbench {

enum class Split { Train, Test };

// Images [N,C,H,W] scaled to [0,1] plus integer labels.
struct Dataset {
  Tensor<float> images;
  std::vector<std::int32_t> labels;
  Split split = Split::Train;
  std::size_t num_classes = 10;

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }

  // Rows [begin, begin + count).
  Dataset slice(std::size_t begin, std::size_t count) const;
  // Rows in the order given by `indices`.
  Dataset gather(std::span<const std::size_t> indices) const;
};

// IDX (MNIST / Fashion-MNIST): big-endian magic 0x00000803 for images and
// 0x00000801 for labels.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 Split split = Split::Train);

// CIFAR-10 binary batches: records of 1 label byte + 3072 channel-major bytes.
Dataset load_cifar_binary(std::span<const std::filesystem::path> paths, Split split = Split::Train);

// Bijection on the H*W pixel coordinates of an image.
struct Permutation {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> sigma;  // pixel at flat index i moves to sigma[i]

  Permutation inverse() const;
  bool is_bijection() const;
};

// Fisher-Yates shuffle driven by SplitMix64(seed).
Permutation make_permutation(std::size_t height, std::size_t width, std::uint64_t seed);

// Applies sigma identically to every channel of every image in [N,C,H,W].
template <typename Real>
Tensor<Real> apply_permutation(const Tensor<Real>& images, const Permutation& perm);

// Text export: one "i sigma(i)" pair per line.
void save_permutation(const Permutation& perm, const std::filesystem::path& path);
Permutation load_permutation(const std::filesystem::path& path, std::size_t height, std::size_t width);

// 10*log10(peak^2 / MSE); +infinity when the inputs are identical.
template <typename Real>
double psnr(const Tensor<Real>& reference, const Tensor<Real>& reconstruction, double peak = 1.0);

// Random horizontal flip + 4-pixel zero-pad-and-crop, per image, in place.
void augment_flip_crop(Tensor<float>& images, SplitMix64& rng, std::size_t pad = 4);

}  // namespace mixbench
