#include "mixbench/data.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>

namespace mixbench {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) | (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) | static_cast<std::uint32_t>(bytes[offset + 3]);
}

}  // namespace

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw std::out_of_range("dataset slice out of range");
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), begin);
  return gather(idx);
}

Dataset Dataset::gather(std::span<const std::size_t> indices) const {
  Dataset out;
  out.split = split;
  out.num_classes = num_classes;
  const std::size_t per = channels() * height() * width();
  out.images = Tensor<float>({indices.size(), channels(), height(), width()});
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(src * per), per,
                out.images.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    out.labels.push_back(labels[src]);
  }
  return out;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path, Split split) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (img.size() < 16 || read_be32(img, 0) != 0x00000803) {
    throw DataError(images_path.string() + ": bad IDX image magic");
  }
  if (lab.size() < 8 || read_be32(lab, 0) != 0x00000801) {
    throw DataError(labels_path.string() + ": bad IDX label magic");
  }
  const std::size_t count = read_be32(img, 4);
  const std::size_t rows = read_be32(img, 8);
  const std::size_t cols = read_be32(img, 12);
  const std::size_t label_count = read_be32(lab, 4);
  if (img.size() < 16 + count * rows * cols) {
    throw DataError(images_path.string() + ": truncated (" + std::to_string(img.size()) + " bytes for " +
                    std::to_string(count) + " images)");
  }
  if (lab.size() < 8 + label_count) throw DataError(labels_path.string() + ": truncated");
  if (label_count != count) {
    throw DataError("image/label count mismatch: " + std::to_string(count) + " images vs " +
                    std::to_string(label_count) + " labels");
  }
  Dataset ds;
  ds.split = split;
  ds.images = Tensor<float>({count, 1, rows, cols});
  auto px = ds.images.data();
  for (std::size_t i = 0; i < count * rows * cols; ++i) px[i] = static_cast<float>(img[16 + i]) / 255.0f;
  ds.labels.resize(count);
  std::int32_t max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
  return ds;
}

Dataset load_cifar_binary(std::span<const std::filesystem::path> paths, Split split) {
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  std::vector<std::vector<std::uint8_t>> files;
  std::size_t total = 0;
  for (const auto& p : paths) {
    files.push_back(read_file(p));
    if (files.back().size() % kRecord != 0) {
      throw DataError(p.string() + ": length " + std::to_string(files.back().size()) +
                      " is not a multiple of 3073");
    }
    total += files.back().size() / kRecord;
  }
  Dataset ds;
  ds.split = split;
  ds.num_classes = 10;
  ds.images = Tensor<float>({total, 3, 32, 32});
  ds.labels.reserve(total);
  auto px = ds.images.data();
  std::size_t row = 0;
  for (const auto& bytes : files) {
    for (std::size_t r = 0; r < bytes.size() / kRecord; ++r, ++row) {
      const std::uint8_t* rec = bytes.data() + r * kRecord;
      if (rec[0] > 9) throw DataError("CIFAR-10 label " + std::to_string(rec[0]) + " out of range");
      ds.labels.push_back(rec[0]);
      for (std::size_t i = 0; i < kRecord - 1; ++i) px[row * (kRecord - 1) + i] = static_cast<float>(rec[1 + i]) / 255.0f;
    }
  }
  return ds;
}

Permutation Permutation::inverse() const {
  Permutation inv = *this;
  for (std::size_t i = 0; i < sigma.size(); ++i) inv.sigma[sigma[i]] = static_cast<std::uint32_t>(i);
  return inv;
}

bool Permutation::is_bijection() const {
  if (sigma.size() != height * width) return false;
  std::vector<bool> seen(sigma.size(), false);
  for (auto s : sigma) {
    if (s >= sigma.size() || seen[s]) return false;
    seen[s] = true;
  }
  return true;
}

Permutation make_permutation(std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height == 0 || width == 0) throw std::invalid_argument("permutation needs H, W >= 1");
  Permutation p;
  p.height = height;
  p.width = width;
  p.seed = seed;
  p.sigma.resize(height * width);
  std::iota(p.sigma.begin(), p.sigma.end(), 0u);
  SplitMix64 rng(seed);
  for (std::size_t i = p.sigma.size() - 1; i > 0; --i) {
    const std::size_t j = rng.below(i + 1);
    std::swap(p.sigma[i], p.sigma[j]);
  }
  return p;
}

template <typename Real>
Tensor<Real> apply_permutation(const Tensor<Real>& images, const Permutation& perm) {
  if (images.rank() != 4 || images.dim(2) != perm.height || images.dim(3) != perm.width) {
    throw ShapeError("permutation for " + std::to_string(perm.height) + "x" + std::to_string(perm.width) +
                     " cannot apply to " + shape_string(images.shape()));
  }
  const std::size_t plane = perm.height * perm.width;
  const std::size_t planes = images.dim(0) * images.dim(1);
  Tensor<Real> out(images.shape());
  const auto in = images.data();
  auto dst = out.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < plane; ++i) dst[p * plane + perm.sigma[i]] = in[p * plane + i];
  return out;
}

template Tensor<float> apply_permutation(const Tensor<float>&, const Permutation&);
template Tensor<double> apply_permutation(const Tensor<double>&, const Permutation&);

void save_permutation(const Permutation& perm, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < perm.sigma.size(); ++i) out << i << ' ' << perm.sigma[i] << '\n';
}

Permutation load_permutation(const std::filesystem::path& path, std::size_t height, std::size_t width) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Permutation p;
  p.height = height;
  p.width = width;
  p.sigma.assign(height * width, 0);
  std::size_t i = 0, s = 0, lines = 0;
  while (in >> i >> s) {
    if (i >= p.sigma.size()) throw DataError(path.string() + ": index " + std::to_string(i) + " out of range");
    p.sigma[i] = static_cast<std::uint32_t>(s);
    ++lines;
  }
  if (lines != p.sigma.size() || !p.is_bijection()) throw DataError(path.string() + ": not a bijection");
  return p;
}

template <typename Real>
double psnr(const Tensor<Real>& reference, const Tensor<Real>& reconstruction, double peak) {
  if (reference.shape() != reconstruction.shape()) {
    throw ShapeError("psnr shapes differ: " + shape_string(reference.shape()) + " vs " +
                     shape_string(reconstruction.shape()));
  }
  double sum = 0;
  for (std::size_t i = 0; i < reference.numel(); ++i) {
    const double d = static_cast<double>(reference[i]) - static_cast<double>(reconstruction[i]);
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(reference.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

template double psnr(const Tensor<float>&, const Tensor<float>&, double);
template double psnr(const Tensor<double>&, const Tensor<double>&, double);

void augment_flip_crop(Tensor<float>& images, SplitMix64& rng, std::size_t pad) {
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  std::vector<float> buf(c * h * w);
  for (std::size_t i = 0; i < n; ++i) {
    float* img = images.data().data() + i * c * h * w;
    const bool flip = rng.below(2) == 1;
    const long dy = static_cast<long>(rng.below(2 * pad + 1)) - static_cast<long>(pad);
    const long dx = static_cast<long>(rng.below(2 * pad + 1)) - static_cast<long>(pad);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const long sy = static_cast<long>(y) + dy;
          long sx = static_cast<long>(x) + dx;
          if (flip) sx = static_cast<long>(w) - 1 - sx;
          const bool inside = sy >= 0 && sy < static_cast<long>(h) && sx >= 0 && sx < static_cast<long>(w);
          buf[(ch * h + y) * w + x] = inside ? img[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)] : 0.0f;
        }
    std::copy(buf.begin(), buf.end(), img);
  }
}

}  // namespace mixbench
