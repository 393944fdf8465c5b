#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mixbench/errors.hpp"

namespace mixbench {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Broadcast two shapes under trailing-dimension rules. Throws ShapeError
// naming both shapes when they are incompatible.
Shape broadcast_shapes(const Shape& a, const Shape& b);

// Dense row-major n-dimensional array. `grad` is empty until something
// accumulates into it; when present it has the same length as `data`.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), Real(1)); }
  static Tensor scalar(Real value) { return Tensor(Shape{}, std::vector<Real>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  std::vector<Real>& storage() { return data_; }
  const std::vector<Real>& storage() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  const Real& operator[](std::size_t i) const { return data_[i]; }

  // Scalar read (rank 0 or single element).
  Real item() const;

  bool has_grad() const { return !grad_.empty(); }
  // Allocates a zero gradient on first use.
  std::span<Real> grad();
  std::span<const Real> grad() const { return grad_; }
  void zero_grad() { grad_.clear(); }

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<Other>(data_[i]);
    return out;
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
  std::vector<Real> grad_;
};

// 64-bit FNV-1a over the raw bytes of the data (not the gradient).
template <typename Real>
std::uint64_t checksum(const Tensor<Real>& tensor);

std::string checksum_hex(std::uint64_t digest);

// MXT1 raw tensor files: "MXT1", u32 LE rank, rank x u32 LE dims, f32 LE data.
template <typename Real>
void save_mxt(const Tensor<Real>& tensor, const std::filesystem::path& path);
Tensor<float> load_mxt(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_mxt(const Tensor<float>& tensor);
Tensor<float> decode_mxt(std::span<const std::uint8_t> bytes);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mixbench
