#include "mixbench/tensor.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace mixbench {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast shapes " + shape_string(a) + " and " + shape_string(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, Real fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

template <typename Real>
std::span<Real> Tensor<Real>::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), Real(0));
  return grad_;
}

template <typename Real>
Tensor<Real> Tensor<Real>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

template class Tensor<float>;
template class Tensor<double>;

template <typename Real>
std::uint64_t checksum(const Tensor<Real>& tensor) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(tensor.data().data());
  const std::size_t n = tensor.numel() * sizeof(Real);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template std::uint64_t checksum(const Tensor<float>&);
template std::uint64_t checksum(const Tensor<double>&);

std::string checksum_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_mxt(const Tensor<float>& tensor) {
  std::vector<std::uint8_t> out = {'M', 'X', 'T', '1'};
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  out.reserve(out.size() + 4 * tensor.numel());
  for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor<float> decode_mxt(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "MXT1", 4) != 0) {
    throw DataError("not an MXT1 tensor (bad magic)");
  }
  const std::uint32_t rank = get_u32(bytes, 4);
  if (bytes.size() < 8 + 4 * static_cast<std::size_t>(rank)) {
    throw DataError("truncated MXT1 header");
  }
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) shape[i] = get_u32(bytes, 8 + 4 * i);
  const std::size_t offset = 8 + 4 * static_cast<std::size_t>(rank);
  const std::size_t n = shape_numel(shape);
  if (bytes.size() != offset + 4 * n) {
    throw DataError("MXT1 payload has " + std::to_string(bytes.size() - offset) +
                    " bytes, expected " + std::to_string(4 * n) + " for shape " +
                    shape_string(shape));
  }
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<float>(get_u32(bytes, offset + 4 * i));
  return Tensor<float>(std::move(shape), std::move(values));
}

template <typename Real>
void save_mxt(const Tensor<Real>& tensor, const std::filesystem::path& path) {
  const auto bytes = encode_mxt(tensor.template cast<float>());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

template void save_mxt(const Tensor<float>&, const std::filesystem::path&);
template void save_mxt(const Tensor<double>&, const std::filesystem::path&);

Tensor<float> load_mxt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_mxt(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace mixbench
