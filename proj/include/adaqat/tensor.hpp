#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adaqat/error.hpp"

namespace adaqat {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major real32 tensor. A default-constructed tensor is undefined
/// (no shape, no storage); scalars have shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value) { return Tensor({1}, std::vector<float>{value}); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape(), 0.0f); }

  bool defined() const noexcept { return !data_.empty(); }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const std::vector<float>& vec() const noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float item() const;

  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Integer tensor stored as int32. `bits` is the declared code width; values
/// of a quantized tensor (bits < 32) stay inside [-2^(bits-1), 2^(bits-1)-1].
class IntTensor {
 public:
  IntTensor() = default;
  IntTensor(Shape shape, int bits, std::int32_t fill = 0);
  IntTensor(Shape shape, int bits, std::vector<std::int32_t> data);

  bool defined() const noexcept { return !data_.empty(); }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  int bits() const noexcept { return bits_; }

  std::span<const std::int32_t> data() const noexcept { return data_; }
  std::span<std::int32_t> data() noexcept { return data_; }
  const std::vector<std::int32_t>& vec() const noexcept { return data_; }

  std::int32_t operator[](std::size_t i) const { return data_[i]; }
  std::int32_t& operator[](std::size_t i) { return data_[i]; }

  IntTensor reshaped(Shape shape) const;
  /// True when every value lies in the declared code range.
  bool in_range() const noexcept;

  friend bool operator==(const IntTensor&, const IntTensor&) = default;

 private:
  Shape shape_;
  int bits_ = 32;
  std::vector<std::int32_t> data_;
};

constexpr std::int32_t code_min(int bits) { return -(std::int32_t{1} << (bits - 1)); }
constexpr std::int32_t code_max(int bits) { return (std::int32_t{1} << (bits - 1)) - 1; }

/// RAII scope marking the current thread as integer-only. Real-valued
/// kernels call `require_real_arithmetic` and throw while a scope is open.
class IntegerOnlyScope {
 public:
  IntegerOnlyScope();
  ~IntegerOnlyScope();
  IntegerOnlyScope(const IntegerOnlyScope&) = delete;
  IntegerOnlyScope& operator=(const IntegerOnlyScope&) = delete;

  static bool active() noexcept;
};

void require_real_arithmetic(const char* op);

}  // namespace adaqat
