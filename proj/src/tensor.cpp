#include "adaqat/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace adaqat {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("shape " + shape_str(shape) + " has a non-positive extent");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
    throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
}

std::int64_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("axis out of range for shape " + shape_str(shape_));
  return shape_[axis];
}

float Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

IntTensor::IntTensor(Shape shape, int bits, std::int32_t fill)
    : shape_(std::move(shape)), bits_(bits), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

IntTensor::IntTensor(Shape shape, int bits, std::vector<std::int32_t> data)
    : shape_(std::move(shape)), bits_(bits), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
    throw ShapeError("int tensor shape " + shape_str(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
}

std::int64_t IntTensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("axis out of range for shape " + shape_str(shape_));
  return shape_[axis];
}

IntTensor IntTensor::reshaped(Shape shape) const { return IntTensor(std::move(shape), bits_, data_); }

bool IntTensor::in_range() const noexcept {
  if (bits_ >= 32) return true;
  const auto lo = code_min(bits_), hi = code_max(bits_);
  return std::all_of(data_.begin(), data_.end(), [&](std::int32_t v) { return v >= lo && v <= hi; });
}

namespace {
thread_local int integer_only_depth = 0;
}

IntegerOnlyScope::IntegerOnlyScope() { ++integer_only_depth; }
IntegerOnlyScope::~IntegerOnlyScope() { --integer_only_depth; }
bool IntegerOnlyScope::active() noexcept { return integer_only_depth > 0; }

void require_real_arithmetic(const char* op) {
  if (integer_only_depth > 0)
    throw RealArithmeticViolation(std::string("real-valued op '") + op + "' inside an integer-only scope");
}

}  // namespace adaqat
