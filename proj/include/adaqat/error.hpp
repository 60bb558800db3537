#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace adaqat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class AutodiffError : public Error {
 public:
  using Error::Error;
};

/// Thrown when a real-valued kernel is entered while an integer-only
/// execution scope is active.
class RealArithmeticViolation : public Error {
 public:
  using Error::Error;
};

class LoweringError : public Error {
 public:
  LoweringError(int layer, const std::string& what)
      : Error("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

class OverflowError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public FormatError {
 public:
  ChecksumError(std::uint64_t offset, const std::string& what)
      : FormatError("checksum mismatch at offset " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace adaqat
