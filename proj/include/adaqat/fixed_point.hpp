#pragma once

#include <cstdint>

namespace adaqat {

/// Rounding arithmetic right shift, ties away from zero. `shift` may be
/// zero or negative (left shift).
std::int64_t rounding_shift(std::int64_t value, int shift);

/// Positive real multiplier encoded as mantissa * 2^(shift - 15) with the
/// mantissa normalized into [2^14, 2^15). Relative encoding error is at most
/// 2^-15.
struct FixedPointMultiplier {
  static constexpr int kMantissaBits = 15;
  static constexpr int kMinShift = -31;
  static constexpr int kMaxShift = 15;
  static constexpr int kMaxFracBits = 16;

  std::int16_t mantissa = 16384;
  std::int8_t shift = 1;

  /// Throws Error when m is not positive or outside [2^(kMinShift-1), 2^kMaxShift).
  static FixedPointMultiplier encode(double m);
  static bool representable(double m);

  double value() const;
  /// round(x * value * 2^frac_bits), ties away from zero, integer-only.
  std::int64_t apply(std::int64_t x, int frac_bits = 0) const;

  friend bool operator==(const FixedPointMultiplier&, const FixedPointMultiplier&) = default;
};

}  // namespace adaqat
