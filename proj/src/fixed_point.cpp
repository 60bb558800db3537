#include "adaqat/fixed_point.hpp"

#include <cmath>
#include <string>

#include "adaqat/error.hpp"

namespace adaqat {

std::int64_t rounding_shift(std::int64_t value, int shift) {
  if (shift <= 0) return value * (std::int64_t{1} << -shift);
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  if (value >= 0) return (value + half) >> shift;
  return -((-value + half) >> shift);
}

bool FixedPointMultiplier::representable(double m) {
  if (!(m > 0.0) || !std::isfinite(m)) return false;
  int exp = 0;
  std::frexp(m, &exp);
  return exp >= kMinShift && exp <= kMaxShift;
}

FixedPointMultiplier FixedPointMultiplier::encode(double m) {
  if (!(m > 0.0) || !std::isfinite(m))
    throw Error("fixed-point multiplier must be positive and finite, got " + std::to_string(m));
  int exp = 0;
  const double frac = std::frexp(m, &exp);  // m = frac * 2^exp, frac in [0.5, 1)
  auto mant = static_cast<std::int64_t>(std::llround(frac * (1 << kMantissaBits)));
  if (mant == (1 << kMantissaBits)) {
    mant >>= 1;
    ++exp;
  }
  if (exp < kMinShift || exp > kMaxShift)
    throw Error("multiplier " + std::to_string(m) + " outside the representable exponent range");
  FixedPointMultiplier fp;
  fp.mantissa = static_cast<std::int16_t>(mant);
  fp.shift = static_cast<std::int8_t>(exp);
  return fp;
}

double FixedPointMultiplier::value() const { return std::ldexp(static_cast<double>(mantissa), shift - kMantissaBits); }

std::int64_t FixedPointMultiplier::apply(std::int64_t x, int frac_bits) const {
  return rounding_shift(x * mantissa, kMantissaBits - shift - frac_bits);
}

}  // namespace adaqat
