#include "adaqat/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "adaqat/error.hpp"

namespace adaqat {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t default_seed(std::uint64_t fallback) {
  if (const char* env = std::getenv("ADAQAT_SEED"); env && *env) {
    char* end = nullptr;
    const auto seed = std::strtoull(env, &end, 10);
    if (*end != '\0') throw Error(std::string("ADAQAT_SEED is not an unsigned integer: ") + env);
    return seed;
  }
  return fallback;
}

}  // namespace adaqat
