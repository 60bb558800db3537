#include <atomic>
#include <string>

#include "adaqat/error.hpp"
#include "adaqat/kernels.hpp"

#ifdef ADAQAT_HAVE_OPENMP
#include <omp.h>
#endif

namespace adaqat::kernels {

std::int64_t ConvGeometry::input_size() const {
  return std::int64_t{batch} * in_channels * in_h * in_w;
}
std::int64_t ConvGeometry::output_size() const {
  return std::int64_t{batch} * out_channels * out_h() * out_w();
}
std::int64_t ConvGeometry::weight_size() const {
  return std::int64_t{out_channels} * in_channels * kernel_h * kernel_w;
}

void ConvGeometry::validate() const {
  auto report = [&] {
    return "input N=" + std::to_string(batch) + " C=" + std::to_string(in_channels) +
           " H=" + std::to_string(in_h) + " W=" + std::to_string(in_w) + ", kernel K=" +
           std::to_string(out_channels) + " " + std::to_string(kernel_h) + "x" +
           std::to_string(kernel_w) + ", stride=" + std::to_string(stride) +
           ", padding=" + std::to_string(padding);
  };
  if (batch < 1 || in_channels < 1 || in_h < 1 || in_w < 1 || out_channels < 1 || kernel_h < 1 ||
      kernel_w < 1)
    throw ShapeError("conv2d: non-positive extent (" + report() + ")");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1 (" + report() + ")");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0 (" + report() + ")");
  if (in_h + 2 * padding < kernel_h || in_w + 2 * padding < kernel_w)
    throw ShapeError("conv2d: kernel larger than padded input (" + report() + ")");
}

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};
}

Backend default_backend() noexcept { return g_backend.load(); }
void set_default_backend(Backend backend) noexcept { g_backend.store(backend); }

bool openmp_enabled() noexcept {
#ifdef ADAQAT_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() noexcept {
#ifdef ADAQAT_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace adaqat::kernels
