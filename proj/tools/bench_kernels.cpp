// Serial vs parallel kernel timings on the desk network's layer shapes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "adaqat/kernels.hpp"
#include "adaqat/rng.hpp"

using namespace adaqat;
using kernels::Backend;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<float> random_floats(Rng& rng, std::int64_t n) {
  std::vector<float> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

std::vector<std::int32_t> random_codes(Rng& rng, std::int64_t n, int bits) {
  std::vector<std::int32_t> v(static_cast<std::size_t>(n));
  const std::uint64_t span = std::uint64_t{1} << bits;
  for (auto& x : v) x = static_cast<std::int32_t>(rng.below(span)) - static_cast<std::int32_t>(span / 2);
  return v;
}

void row(const std::string& name, const std::function<void(Backend)>& fn, int reps) {
  const double serial = time_ms([&] { fn(Backend::Serial); }, reps);
  const double parallel = time_ms([&] { fn(Backend::Parallel); }, reps);
  std::printf("%-28s %10.3f %10.3f %8.2fx\n", name.c_str(), serial, parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::stoi(argv[1]) : 5;
  std::printf("openmp=%d threads=%d reps=%d\n", kernels::openmp_enabled() ? 1 : 0, kernels::max_threads(), reps);
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial_ms", "parallel_ms", "speedup");
  Rng rng(7);

  struct Conv {
    const char* name;
    kernels::ConvGeometry g;
  };
  const Conv convs[] = {
      {"conv1 64x1x32x32 k4s2", {64, 1, 32, 32, 8, 4, 4, 2, 0}},
      {"conv2 64x8x15x15 k3s2", {64, 8, 15, 15, 16, 3, 3, 2, 0}},
      {"conv3 64x16x7x7 k3s1", {64, 16, 7, 7, 64, 3, 3, 1, 0}},
  };
  for (const auto& c : convs) {
    const auto& g = c.g;
    const auto x = random_floats(rng, g.input_size());
    const auto w = random_floats(rng, g.weight_size());
    const auto b = random_floats(rng, g.out_channels);
    const auto gy = random_floats(rng, g.output_size());
    std::vector<float> y(static_cast<std::size_t>(g.output_size()));
    std::vector<float> gx(static_cast<std::size_t>(g.input_size())), gw(static_cast<std::size_t>(g.weight_size()));
    row(std::string(c.name) + " fwd", [&](Backend be) { kernels::conv2d_forward(be, g, x, w, b, 0.0f, y); }, reps);
    row(std::string(c.name) + " bwd-in", [&](Backend be) { kernels::conv2d_backward_input(be, g, w, gy, gx); }, reps);
    row(std::string(c.name) + " bwd-w", [&](Backend be) { kernels::conv2d_backward_weight(be, g, x, gy, 0.0f, gw); },
        reps);
    const auto codes = random_codes(rng, g.input_size(), 4);
    const auto wq = random_codes(rng, g.weight_size(), 4);
    const std::vector<std::int32_t> bq(static_cast<std::size_t>(g.out_channels), 3);
    std::vector<std::int32_t> acc(static_cast<std::size_t>(g.output_size()));
    row(std::string(c.name) + " int", [&](Backend be) { kernels::conv2d_int_accumulate(be, g, codes, wq, bq, 0, acc); },
        reps);
  }

  const int n = 64, in = 1600, out = 64;
  const auto x = random_floats(rng, static_cast<std::int64_t>(n) * in);
  const auto w = random_floats(rng, static_cast<std::int64_t>(out) * in);
  const auto b = random_floats(rng, out);
  const auto gy = random_floats(rng, static_cast<std::int64_t>(n) * out);
  std::vector<float> y(static_cast<std::size_t>(n * out)), gx(x.size()), gw(w.size());
  row("fc1 64x1600->64 fwd", [&](Backend be) { kernels::linear_forward(be, n, in, out, x, w, b, y); }, reps);
  row("fc1 bwd-in", [&](Backend be) { kernels::linear_backward_input(be, n, in, out, w, gy, gx); }, reps);
  row("fc1 bwd-w", [&](Backend be) { kernels::linear_backward_weight(be, n, in, out, x, gy, gw); }, reps);
  return 0;
}
