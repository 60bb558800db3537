#include <cmath>

#include "doctest.h"

#include "adaqat/kernels.hpp"
#include "adaqat/rng.hpp"
#include "support/oracles.hpp"

using namespace adaqat;
using namespace adaqat::kernels;
namespace ot = adaqat::testing;

namespace {

ConvGeometry random_geometry(Rng& rng) {
  ConvGeometry g;
  g.batch = 1 + static_cast<int>(rng.below(4));
  g.in_channels = 1 + static_cast<int>(rng.below(5));
  g.in_h = 4 + static_cast<int>(rng.below(8));
  g.in_w = 4 + static_cast<int>(rng.below(8));
  g.out_channels = 1 + static_cast<int>(rng.below(6));
  g.kernel_h = g.kernel_w = 1 + static_cast<int>(rng.below(4));
  g.stride = 1 + static_cast<int>(rng.below(3));
  g.padding = static_cast<int>(rng.below(2));
  return g;
}

std::vector<float> uniform(Rng& rng, std::int64_t n) {
  std::vector<float> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

}  // namespace

TEST_CASE("geometry validation") {
  ConvGeometry g;
  g.in_h = g.in_w = 2;
  g.kernel_h = g.kernel_w = 3;
  CHECK_THROWS_AS(g.validate(), ShapeError);
  g.padding = 1;
  CHECK_NOTHROW(g.validate());
  CHECK(g.out_h() == 2);
}

TEST_CASE("serial and parallel kernels agree") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const ConvGeometry g = random_geometry(rng);
    if (g.out_h() < 1 || g.out_w() < 1) continue;
    const auto x = uniform(rng, g.input_size()), w = uniform(rng, g.weight_size()), b = uniform(rng, g.out_channels);
    const auto up = uniform(rng, g.output_size());
    const float pad = static_cast<float>(rng.uniform(-1, 1));

    std::vector<float> ys(static_cast<std::size_t>(g.output_size())), yp(ys.size());
    conv2d_forward(Backend::Serial, g, x, w, b, pad, ys);
    conv2d_forward(Backend::Parallel, g, x, w, b, pad, yp);
    CHECK(ys == yp);

    std::vector<float> gis(x.size()), gip(x.size());
    conv2d_backward_input(Backend::Serial, g, w, up, gis);
    conv2d_backward_input(Backend::Parallel, g, w, up, gip);
    // col2im sums each input position in a different order than the loop nest.
    for (std::size_t i = 0; i < gis.size(); ++i) CHECK(std::abs(gip[i] - gis[i]) <= 1e-5f);

    std::vector<float> gws(w.size()), gwp(w.size());
    conv2d_backward_weight(Backend::Serial, g, x, up, pad, gws);
    conv2d_backward_weight(Backend::Parallel, g, x, up, pad, gwp);
    CHECK(gws == gwp);

    std::vector<std::int32_t> codes(x.size()), wq(w.size()), bq(b.size());
    for (auto& c : codes) c = -8 + static_cast<std::int32_t>(rng.below(16));
    for (auto& c : wq) c = -8 + static_cast<std::int32_t>(rng.below(16));
    for (auto& c : bq) c = static_cast<std::int32_t>(rng.below(2001)) - 1000;
    std::vector<std::int32_t> as(ys.size()), ap(ys.size());
    conv2d_int_accumulate(Backend::Serial, g, codes, wq, bq, -3, as);
    conv2d_int_accumulate(Backend::Parallel, g, codes, wq, bq, -3, ap);
    CHECK(as == ap);
  }
}

TEST_CASE("forward kernel matches the nested-loop reference") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const ConvGeometry g = random_geometry(rng);
    const Tensor x = ot::random_tensor(rng, {g.batch, g.in_channels, g.in_h, g.in_w}, -1, 1);
    const Tensor w = ot::random_tensor(rng, {g.out_channels, g.in_channels, g.kernel_h, g.kernel_w}, -1, 1);
    const Tensor b = ot::random_tensor(rng, {g.out_channels}, -1, 1);
    const auto ref = ot::oracle_conv2d(x, w, b, g.stride, g.padding, 0.5);
    std::vector<float> y(ref.size());
    conv2d_forward(Backend::Parallel, g, x.data(), w.data(), b.data(), 0.5f, y);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("linear kernels agree across backends") {
  Rng rng(5);
  const int n = 7, in = 33, out = 9;
  const auto x = uniform(rng, n * in), w = uniform(rng, out * in), b = uniform(rng, out), up = uniform(rng, n * out);
  std::vector<float> ys(n * out), yp(n * out), gxs(n * in), gxp(n * in), gws(out * in), gwp(out * in);
  linear_forward(Backend::Serial, n, in, out, x, w, b, ys);
  linear_forward(Backend::Parallel, n, in, out, x, w, b, yp);
  CHECK(ys == yp);
  linear_backward_input(Backend::Serial, n, in, out, w, up, gxs);
  linear_backward_input(Backend::Parallel, n, in, out, w, up, gxp);
  CHECK(gxs == gxp);
  linear_backward_weight(Backend::Serial, n, in, out, x, up, gws);
  linear_backward_weight(Backend::Parallel, n, in, out, x, up, gwp);
  CHECK(gws == gwp);
}

TEST_CASE("integer accumulation overflow is reported") {
  ConvGeometry g;
  g.in_channels = 1;
  g.in_h = g.in_w = 1;
  const std::vector<std::int32_t> codes{127}, w{127}, b{2147483000};
  std::vector<std::int32_t> acc(1);
  CHECK_THROWS_AS(conv2d_int_accumulate(Backend::Serial, g, codes, w, b, 0, acc), OverflowError);
}
