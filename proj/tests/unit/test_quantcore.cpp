#include <array>
#include <bit>
#include <cmath>
#include <limits>

#include "doctest.h"

#include "adaqat/ops.hpp"
#include "adaqat/quant.hpp"
#include "adaqat/rng.hpp"
#include "support/oracles.hpp"

using namespace adaqat;
namespace ot = adaqat::testing;

namespace {

bool same_bits(float a, float b) { return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b); }

}  // namespace

TEST_CASE("q_int examples") {
  CHECK(q_int(7.6f, 4) == 7);
  CHECK(q_int(-8.2f, 4) == -8);
  CHECK(q_int(0.0f, 4) == 0);
  CHECK(q_int(-0.49f, 4) == 0);
  CHECK(q_int(2.5f, 4) == 3);
  CHECK(q_int(-2.5f, 4) == -3);
  CHECK(q_int(std::numeric_limits<float>::quiet_NaN(), 4) == 0);
  CHECK(q_int(std::numeric_limits<float>::infinity(), 8) == 127);
  CHECK(q_int(-std::numeric_limits<float>::infinity(), 2) == -2);
}

TEST_CASE("q_int matches the scalar reference on uniform samples") {
  Rng rng(17);
  for (int bits : {2, 3, 4, 8}) {
    Tensor x({100000});
    for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-12.0, 12.0));
    const IntTensor q = q_int(x, bits);
    CHECK(q.bits() == bits);
    int mismatches = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mismatches += q[i] != ot::oracle_q_int(x[i], bits);
    CHECK(mismatches == 0);
  }
}

TEST_CASE("quantizer laws") {
  Rng rng(4);
  for (int bits : {2, 3, 4, 8}) {
    const float lo = static_cast<float>(code_min(bits)), hi = static_cast<float>(code_max(bits));
    for (int i = 0; i < 20000; ++i) {
      const float x = static_cast<float>(rng.uniform(lo - 4.0, hi + 4.0));
      const float y = static_cast<float>(rng.uniform(lo - 4.0, hi + 4.0));
      const std::int32_t qx = q_int(x, bits);
      CHECK(q_int(static_cast<float>(qx), bits) == qx);
      CHECK(qx >= code_min(bits));
      CHECK(qx <= code_max(bits));
      if (x <= y) CHECK(qx <= q_int(y, bits));
    }
  }
}

TEST_CASE("normalization") {
  const Tensor w({2}, std::vector<float>{1.0f, -2.0f});
  CHECK(normalize_weight(w, QuantParams::weight(4, 0.5f)) == Tensor({2}, std::vector<float>{2.0f, -4.0f}));
  CHECK(normalize_weight(w, QuantParams::weight(4, 1.0f)) == w);
  const Tensor a({1}, std::vector<float>{0.5f});
  CHECK(normalize_activation(a, QuantParams::activation(4, 0.25f, 0.5f))[0] == 0.0f);
  CHECK(normalize_activation(w, QuantParams::activation(4, 0.5f, 0.0f)) ==
        normalize_weight(w, QuantParams::weight(4, 0.5f)));

  Rng rng(9);
  const Tensor x = ot::random_tensor(rng, {1000}, -5, 5);
  const QuantParams p = QuantParams::activation(4, 0.37f, -0.21f);
  const Tensor xn = normalize_activation(x, p);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(p.scale * xn[i] + p.zero_point == doctest::Approx(x[i]).epsilon(1e-6).scale(1.0));
}

TEST_CASE("fake_quant examples") {
  CHECK(fake_quant(Tensor({1}, 2.3f), QuantParams::activation(4, 1.0f, 0.0f))[0] == 2.0f);
  const float clamped = fake_quant(Tensor({1}, 9.0f), QuantParams::activation(4, 0.5f, 0.1f))[0];
  CHECK(clamped == ot::oracle_fake_quant(9.0f, 0.5f, 0.1f, 4));
  CHECK(clamped == doctest::Approx(3.6));

  const QuantParams p = QuantParams::activation(4, 0.25f, 0.0f);
  for (int k = -8; k <= 7; ++k) {
    const float a = 0.25f * static_cast<float>(k);
    CHECK(fake_quant(Tensor({1}, a), p)[0] == a);
  }
}

TEST_CASE("fake_quant error is at most f/2 in range") {
  Rng rng(13);
  for (int bits : {2, 3, 4, 8}) {
    const QuantParams p = QuantParams::activation(bits, 0.3f, 0.4f);
    const Tensor x = ot::random_tensor(rng, {20000}, -50, 50);
    const Tensor y = fake_quant(x, p);
    const Tensor xn = normalize_activation(x, p);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (xn[i] > p.lower() && xn[i] < p.upper()) CHECK(std::abs(y[i] - x[i]) <= p.scale / 2 * (1 + 1e-5f));
  }
}

TEST_CASE("quantize and dequantize round trip is idempotent") {
  Rng rng(14);
  const QuantParams p = QuantParams::activation(3, 0.7f, -0.3f);
  const QuantizedTensor qt = quantize(ot::random_tensor(rng, {500}, -5, 5), p);
  CHECK(qt.values.in_range());
  const Tensor once = dequantize(qt);
  CHECK(dequantize(quantize(once, p)) == once);
}

TEST_CASE("ste_mask is open at both ends") {
  const Tensor m = ste_mask(Tensor({3}, std::vector<float>{-8.5f, 0.0f, 7.5f}), 4);
  CHECK(m == Tensor({3}, std::vector<float>{0.0f, 1.0f, 0.0f}));
  CHECK(ste_mask(Tensor({2}, std::vector<float>{-8.0f, 7.0f}), 4) == Tensor({2}, 0.0f));
  CHECK(ste_mask(Tensor({5}, 0.0f), 2) == Tensor({5}, 1.0f));

  Rng rng(31);
  for (int bits : {2, 3, 4, 8}) {
    const Tensor a = ot::random_tensor(rng, {100000}, -140, 140);
    const Tensor mask = ste_mask(a, bits);
    int bad = 0;
    for (std::size_t i = 0; i < a.size(); ++i) bad += mask[i] != ot::oracle_mask(a[i], bits);
    CHECK(bad == 0);
  }
}

TEST_CASE("grad_scale examples") {
  const Tensor one({1}, 1.0f);
  CHECK(grad_scale(one, Tensor({1}, 2.3f), Tensor({1}, 2.0f), one) == doctest::Approx(-0.3));
  CHECK(grad_scale(one, Tensor({1}, 9.5f), Tensor({1}, 7.0f), Tensor({1}, 0.0f)) == 7.0f);
  const Tensor grid({4}, std::vector<float>{-3, 0, 1, 5});
  CHECK(grad_scale(Tensor({4}, 1.0f), grid, grid, Tensor({4}, 1.0f)) == 0.0f);
  CHECK_THROWS_AS(grad_scale(one, Tensor({2}), Tensor({1}), one), ShapeError);
}

TEST_CASE("grad_scale two-term behaviour") {
  Rng rng(41);
  const Tensor a_bar = ot::random_tensor(rng, {64}, -6, 6);
  Tensor a_hat(a_bar.shape());
  double residual = 0.0;
  for (std::size_t i = 0; i < a_bar.size(); ++i) {
    a_hat[i] = static_cast<float>(ot::oracle_q_int(a_bar[i], 4));
    residual += static_cast<double>(a_hat[i]) - a_bar[i];
  }
  CHECK(grad_scale(Tensor({64}, 1.0f), a_bar, a_hat, ste_mask(a_bar, 4)) == static_cast<float>(residual));

  const Tensor high = ot::random_tensor(rng, {64}, 8, 20);
  const Tensor sat({64}, 7.0f);
  CHECK(grad_scale(Tensor({64}, 1.0f), high, sat, ste_mask(high, 4)) == 7.0f * 64);
}

TEST_CASE("grad_zero_point examples") {
  CHECK(grad_zero_point(Tensor({5}, 1.0f), Tensor({5}, 1.0f)) == 0.0f);
  const Tensor mask({6}, std::vector<float>{1, 0, 1, 0, 0, 1});
  CHECK(grad_zero_point(Tensor({6}, 1.0f), mask) == 3.0f);
  CHECK_THROWS_AS(grad_zero_point(Tensor({6}), Tensor({5})), ShapeError);

  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::int64_t>(1 + rng.below(50));
    const Tensor up = ot::normal_tensor(rng, {n});
    Tensor m({n});
    double expected = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = rng.below(2) ? 1.0f : 0.0f;
      expected += static_cast<double>(up[i]) * (m[i] != 0.0f ? 0.0 : 1.0);
    }
    CHECK(same_bits(grad_zero_point(up, m), static_cast<float>(expected)));
  }
}

TEST_CASE("grad_input masks the upstream") {
  Rng rng(6);
  const Tensor up = ot::normal_tensor(rng, {300});
  CHECK(grad_input(up, Tensor({300}, 1.0f)) == up);
  CHECK(grad_input(up, Tensor({300}, 0.0f)) == Tensor({300}, 0.0f));
  Tensor m({300});
  for (auto& v : m.data()) v = rng.below(2) ? 1.0f : 0.0f;
  const Tensor g = grad_input(up, m);
  for (std::size_t i = 0; i < up.size(); ++i) CHECK(same_bits(g[i], up[i] * m[i]));
}

TEST_CASE("tape gradients of fake_quant equal the elementwise formulas") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int bits = std::array{2, 3, 4, 8}[rng.below(4)];
    const Shape shape{static_cast<std::int64_t>(1 + rng.below(64)), static_cast<std::int64_t>(1 + rng.below(64))};
    const float f = static_cast<float>(rng.uniform(0.05, 1.5));
    const float z = static_cast<float>(rng.uniform(-1, 1));
    const Tensor x = ot::random_tensor(rng, shape, z + f * (code_min(bits) - 3), z + f * (code_max(bits) + 3));
    const Tensor up = ot::normal_tensor(rng, shape);
    Tape t;
    const Var xv = t.parameter("x", x), fv = t.parameter("f", Tensor::scalar(f)), zv = t.parameter("z", Tensor::scalar(z));
    const GradMap g = t.backward(ops::sum(t, ops::mul(t, ops::fake_quant(t, xv, fv, zv, bits), t.constant(up))));
    const auto o = ot::oracle_quant_grads(x.vec(), up.vec(), f, z, bits);
    REQUIRE(same_bits(g.at("f").item(), o.scale));
    REQUIRE(same_bits(g.at("z").item(), o.zero));
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(same_bits(g.at("x")[i], o.input[i]));
  }
}

TEST_CASE("zero-point gradient vanishes when nothing is clamped") {
  Rng rng(99);
  const float f = 0.2f, z = 0.3f;
  const Tensor x = ot::random_tensor(rng, {32, 32}, z + f * -7.9, z + f * 6.9);
  Tape t;
  const Var xv = t.parameter("x", x), fv = t.parameter("f", Tensor::scalar(f)), zv = t.parameter("z", Tensor::scalar(z));
  const GradMap g =
      t.backward(ops::sum(t, ops::mul(t, ops::fake_quant(t, xv, fv, zv, 4), t.constant(ot::normal_tensor(rng, {32, 32})))));
  CHECK(same_bits(g.at("z").item(), 0.0f));
}

TEST_CASE("weight-scale gradient is grad_scale with z fixed at 0") {
  Rng rng(12);
  const Tensor w = ot::normal_tensor(rng, {16, 9}, 0.5);
  const Tensor up = ot::normal_tensor(rng, {16, 9});
  const float f = 0.11f;
  Tape t;
  const Var wv = t.parameter("w", w), fv = t.parameter("f", Tensor::scalar(f));
  const GradMap g =
      t.backward(ops::sum(t, ops::mul(t, ops::fake_quant(t, wv, fv, t.constant(Tensor::scalar(0.0f)), 4), t.constant(up))));
  const Tensor w_bar = normalize_weight(w, QuantParams::weight(4, f));
  Tensor w_hat(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w_hat[i] = static_cast<float>(q_int(w_bar[i], 4));
  CHECK(same_bits(g.at("f").item(), grad_scale(up, w_bar, w_hat, ste_mask(w_bar, 4))));
}

TEST_CASE("QuantParams validation") {
  CHECK_NOTHROW(QuantParams::activation(4, 0.1f, 0.5f).validate());
  CHECK_THROWS(QuantParams::activation(5, 0.1f, 0.0f).validate());
  CHECK_THROWS(QuantParams::activation(4, 0.0f, 0.0f).validate());
  CHECK_THROWS(QuantParams{4, 0.1f, 0.2f, QuantKind::Weight}.validate());
  CHECK(QuantParams::activation(4, 1.0f, 0.0f).lower() == -8);
  CHECK(QuantParams::activation(4, 1.0f, 0.0f).upper() == 7);
}
