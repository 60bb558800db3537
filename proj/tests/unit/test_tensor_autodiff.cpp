#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "adaqat/autodiff.hpp"
#include "adaqat/gradcheck.hpp"
#include "adaqat/ops.hpp"
#include "adaqat/rng.hpp"
#include "support/oracles.hpp"

using namespace adaqat;
using adaqat::testing::oracle_conv2d;
using adaqat::testing::random_tensor;

TEST_CASE("tensor shape and storage agree") {
  Tensor t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(shape_numel(t.shape()) == 6);
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
  IntTensor q({4}, 4, std::vector<std::int32_t>{-8, 0, 7, 3});
  CHECK(q.in_range());
  q[0] = -9;
  CHECK_FALSE(q.in_range());
}

TEST_CASE("conv2d of ones sums the window") {
  Tape t;
  const Var x = t.constant(Tensor({1, 1, 3, 3}, 1.0f));
  const Var w = t.constant(Tensor({1, 1, 3, 3}, 1.0f));
  const Var b = t.constant(Tensor({1}, 0.0f));
  const Tensor& y = t.value(ops::conv2d(t, x, w, b, {}));
  REQUIRE(y.size() == 1);
  CHECK(y[0] == 9.0f);
}

TEST_CASE("conv2d with a zero kernel returns the bias") {
  Rng rng(3);
  Tape t;
  const Var x = t.constant(random_tensor(rng, {2, 3, 6, 6}, -2, 2));
  const Var w = t.constant(Tensor({4, 3, 3, 3}, 0.0f));
  const Var b = t.constant(Tensor({4}, 0.75f));
  const Tensor& y = t.value(ops::conv2d(t, x, w, b, {2, 1}));
  CHECK(y.shape() == Shape{2, 4, 3, 3});
  for (float v : y.data()) CHECK(v == 0.75f);
}

TEST_CASE("conv2d matches the nested-loop reference") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int stride = 1 + static_cast<int>(rng.below(2)), pad = static_cast<int>(rng.below(2));
    const Tensor x = random_tensor(rng, {1, 2, 5, 5}, -1, 1);
    const Tensor w = random_tensor(rng, {3, 2, 3, 3}, -1, 1);
    const Tensor b = random_tensor(rng, {3}, -1, 1);
    Tape t;
    const Tensor& y = t.value(ops::conv2d(t, t.constant(x), t.constant(w), t.constant(b), {stride, pad}));
    const auto ref = oracle_conv2d(x, w, b, stride, pad);
    REQUIRE(y.size() == ref.size());
    CHECK(y.dim(2) == (5 + 2 * pad - 3) / stride + 1);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("conv2d rejects mismatched channels") {
  Tape t;
  const Var x = t.constant(Tensor({1, 2, 5, 5}));
  const Var w = t.constant(Tensor({3, 4, 3, 3}));
  CHECK_THROWS_AS(ops::conv2d(t, x, w, Var{}, {}), ShapeError);
}

TEST_CASE("gradient of a linear map is its input") {
  Rng rng(5);
  const Tensor x = random_tensor(rng, {8}, -1, 1);
  Tape t;
  const Var w = t.parameter("w", random_tensor(rng, {8}, -1, 1));
  const GradMap g = t.backward(ops::sum(t, ops::mul(t, w, t.constant(x))));
  CHECK(g.at("w") == x);
}

TEST_CASE("gradient of a square at w=5") {
  Tape t;
  const Var w = t.parameter("w", Tensor::scalar(5.0f));
  const GradMap g = t.backward(ops::square(t, ops::add_scalar(t, w, -3.0f)));
  CHECK(g.at("w").item() == 4.0f);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape t;
  const Var w = t.parameter("w", Tensor({3}, 1.0f));
  CHECK_THROWS_AS(t.backward(ops::scale(t, w, 2.0f)), AutodiffError);
}

TEST_CASE("gradients accumulate over use sites") {
  Rng rng(8);
  const Tensor w0 = random_tensor(rng, {6}, -1, 1);
  const Tensor x1 = random_tensor(rng, {6}, -1, 1), x2 = random_tensor(rng, {6}, -1, 1),
               x3 = random_tensor(rng, {6}, -1, 1);
  Tape both;
  const Var w = both.parameter("w", w0);
  Var loss = ops::sum(both, ops::mul(both, w, both.constant(x1)));
  loss = ops::add(both, loss, ops::sum(both, ops::square(both, ops::mul(both, w, both.constant(x2)))));
  loss = ops::add(both, loss, ops::sum(both, ops::activation(both, ops::mul(both, w, both.constant(x3)), Activation::swish())));
  const Tensor total = both.backward(loss).at("w");

  std::vector<Tensor> parts;
  for (int site = 0; site < 3; ++site) {
    Tape t;
    const Var v = t.parameter("w", w0);
    Var l;
    if (site == 0) l = ops::sum(t, ops::mul(t, v, t.constant(x1)));
    if (site == 1) l = ops::sum(t, ops::square(t, ops::mul(t, v, t.constant(x2))));
    if (site == 2) l = ops::sum(t, ops::activation(t, ops::mul(t, v, t.constant(x3)), Activation::swish()));
    parts.push_back(t.backward(l).at("w"));
  }
  for (std::size_t i = 0; i < total.size(); ++i)
    CHECK(total[i] == doctest::Approx(parts[0][i] + parts[1][i] + parts[2][i]).epsilon(1e-6));
}

TEST_CASE("leaves sharing a name accumulate into one gradient") {
  Tape t;
  const Var a = t.parameter("p", Tensor::scalar(2.0f));
  const Var b = t.parameter("p", Tensor::scalar(2.0f));
  const GradMap g = t.backward(ops::add(t, ops::scale(t, a, 3.0f), ops::scale(t, b, 4.0f)));
  CHECK(g.at("p").item() == 7.0f);
}

TEST_CASE("backward is deterministic") {
  Rng rng(21);
  const Tensor x = random_tensor(rng, {4, 2, 7, 7}, -1, 1);
  const Tensor w0 = random_tensor(rng, {3, 2, 3, 3}, -1, 1);
  auto run = [&] {
    Tape t;
    const Var w = t.parameter("w", w0);
    const Var y = ops::activation(t, ops::conv2d(t, t.constant(x), w, Var{}, {1, 1}), Activation::swish());
    return t.backward(ops::mean(t, ops::square(t, y)));
  };
  CHECK(run() == run());
}

TEST_CASE("smooth composition matches central differences") {
  Rng rng(2);
  const Tensor x = random_tensor(rng, {4, 5}, -1, 1);
  const Tensor w0 = random_tensor(rng, {3, 5}, -1, 1);
  const Tensor b0 = random_tensor(rng, {3}, -0.5, 0.5);
  auto loss_of = [&](const Tensor& w, const Tensor& b, GradMap* grads) {
    Tape t;
    const Var wv = t.parameter("w", w), bv = t.parameter("b", b);
    const Var y = ops::activation(t, ops::linear(t, t.constant(x), wv, bv), Activation::swish());
    const Var l = ops::sum(t, ops::square(t, y));
    if (grads) *grads = t.backward(l);
    return static_cast<double>(t.value(l).item());
  };
  GradMap g;
  loss_of(w0, b0, &g);
  const float h = 1e-2f;
  for (std::size_t i = 0; i < w0.size(); ++i) {
    Tensor wp = w0, wm = w0;
    wp[i] += h;
    wm[i] -= h;
    const double fd = (loss_of(wp, b0, nullptr) - loss_of(wm, b0, nullptr)) / (wp[i] - wm[i]);
    CHECK(g.at("w")[i] == doctest::Approx(fd).epsilon(2e-3).scale(1e-2));
  }
}

TEST_CASE("gradient suites pass") {
  GradcheckOptions opts;
  opts.oracle_trials = 200;
  opts.fd_trials = 40;
  for (const CheckResult& r : run_gradcheck(opts)) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.passed);
  }
}

TEST_CASE("custom rules: duplicates rejected, identity and zero rules") {
  register_custom_grad("test.clamp_pass", [](const BackwardArgs& a) { return std::vector<Tensor>{a.upstream}; });
  register_custom_grad("test.blocked", [](const BackwardArgs& a) {
    return std::vector<Tensor>{Tensor::zeros_like(*a.inputs[0])};
  });
  CHECK_THROWS_AS(register_custom_grad("test.clamp_pass", [](const BackwardArgs& a) {
                    return std::vector<Tensor>{a.upstream};
                  }),
                  AutodiffError);
  const Tensor up({3}, std::vector<float>{1.0f, 2.0f, 3.0f});

  Tape t;
  const Var x = t.parameter("x", Tensor({3}, std::vector<float>{-0.5f, 0.2f, 0.9f}));
  Tensor clamped = t.value(x);
  for (auto& v : clamped.data()) v = std::clamp(v, -1.0f, 1.0f);
  const Var c = t.record("test.clamp_pass", clamped, {x});
  CHECK(t.backward(ops::sum(t, ops::mul(t, c, t.constant(up)))).at("x") == up);

  Tape t2;
  const Var x2 = t2.parameter("x", Tensor({3}, 0.5f));
  const Var z2 = t2.record("test.blocked", t2.value(x2), {x2});
  const GradMap g2 = t2.backward(ops::sum(t2, ops::mul(t2, z2, t2.constant(up))));
  for (float v : g2.at("x").data()) CHECK(v == 0.0f);
}

TEST_CASE("a node without a rule propagates zero gradient") {
  OpRegistry registry;
  Tape t(registry);
  const Var x = t.parameter("x", Tensor({2}, 1.0f));
  const Var y = t.record("opaque", Tensor::scalar(2.0f), {x});
  const GradMap g = t.backward(y);
  for (float v : g.at("x").data()) CHECK(v == 0.0f);
}
