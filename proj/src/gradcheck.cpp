#include "adaqat/gradcheck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <map>

#include "adaqat/layers.hpp"
#include "adaqat/quant.hpp"
#include "adaqat/rng.hpp"

namespace adaqat {
namespace {

Tensor normal_tensor(Rng& rng, Shape shape, double sd) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(sd * rng.normal());
  return t;
}

bool same_bits(float a, float b) { return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b); }

// ---- fake-quant oracle --------------------------------------------------------

struct QuantOracle {
  std::vector<float> grad_input;
  float grad_scale = 0.0f;
  float grad_zero = 0.0f;
};

QuantOracle quant_oracle(const std::vector<float>& x, const std::vector<float>& up, float f, float z, int bits) {
  const float lo = static_cast<float>(-(1 << (bits - 1)));
  const float hi = static_cast<float>((1 << (bits - 1)) - 1);
  QuantOracle o;
  double gs = 0.0, gz = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float a_bar = (x[i] - z) / f;
    float a_hat;
    if (std::isnan(a_bar))
      a_hat = 0.0f;
    else if (a_bar > hi)
      a_hat = hi;
    else if (a_bar <= lo)
      a_hat = lo;
    else
      a_hat = std::round(a_bar);
    const bool inside = a_bar > lo && a_bar < hi;
    o.grad_input.push_back(up[i] * (inside ? 1.0f : 0.0f));
    if (inside) {
      gs += static_cast<double>(up[i]) * (static_cast<double>(a_hat) - a_bar);
    } else {
      gs += static_cast<double>(up[i]) * a_hat;
      gz += up[i];
    }
  }
  o.grad_scale = static_cast<float>(gs);
  o.grad_zero = static_cast<float>(gz);
  return o;
}

CheckResult check_quant_oracle(const GradcheckOptions& opts) {
  CheckResult r{"fake_quant gradients == scalar oracle", true, opts.oracle_trials, 0.0, ""};
  Rng rng(opts.seed);
  const int bit_choices[] = {2, 3, 4, 8};
  for (int trial = 0; trial < opts.oracle_trials && r.passed; ++trial) {
    const int bits = bit_choices[rng.below(4)];
    const Shape shape = rng.below(2) ? Shape{static_cast<std::int64_t>(1 + rng.below(64))}
                                     : Shape{static_cast<std::int64_t>(1 + rng.below(64)),
                                             static_cast<std::int64_t>(1 + rng.below(64))};
    const float f = static_cast<float>(std::exp(rng.uniform(std::log(0.01), std::log(2.0))));
    const float z = static_cast<float>(rng.uniform(-1.0, 1.0));
    const double lo = code_min(bits), hi = code_max(bits);
    Tensor x(shape);
    for (auto& v : x.data()) {
      const auto pick = rng.below(10);
      double code = rng.uniform(lo - 3.0, hi + 3.0);
      if (pick == 0) code = lo;
      if (pick == 1) code = hi;
      if (pick == 2) code = std::round(code) + 0.5;
      v = static_cast<float>(z + f * code);
    }
    const Tensor up = normal_tensor(rng, shape, 1.0);

    Tape t;
    const Var xv = t.parameter("x", x);
    const Var sv = t.parameter("scale", Tensor::scalar(f));
    const Var zv = t.parameter("zero", Tensor::scalar(z));
    const Var y = ops::fake_quant(t, xv, sv, zv, bits);
    const Var loss = ops::sum(t, ops::mul(t, y, t.constant(up)));
    const GradMap g = t.backward(loss);

    const QuantOracle o = quant_oracle(x.vec(), up.vec(), f, z, bits);
    bool ok = same_bits(g.at("scale").item(), o.grad_scale) && same_bits(g.at("zero").item(), o.grad_zero);
    const auto gi = g.at("x").data();
    for (std::size_t i = 0; i < gi.size() && ok; ++i) ok = same_bits(gi[i], o.grad_input[i]);
    if (!ok) {
      r.passed = false;
      r.detail = "trial " + std::to_string(trial) + " (bits " + std::to_string(bits) + ", shape " + shape_str(shape) +
                 ") differs from the oracle";
    }
  }
  return r;
}

// ---- double-precision reference network ------------------------------------

using DVec = std::vector<double>;

double act_d(ActivationKind k, double x) {
  switch (k) {
    case ActivationKind::Identity: return x;
    case ActivationKind::ReLU: return x > 0 ? x : 0;
    case ActivationKind::LeakyReLU: return x > 0 ? x : 0.1 * x;
    case ActivationKind::Swish: return x / (1.0 + std::exp(-x));
  }
  return x;
}

DVec to_d(const Tensor& t) { return DVec(t.data().begin(), t.data().end()); }

// y[n, k] = sum_j w[k, j] x[n, j] + b[k]
DVec linear_d(const DVec& x, const DVec& w, const DVec& b, int n, int in, int out) {
  DVec y(static_cast<std::size_t>(n * out));
  for (int s = 0; s < n; ++s)
    for (int k = 0; k < out; ++k) {
      double acc = b[static_cast<std::size_t>(k)];
      for (int j = 0; j < in; ++j) acc += w[static_cast<std::size_t>(k * in + j)] * x[static_cast<std::size_t>(s * in + j)];
      y[static_cast<std::size_t>(s * out + k)] = acc;
    }
  return y;
}

double cross_entropy_d(const DVec& logits, const std::vector<std::int32_t>& labels, int n, int c) {
  double total = 0.0;
  for (int s = 0; s < n; ++s) {
    double denom = 0.0;
    for (int k = 0; k < c; ++k) denom += std::exp(logits[static_cast<std::size_t>(s * c + k)]);
    total += std::log(denom) - logits[static_cast<std::size_t>(s * c + labels[static_cast<std::size_t>(s)])];
  }
  return total / n;
}

struct ConvShape {
  int n, c, h, w, k, kh, stride, pad;
  int oh() const { return (h + 2 * pad - kh) / stride + 1; }
  int ow() const { return (w + 2 * pad - kh) / stride + 1; }
};

DVec conv_d(const DVec& x, const DVec& w, const DVec& b, const ConvShape& s) {
  DVec y(static_cast<std::size_t>(s.n * s.k * s.oh() * s.ow()));
  for (int n = 0; n < s.n; ++n)
    for (int o = 0; o < s.k; ++o)
      for (int oy = 0; oy < s.oh(); ++oy)
        for (int ox = 0; ox < s.ow(); ++ox) {
          double acc = b[static_cast<std::size_t>(o)];
          for (int c = 0; c < s.c; ++c)
            for (int ky = 0; ky < s.kh; ++ky)
              for (int kx = 0; kx < s.kh; ++kx) {
                const int iy = oy * s.stride + ky - s.pad, ix = ox * s.stride + kx - s.pad;
                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                acc += w[static_cast<std::size_t>(((o * s.c + c) * s.kh + ky) * s.kh + kx)] *
                       x[static_cast<std::size_t>(((n * s.c + c) * s.h + iy) * s.w + ix)];
              }
          y[static_cast<std::size_t>(((n * s.k + o) * s.oh() + oy) * s.ow() + ox)] = acc;
        }
  return y;
}

/// Compares every tape gradient with central differences of `loss_d`.
void compare_fd(std::map<std::string, DVec>& params, const GradMap& grads,
                const std::function<double(const std::map<std::string, DVec>&)>& loss_d, const GradcheckOptions& opts,
                CheckResult& r, int trial) {
  for (auto& [name, values] : params) {
    const auto g = grads.at(name).data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double keep = values[i];
      values[i] = keep + opts.fd_step;
      const double up = loss_d(params);
      values[i] = keep - opts.fd_step;
      const double down = loss_d(params);
      values[i] = keep;
      const double fd = (up - down) / (2.0 * opts.fd_step);
      const double err = std::abs(g[i] - fd) / std::max({std::abs(fd), std::abs(static_cast<double>(g[i])), 1e-2});
      r.max_error = std::max(r.max_error, err);
      if (err > opts.fd_tolerance && r.passed) {
        r.passed = false;
        r.detail = "trial " + std::to_string(trial) + ": d/d" + name + "[" + std::to_string(i) + "] tape " +
                   std::to_string(g[i]) + " vs finite difference " + std::to_string(fd);
      }
    }
  }
}

ActivationKind smooth_kind(Rng& rng) {
  return rng.below(2) ? ActivationKind::Swish : ActivationKind::Identity;
}

CheckResult check_fd_mlp(const GradcheckOptions& opts) {
  CheckResult r{"two-layer perceptron gradients == central differences", true, opts.fd_trials, 0.0, ""};
  Rng rng(opts.seed + 1);
  for (int trial = 0; trial < opts.fd_trials; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(4)), d = 2 + static_cast<int>(rng.below(6));
    const int h = 2 + static_cast<int>(rng.below(6)), c = 2 + static_cast<int>(rng.below(4));
    const ActivationKind kind = smooth_kind(rng);
    const Activation act{kind};
    std::map<std::string, Tensor> p{{"x", normal_tensor(rng, {n, d}, 1.0)},
                                    {"w1", normal_tensor(rng, {h, d}, 0.7)},
                                    {"b1", normal_tensor(rng, {h}, 0.3)},
                                    {"w2", normal_tensor(rng, {c, h}, 0.7)},
                                    {"b2", normal_tensor(rng, {c}, 0.3)}};
    std::vector<std::int32_t> labels;
    for (int s = 0; s < n; ++s) labels.push_back(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(c))));

    Tape t;
    std::map<std::string, Var> v;
    for (const auto& [name, value] : p) v[name] = t.parameter(name, value);
    const Var hidden = ops::activation(t, ops::linear(t, v["x"], v["w1"], v["b1"]), act);
    const Var loss = cross_entropy(t, ops::linear(t, hidden, v["w2"], v["b2"]), labels);
    const GradMap grads = t.backward(loss);

    std::map<std::string, DVec> pd;
    for (const auto& [name, value] : p) pd[name] = to_d(value);
    auto loss_d = [&](const std::map<std::string, DVec>& q) {
      DVec a = linear_d(q.at("x"), q.at("w1"), q.at("b1"), n, d, h);
      for (auto& e : a) e = act_d(kind, e);
      return cross_entropy_d(linear_d(a, q.at("w2"), q.at("b2"), n, h, c), labels, n, c);
    };
    compare_fd(pd, grads, loss_d, opts, r, trial);
  }
  return r;
}

CheckResult check_fd_conv(const GradcheckOptions& opts) {
  const int trials = std::max(1, opts.fd_trials / 4);
  CheckResult r{"convolution gradients == central differences", true, trials, 0.0, ""};
  Rng rng(opts.seed + 2);
  for (int trial = 0; trial < trials; ++trial) {
    ConvShape s{};
    s.n = 1 + static_cast<int>(rng.below(2));
    s.c = 1 + static_cast<int>(rng.below(3));
    s.kh = 1 + static_cast<int>(rng.below(3));
    s.stride = 1 + static_cast<int>(rng.below(2));
    s.pad = static_cast<int>(rng.below(2));
    s.h = s.kh + static_cast<int>(rng.below(4));
    s.w = s.kh + static_cast<int>(rng.below(4));
    s.k = 1 + static_cast<int>(rng.below(3));
    const ActivationKind kind = smooth_kind(rng);
    std::map<std::string, Tensor> p{{"x", normal_tensor(rng, {s.n, s.c, s.h, s.w}, 1.0)},
                                    {"w", normal_tensor(rng, {s.k, s.c, s.kh, s.kh}, 0.5)},
                                    {"b", normal_tensor(rng, {s.k}, 0.3)}};
    Tape t;
    std::map<std::string, Var> v;
    for (const auto& [name, value] : p) v[name] = t.parameter(name, value);
    const Var y = ops::activation(t, ops::conv2d(t, v["x"], v["w"], v["b"], {s.stride, s.pad, 0.0f}), {kind});
    const Var loss = ops::mean(t, ops::square(t, y));
    const GradMap grads = t.backward(loss);

    std::map<std::string, DVec> pd;
    for (const auto& [name, value] : p) pd[name] = to_d(value);
    auto loss_d = [&](const std::map<std::string, DVec>& q) {
      DVec out = conv_d(q.at("x"), q.at("w"), q.at("b"), s);
      double acc = 0.0;
      for (double e : out) {
        const double a = act_d(kind, e);
        acc += a * a;
      }
      return acc / static_cast<double>(out.size());
    };
    compare_fd(pd, grads, loss_d, opts, r, trial);
  }
  return r;
}

CheckResult check_swish_derivative() {
  CheckResult r{"swish derivative == central differences (1e-4)", true, 0, 0.0, ""};
  const Activation swish = Activation::swish();
  for (double x = -12.0; x <= 12.0; x += 0.0625) {
    const double h = 1e-5;
    const double fd = (act_d(ActivationKind::Swish, x + h) - act_d(ActivationKind::Swish, x - h)) / (2 * h);
    const double g = activation_derivative(swish, static_cast<float>(x));
    const double err = std::abs(g - fd) / std::max(std::abs(fd), 1e-3);
    r.max_error = std::max(r.max_error, err);
    ++r.trials;
    if (err > 1e-4 && r.passed) {
      r.passed = false;
      r.detail = "x = " + std::to_string(x) + ": " + std::to_string(g) + " vs " + std::to_string(fd);
    }
  }
  return r;
}

CheckResult check_cross_entropy(const GradcheckOptions& opts) {
  CheckResult r{"cross-entropy == summed-exponential reference (1e-6)", true, opts.fd_trials, 0.0, ""};
  Rng rng(opts.seed + 3);
  for (int trial = 0; trial < opts.fd_trials; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(8)), c = 2 + static_cast<int>(rng.below(10));
    const Tensor logits = normal_tensor(rng, {n, c}, 3.0);
    std::vector<std::int32_t> labels;
    for (int s = 0; s < n; ++s) labels.push_back(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(c))));
    Tape t;
    const double got = t.value(cross_entropy(t, t.constant(logits), labels)).item();
    const double want = cross_entropy_d(to_d(logits), labels, n, c);
    const double err = std::abs(got - want) / std::max(std::abs(want), 1.0);
    r.max_error = std::max(r.max_error, err);
    if (err > 1e-6 && r.passed) {
      r.passed = false;
      r.detail = "trial " + std::to_string(trial) + ": " + std::to_string(got) + " vs " + std::to_string(want);
    }
  }
  return r;
}

}  // namespace

std::vector<CheckResult> run_gradcheck(const GradcheckOptions& opts) {
  return {check_quant_oracle(opts), check_fd_mlp(opts), check_fd_conv(opts), check_swish_derivative(),
          check_cross_entropy(opts)};
}

}  // namespace adaqat
