#include "adaqat/ops.hpp"

#include <charconv>
#include <cmath>

#include "builtin_ops.hpp"

namespace adaqat {
namespace {

float stable_sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

kernels::ConvGeometry conv_geometry(const Shape& x, const Shape& w, int stride, int padding) {
  if (x.size() != 4 || w.size() != 4)
    throw ShapeError("conv2d: expected 4-D input and weight, got " + shape_str(x) + " and " + shape_str(w));
  if (x[1] != w[1])
    throw ShapeError("conv2d: input has " + std::to_string(x[1]) + " channels but weight expects " +
                     std::to_string(w[1]) + " (input " + shape_str(x) + ", weight " + shape_str(w) + ")");
  kernels::ConvGeometry g;
  g.batch = static_cast<int>(x[0]);
  g.in_channels = static_cast<int>(x[1]);
  g.in_h = static_cast<int>(x[2]);
  g.in_w = static_cast<int>(x[3]);
  g.out_channels = static_cast<int>(w[0]);
  g.kernel_h = static_cast<int>(w[2]);
  g.kernel_w = static_cast<int>(w[3]);
  g.stride = stride;
  g.padding = padding;
  g.validate();
  return g;
}

}  // namespace

std::string activation_name(const Activation& act) {
  switch (act.kind) {
    case ActivationKind::Identity: return "identity";
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::Swish: return "swish";
    case ActivationKind::LeakyReLU: {
      char buf[32];
      auto res = std::to_chars(buf, buf + sizeof buf, act.alpha);
      return "leaky_relu:" + std::string(buf, res.ptr);
    }
  }
  return "identity";
}

Activation parse_activation(std::string_view text) {
  if (text == "identity") return Activation::identity();
  if (text == "relu") return Activation::relu();
  if (text == "swish") return Activation::swish();
  if (text == "leaky_relu") return Activation::leaky_relu();
  if (text.starts_with("leaky_relu:")) {
    auto num = text.substr(11);
    float alpha = 0.0f;
    auto res = std::from_chars(num.data(), num.data() + num.size(), alpha);
    if (res.ec != std::errc() || res.ptr != num.data() + num.size() || !(alpha > 0.0f) || alpha >= 1.0f)
      throw Error("invalid leaky_relu slope in '" + std::string(text) + "'");
    return Activation::leaky_relu(alpha);
  }
  throw Error("unknown activation '" + std::string(text) + "'");
}

float activation_value(const Activation& act, float x) {
  switch (act.kind) {
    case ActivationKind::Identity: return x;
    case ActivationKind::ReLU: return x > 0.0f ? x : 0.0f;
    case ActivationKind::LeakyReLU: return x >= 0.0f ? x : act.alpha * x;
    case ActivationKind::Swish: return x * stable_sigmoid(x);
  }
  return x;
}

float activation_derivative(const Activation& act, float x) {
  switch (act.kind) {
    case ActivationKind::Identity: return 1.0f;
    case ActivationKind::ReLU: return x > 0.0f ? 1.0f : 0.0f;
    case ActivationKind::LeakyReLU: return x >= 0.0f ? 1.0f : act.alpha;
    case ActivationKind::Swish: {
      const float s = stable_sigmoid(x);
      return s + x * s * (1.0f - s);
    }
  }
  return 1.0f;
}

namespace ops {

Var add(Tape& t, Var a, Var b) {
  require_real_arithmetic("add");
  const Tensor &x = t.value(a), &y = t.value(b);
  expect_same_shape(x, y, "add");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return t.record("add", std::move(out), {a, b});
}

Var sub(Tape& t, Var a, Var b) {
  require_real_arithmetic("sub");
  const Tensor &x = t.value(a), &y = t.value(b);
  expect_same_shape(x, y, "sub");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return t.record("sub", std::move(out), {a, b});
}

Var mul(Tape& t, Var a, Var b) {
  require_real_arithmetic("mul");
  const Tensor &x = t.value(a), &y = t.value(b);
  expect_same_shape(x, y, "mul");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return t.record("mul", std::move(out), {a, b});
}

Var scale(Tape& t, Var a, float c) {
  require_real_arithmetic("scale");
  SavedContext s;
  s.scalars = {c};
  return t.record("scale", map(t.value(a), [c](float v) { return v * c; }), {a}, std::move(s));
}

Var add_scalar(Tape& t, Var a, float c) {
  require_real_arithmetic("add_scalar");
  return t.record("add_scalar", map(t.value(a), [c](float v) { return v + c; }), {a});
}

Var square(Tape& t, Var a) {
  require_real_arithmetic("square");
  return t.record("square", map(t.value(a), [](float v) { return v * v; }), {a});
}

Var sum(Tape& t, Var a) {
  require_real_arithmetic("sum");
  double acc = 0.0;
  for (float v : t.value(a).data()) acc += v;
  return t.record("sum", Tensor::scalar(static_cast<float>(acc)), {a});
}

Var mean(Tape& t, Var a) {
  require_real_arithmetic("mean");
  const Tensor& x = t.value(a);
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  return t.record("mean", Tensor::scalar(static_cast<float>(acc / static_cast<double>(x.size()))), {a});
}

Var reshape(Tape& t, Var a, Shape shape) {
  return t.record("reshape", t.value(a).reshaped(std::move(shape)), {a});
}

Var flatten(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  if (x.rank() < 2) throw ShapeError("flatten: expected rank >= 2, got " + shape_str(x.shape()));
  const auto n = x.dim(0);
  return reshape(t, a, {n, static_cast<std::int64_t>(x.size()) / n});
}

Var bias_add(Tape& t, Var xv, Var bv) {
  require_real_arithmetic("bias_add");
  const Tensor &x = t.value(xv), &b = t.value(bv);
  if (x.rank() < 2 || b.rank() != 1 || b.dim(0) != x.dim(1))
    throw ShapeError("bias_add: bias " + shape_str(b.shape()) + " does not match channels of " +
                     shape_str(x.shape()));
  const std::int64_t n = x.dim(0), k = x.dim(1);
  const std::int64_t inner = static_cast<std::int64_t>(x.size()) / (n * k);
  Tensor out = x;
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t c = 0; c < k; ++c)
      for (std::int64_t i = 0; i < inner; ++i) out[(s * k + c) * inner + i] += b[c];
  return t.record("bias_add", std::move(out), {xv, bv});
}

Var conv2d(Tape& t, Var xv, Var wv, Var bv, const Conv2dOptions& opts) {
  const Tensor &x = t.value(xv), &w = t.value(wv);
  const auto g = conv_geometry(x.shape(), w.shape(), opts.stride, opts.padding);
  std::span<const float> bias;
  if (bv.valid()) {
    const Tensor& b = t.value(bv);
    if (b.rank() != 1 || b.dim(0) != g.out_channels)
      throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " does not match " +
                       std::to_string(g.out_channels) + " output channels");
    bias = b.data();
  }
  Tensor out({g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward(kernels::default_backend(), g, x.data(), w.data(), bias, opts.pad_value, out.data());
  SavedContext s;
  s.ints = {opts.stride, opts.padding};
  s.scalars = {opts.pad_value};
  std::vector<Var> inputs{xv, wv};
  if (bv.valid()) inputs.push_back(bv);
  return t.record("conv2d", std::move(out), std::move(inputs), std::move(s));
}

Var linear(Tape& t, Var xv, Var wv, Var bv) {
  const Tensor &x = t.value(xv), &w = t.value(wv);
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  const int n = static_cast<int>(x.dim(0)), f = static_cast<int>(x.dim(1)), k = static_cast<int>(w.dim(0));
  std::span<const float> bias;
  if (bv.valid()) {
    const Tensor& b = t.value(bv);
    if (b.rank() != 1 || b.dim(0) != k)
      throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match " + std::to_string(k) +
                       " outputs");
    bias = b.data();
  }
  Tensor out({n, k});
  kernels::linear_forward(kernels::default_backend(), n, f, k, x.data(), w.data(), bias, out.data());
  std::vector<Var> inputs{xv, wv};
  if (bv.valid()) inputs.push_back(bv);
  return t.record("linear", std::move(out), std::move(inputs));
}

Var activation(Tape& t, Var x, const Activation& act) {
  require_real_arithmetic("activation");
  SavedContext s;
  s.ints = {static_cast<std::int64_t>(act.kind)};
  s.scalars = {act.alpha};
  return t.record("activation", map(t.value(x), [&](float v) { return activation_value(act, v); }), {x},
                  std::move(s));
}

Var sigmoid(Tape& t, Var x) {
  require_real_arithmetic("sigmoid");
  return t.record("sigmoid", map(t.value(x), stable_sigmoid), {x});
}

}  // namespace ops

namespace detail {

void register_tensor_ops(OpRegistry& r) {
  r.register_rule("add", [](const BackwardArgs& a) { return std::vector<Tensor>{a.upstream, a.upstream}; });
  r.register_rule("sub", [](const BackwardArgs& a) {
    return std::vector<Tensor>{a.upstream, map(a.upstream, [](float v) { return -v; })};
  });
  r.register_rule("mul", [](const BackwardArgs& a) {
    const Tensor &x = *a.inputs[0], &y = *a.inputs[1];
    Tensor gx(x.shape()), gy(y.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      gx[i] = a.upstream[i] * y[i];
      gy[i] = a.upstream[i] * x[i];
    }
    return std::vector<Tensor>{std::move(gx), std::move(gy)};
  });
  r.register_rule("scale", [](const BackwardArgs& a) {
    const float c = static_cast<float>(a.saved.scalars.at(0));
    return std::vector<Tensor>{map(a.upstream, [c](float v) { return v * c; })};
  });
  r.register_rule("add_scalar", [](const BackwardArgs& a) { return std::vector<Tensor>{a.upstream}; });
  r.register_rule("square", [](const BackwardArgs& a) {
    const Tensor& x = *a.inputs[0];
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0f * x[i] * a.upstream[i];
    return std::vector<Tensor>{std::move(g)};
  });
  r.register_rule("sum", [](const BackwardArgs& a) {
    return std::vector<Tensor>{Tensor(a.inputs[0]->shape(), a.upstream.item())};
  });
  r.register_rule("mean", [](const BackwardArgs& a) {
    const Tensor& x = *a.inputs[0];
    return std::vector<Tensor>{Tensor(x.shape(), a.upstream.item() / static_cast<float>(x.size()))};
  });
  r.register_rule("reshape", [](const BackwardArgs& a) {
    return std::vector<Tensor>{a.upstream.reshaped(a.inputs[0]->shape())};
  });
  r.register_rule("bias_add", [](const BackwardArgs& a) {
    const Tensor& x = *a.inputs[0];
    const std::int64_t n = x.dim(0), k = x.dim(1);
    const std::int64_t inner = static_cast<std::int64_t>(x.size()) / (n * k);
    Tensor gb({k});
    for (std::int64_t c = 0; c < k; ++c) {
      float acc = 0.0f;
      for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t i = 0; i < inner; ++i) acc += a.upstream[(s * k + c) * inner + i];
      gb[c] = acc;
    }
    return std::vector<Tensor>{a.upstream, std::move(gb)};
  });
  r.register_rule("conv2d", [](const BackwardArgs& a) {
    const Tensor &x = *a.inputs[0], &w = *a.inputs[1];
    const auto g = conv_geometry(x.shape(), w.shape(), static_cast<int>(a.saved.ints.at(0)),
                                 static_cast<int>(a.saved.ints.at(1)));
    const float pad_value = static_cast<float>(a.saved.scalars.at(0));
    const auto be = kernels::default_backend();
    Tensor gx(x.shape()), gw(w.shape());
    kernels::conv2d_backward_input(be, g, w.data(), a.upstream.data(), gx.data());
    kernels::conv2d_backward_weight(be, g, x.data(), a.upstream.data(), pad_value, gw.data());
    std::vector<Tensor> grads{std::move(gx), std::move(gw)};
    if (a.inputs.size() == 3) {
      const std::int64_t plane = std::int64_t{g.out_h()} * g.out_w();
      Tensor gb({g.out_channels});
      for (int k = 0; k < g.out_channels; ++k) {
        float acc = 0.0f;
        for (int n = 0; n < g.batch; ++n)
          for (std::int64_t p = 0; p < plane; ++p) acc += a.upstream[(std::int64_t{n} * g.out_channels + k) * plane + p];
        gb[k] = acc;
      }
      grads.push_back(std::move(gb));
    }
    return grads;
  });
  r.register_rule("linear", [](const BackwardArgs& a) {
    const Tensor &x = *a.inputs[0], &w = *a.inputs[1];
    const int n = static_cast<int>(x.dim(0)), f = static_cast<int>(x.dim(1)), k = static_cast<int>(w.dim(0));
    const auto be = kernels::default_backend();
    Tensor gx(x.shape()), gw(w.shape());
    kernels::linear_backward_input(be, n, f, k, w.data(), a.upstream.data(), gx.data());
    kernels::linear_backward_weight(be, n, f, k, x.data(), a.upstream.data(), gw.data());
    std::vector<Tensor> grads{std::move(gx), std::move(gw)};
    if (a.inputs.size() == 3) {
      Tensor gb({k});
      for (int o = 0; o < k; ++o) {
        float acc = 0.0f;
        for (int s = 0; s < n; ++s) acc += a.upstream[std::int64_t{s} * k + o];
        gb[o] = acc;
      }
      grads.push_back(std::move(gb));
    }
    return grads;
  });
  r.register_rule("activation", [](const BackwardArgs& a) {
    const Activation act{static_cast<ActivationKind>(a.saved.ints.at(0)), static_cast<float>(a.saved.scalars.at(0))};
    const Tensor& x = *a.inputs[0];
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = a.upstream[i] * activation_derivative(act, x[i]);
    return std::vector<Tensor>{std::move(g)};
  });
  r.register_rule("sigmoid", [](const BackwardArgs& a) {
    Tensor g(a.output.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = a.upstream[i] * a.output[i] * (1.0f - a.output[i]);
    return std::vector<Tensor>{std::move(g)};
  });
}

}  // namespace detail
}  // namespace adaqat
