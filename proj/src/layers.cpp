#include "adaqat/layers.hpp"

#include <algorithm>
#include <cmath>

#include "adaqat/rng.hpp"
#include "builtin_ops.hpp"

namespace adaqat {

Shape LayerSpec::weight_shape() const {
  if (kind == LayerKind::Linear) return {out_channels, in_channels};
  return {out_channels, in_channels, kernel, kernel};
}

void LayerSpec::validate() const {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || padding < 0)
    throw ShapeError("layer geometry must be positive");
  if (kind == LayerKind::Linear && (kernel != 1 || stride != 1 || padding != 0))
    throw ShapeError("linear layers have a 1x1 kernel, stride 1, no padding");
  weight_params.validate();
  act_params.validate();
  if (weight_params.kind != QuantKind::Weight) throw Error("layer weight params must be of weight kind");
  if (act_params.kind != QuantKind::Activation) throw Error("layer output params must be of activation kind");
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::Float: return "float";
    case Stage::Qat: return "qat";
    case Stage::Lowered: return "lowered";
  }
  return "float";
}

Stage parse_stage(std::string_view text) {
  if (text == "float") return Stage::Float;
  if (text == "qat") return Stage::Qat;
  if (text == "lowered") return Stage::Lowered;
  throw FormatError("unknown stage '" + std::string(text) + "'");
}

std::vector<Shape> Model::output_shapes() const {
  if (input_shape.size() != 3) throw ShapeError("model input shape must be [C, H, W]");
  std::vector<Shape> shapes;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& s = layers[i].spec;
    if (s.kind == LayerKind::Conv2d) {
      if (cur.size() != 3) throw ShapeError("layer " + std::to_string(i) + ": conv after a linear layer");
      kernels::ConvGeometry g;
      g.in_channels = static_cast<int>(cur[0]);
      g.in_h = static_cast<int>(cur[1]);
      g.in_w = static_cast<int>(cur[2]);
      g.out_channels = s.out_channels;
      g.kernel_h = g.kernel_w = s.kernel;
      g.stride = s.stride;
      g.padding = s.padding;
      if (g.in_channels != s.in_channels)
        throw ShapeError("layer " + std::to_string(i) + ": expects " + std::to_string(s.in_channels) +
                         " input channels, gets " + shape_str(cur));
      g.validate();
      cur = {s.out_channels, g.out_h(), g.out_w()};
    } else {
      const auto features = shape_numel(cur);
      if (features != s.in_channels)
        throw ShapeError("layer " + std::to_string(i) + ": expects " + std::to_string(s.in_channels) +
                         " features, gets " + shape_str(cur));
      cur = {s.out_channels};
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void Model::validate() const {
  input_params.validate();
  if (input_params.kind != QuantKind::Activation) throw Error("input params must be of activation kind");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    try {
      l.spec.validate();
    } catch (const Error& e) {
      throw Error("layer " + std::to_string(i) + ": " + e.what());
    }
    if (l.weight.shape() != l.spec.weight_shape())
      throw ShapeError("layer " + std::to_string(i) + ": weight shape " + shape_str(l.weight.shape()) +
                       " expected " + shape_str(l.spec.weight_shape()));
    if (l.bias.shape() != Shape{l.spec.out_channels})
      throw ShapeError("layer " + std::to_string(i) + ": bias shape " + shape_str(l.bias.shape()));
  }
  const auto shapes = output_shapes();
  if (!shapes.empty() && shape_numel(shapes.back()) != num_classes)
    throw ShapeError("model produces " + shape_str(shapes.back()) + " outputs for " +
                     std::to_string(num_classes) + " classes");
}

const QuantParams& Model::input_params_of(std::size_t layer) const {
  return layer == 0 ? input_params : layers.at(layer - 1).spec.act_params;
}

void apply_bit_policy(Model& model, int bits, int first_last_bits) {
  if (!supported_bits(bits) || !supported_bits(first_last_bits)) throw Error("unsupported bit-width");
  const std::size_t n = model.layers.size();
  model.input_params.bits = first_last_bits;
  for (std::size_t i = 0; i < n; ++i) {
    LayerSpec& s = model.layers[i].spec;
    s.first = i == 0;
    s.last = i + 1 == n;
    s.weight_params.bits = (s.first || s.last) ? first_last_bits : bits;
    const bool feeds_last = i + 2 == n;
    s.act_params.bits = (s.last || feeds_last) ? first_last_bits : bits;
  }
}

Model make_desk_cnn(const Activation& act, std::uint64_t seed, int num_classes) {
  Model m;
  m.input_shape = {1, 32, 32};
  m.num_classes = num_classes;
  auto conv = [&](int in, int out, int k, int s) {
    LayerSpec spec;
    spec.kind = LayerKind::Conv2d;
    spec.in_channels = in;
    spec.out_channels = out;
    spec.kernel = k;
    spec.stride = s;
    spec.activation = act;
    return spec;
  };
  auto linear = [&](int in, int out, Activation a) {
    LayerSpec spec;
    spec.kind = LayerKind::Linear;
    spec.in_channels = in;
    spec.out_channels = out;
    spec.activation = a;
    return spec;
  };
  // 32 -> 15 -> 7 -> 5
  const std::vector<LayerSpec> specs{conv(1, 8, 4, 2), conv(8, 16, 3, 2), conv(16, 64, 3, 1),
                                     linear(64 * 5 * 5, 64, act), linear(64, num_classes, Activation::identity())};
  Rng rng(seed);
  for (const auto& spec : specs) {
    Layer l;
    l.spec = spec;
    l.weight = Tensor(spec.weight_shape());
    const float stdev = std::sqrt(2.0f / static_cast<float>(spec.in_channels * spec.kernel * spec.kernel));
    for (auto& w : l.weight.data()) w = static_cast<float>(rng.normal()) * stdev;
    l.bias = Tensor({spec.out_channels}, 0.0f);
    m.layers.push_back(std::move(l));
  }
  apply_bit_policy(m, 4, 8);
  m.validate();
  return m;
}

std::string weight_name(std::size_t i) { return "L" + std::to_string(i) + ".weight"; }
std::string bias_name(std::size_t i) { return "L" + std::to_string(i) + ".bias"; }
std::string weight_scale_name(std::size_t i) { return "L" + std::to_string(i) + ".w_scale"; }
std::string act_scale_name(std::size_t i) { return "L" + std::to_string(i) + ".act_scale"; }
std::string act_zero_name(std::size_t i) { return "L" + std::to_string(i) + ".act_zero"; }

namespace {

Var layer_linear_part(Tape& t, Var input, const LayerSpec& spec, Var weight, Var bias, float pad_value) {
  if (spec.kind == LayerKind::Conv2d)
    return ops::conv2d(t, input, weight, bias, {spec.stride, spec.padding, pad_value});
  Var x = t.value(input).rank() == 2 ? input : ops::flatten(t, input);
  return ops::linear(t, x, weight, bias);
}

}  // namespace

Var layer_forward_qat(Tape& t, Var input, const LayerSpec& spec, const LayerVars& v, float input_zero_point) {
  Var wq = ops::fake_quant(t, v.weight, v.weight_scale, v.weight_zero, spec.weight_params.bits);
  Var y = layer_linear_part(t, input, spec, wq, v.bias, input_zero_point);
  Var g = ops::activation(t, y, spec.activation);
  return ops::fake_quant(t, g, v.act_scale, v.act_zero, spec.act_params.bits);
}

Var layer_forward_float(Tape& t, Var input, const LayerSpec& spec, Var weight, Var bias) {
  Var y = layer_linear_part(t, input, spec, weight, bias, 0.0f);
  return ops::activation(t, y, spec.activation);
}

ForwardResult forward(Tape& t, const Model& model, const Tensor& batch, const ForwardOptions& opts) {
  Shape expected{batch.rank() > 0 ? batch.dim(0) : 0};
  expected.insert(expected.end(), model.input_shape.begin(), model.input_shape.end());
  if (batch.shape() != expected)
    throw ShapeError("forward: batch shape " + shape_str(batch.shape()) + " does not match model input " +
                     shape_str(model.input_shape));

  auto leaf = [&](const std::string& name, Tensor value, bool trainable) {
    return trainable ? t.parameter(name, std::move(value)) : t.constant(std::move(value));
  };
  const bool qat = opts.mode == ForwardMode::FakeQuant;
  ForwardResult r;
  Var x = t.constant(batch);
  if (qat) {
    const QuantParams& ip = model.input_params;
    Var s = leaf(kInputScaleName, Tensor::scalar(ip.scale), opts.trainable);
    Var z = leaf(kInputZeroName, Tensor::scalar(ip.zero_point), opts.trainable && opts.train_zero_points);
    x = ops::fake_quant(t, x, s, z, ip.bits);
  }
  r.input = x;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    LayerVars v;
    v.weight = leaf(weight_name(i), l.weight, opts.trainable);
    v.bias = leaf(bias_name(i), l.bias, opts.trainable);
    if (qat) {
      v.weight_scale = leaf(weight_scale_name(i), Tensor::scalar(l.spec.weight_params.scale), opts.trainable);
      v.weight_zero = t.constant(Tensor::scalar(0.0f));
      v.act_scale = leaf(act_scale_name(i), Tensor::scalar(l.spec.act_params.scale), opts.trainable);
      v.act_zero = leaf(act_zero_name(i), Tensor::scalar(l.spec.act_params.zero_point),
                        opts.trainable && opts.train_zero_points);
      x = layer_forward_qat(t, x, l.spec, v, model.input_params_of(i).zero_point);
      r.pre_quant.push_back(t.node(x).inputs.front());
    } else {
      x = layer_forward_float(t, x, l.spec, v.weight, v.bias);
      r.pre_quant.push_back(x);
    }
    r.outputs.push_back(x);
  }
  r.logits = x;
  return r;
}

Var shortcut_add_qat(Tape& t, Var a, Var b, Var scale, Var zero_point, int bits) {
  return ops::fake_quant(t, ops::add(t, a, b), scale, zero_point, bits);
}

Var cross_entropy(Tape& t, Var logits_var, std::span<const std::int32_t> labels) {
  require_real_arithmetic("cross_entropy");
  const Tensor& logits = t.value(logits_var);
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [N, C], got " + shape_str(logits.shape()));
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(n));
  Tensor probs(logits.shape());
  double total = 0.0;
  SavedContext saved;
  for (std::int64_t s = 0; s < n; ++s) {
    const auto label = labels[s];
    if (label < 0 || label >= c)
      throw Error("cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(c) + ")");
    const float* row = logits.data().data() + s * c;
    const float mx = *std::max_element(row, row + c);
    double denom = 0.0;
    for (std::int64_t k = 0; k < c; ++k) denom += std::exp(static_cast<double>(row[k] - mx));
    for (std::int64_t k = 0; k < c; ++k)
      probs[s * c + k] = static_cast<float>(std::exp(static_cast<double>(row[k] - mx)) / denom);
    total += std::log(denom) - static_cast<double>(row[label] - mx);
    saved.ints.push_back(label);
  }
  saved.tensors.push_back(std::move(probs));
  return t.record("cross_entropy", Tensor::scalar(static_cast<float>(total / static_cast<double>(n))),
                  {logits_var}, std::move(saved));
}

namespace detail {

void register_layer_ops(OpRegistry& r) {
  r.register_rule("cross_entropy", [](const BackwardArgs& a) {
    const Tensor& probs = a.saved.tensors.at(0);
    const std::int64_t n = probs.dim(0), c = probs.dim(1);
    const float up = a.upstream.item() / static_cast<float>(n);
    Tensor g(probs.shape());
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t k = 0; k < c; ++k) {
        const float onehot = a.saved.ints[s] == k ? 1.0f : 0.0f;
        g[s * c + k] = (probs[s * c + k] - onehot) * up;
      }
    return std::vector<Tensor>{std::move(g)};
  });
}

}  // namespace detail
}  // namespace adaqat
