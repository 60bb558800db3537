#include "adaqat/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace adaqat {
namespace {

constexpr std::int64_t kInt32Max = std::numeric_limits<std::int32_t>::max();
constexpr std::int64_t kInt32Min = std::numeric_limits<std::int32_t>::min();

std::int32_t clamp_code(std::int64_t v, int bits) {
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(v, code_min(bits), code_max(bits)));
}

double swish(double x) { return x / (1.0 + std::exp(-x)); }

std::int64_t round_away(double x) { return static_cast<std::int64_t>(std::llround(x)); }

}  // namespace

IntegerActivation make_integer_activation(const Activation& act, double acc_scale, double swish_domain) {
  IntegerActivation ia;
  ia.kind = act.kind;
  if (act.kind == ActivationKind::LeakyReLU) ia.alpha = FixedPointMultiplier::encode(act.alpha);
  if (act.kind == ActivationKind::Swish) {
    if (!(acc_scale > 0.0) || !(swish_domain > 0.0)) throw Error("swish table needs positive scales");
    const double step = swish_domain / IntegerActivation::kLutMax;
    ia.lut_index = FixedPointMultiplier::encode(acc_scale / step);
    const double eff_step = acc_scale / ia.lut_index.value();
    ia.lut.resize(IntegerActivation::kLutSize);
    for (int i = 0; i < IntegerActivation::kLutSize; ++i) {
      const double x = (i + IntegerActivation::kLutMin) * eff_step;
      const std::int64_t v = round_away(std::ldexp(swish(x) / acc_scale, kActFracBits));
      if (v > kInt32Max || v < kInt32Min) throw OverflowError("swish table entry exceeds 32 bits");
      ia.lut[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(v);
    }
  }
  return ia;
}

std::int64_t integer_activation_fixed(std::int64_t x, const IntegerActivation& act, int frac_bits) {
  if (frac_bits < 0 || frac_bits > kActFracBits) throw Error("activation fractional bits must lie in [0, 8]");
  const std::int64_t one = std::int64_t{1} << frac_bits;
  switch (act.kind) {
    case ActivationKind::Identity:
      return x;
    case ActivationKind::ReLU:
      return std::max<std::int64_t>(x, 0);
    case ActivationKind::LeakyReLU:
      return x < 0 ? act.alpha.apply(x, 0) : x;
    case ActivationKind::Swish: {
      if (act.lut.size() != IntegerActivation::kLutSize) throw Error("swish activation without a lookup table");
      const std::int64_t idx = std::clamp<std::int64_t>(act.lut_index.apply(x, 0), IntegerActivation::kLutMin * one,
                                                        IntegerActivation::kLutMax * one);
      const std::int64_t whole = idx >> frac_bits;  // floor
      const std::int64_t rem = idx - whole * one;
      const auto at = [&](std::int64_t i) {
        return static_cast<std::int64_t>(act.lut[static_cast<std::size_t>(i - IntegerActivation::kLutMin)]);
      };
      std::int64_t value = at(whole);
      if (rem != 0) value += rounding_shift((at(whole + 1) - at(whole)) * rem, frac_bits);
      return rounding_shift(value, kActFracBits - frac_bits);
    }
  }
  return x;
}

std::int64_t integer_activation(std::int64_t v, const IntegerActivation& act, int frac_bits) {
  if (frac_bits < 0 || frac_bits > kActFracBits) throw Error("activation fractional bits must lie in [0, 8]");
  return integer_activation_fixed(v * (std::int64_t{1} << frac_bits), act, frac_bits);
}

IntTensor integer_activation(const IntTensor& acc, const IntegerActivation& act) {
  IntTensor out = acc;
  for (auto& v : out.data()) v = static_cast<std::int32_t>(integer_activation(v, act, 0));
  return out;
}

kernels::ConvGeometry LoweredLayer::geometry(const Shape& input) const {
  kernels::ConvGeometry g;
  g.batch = static_cast<int>(input.at(0));
  g.out_channels = out_channels;
  g.stride = stride;
  g.padding = padding;
  g.kernel_h = g.kernel_w = kernel;
  if (kind == LayerKind::Linear) {
    g.in_channels = static_cast<int>(shape_numel(Shape(input.begin() + 1, input.end())));
    g.in_h = g.in_w = 1;
  } else {
    if (input.size() != 4) throw ShapeError("conv layer expects [N, C, H, W] codes, got " + shape_str(input));
    g.in_channels = static_cast<int>(input[1]);
    g.in_h = static_cast<int>(input[2]);
    g.in_w = static_cast<int>(input[3]);
  }
  if (g.in_channels != in_channels)
    throw ShapeError("lowered layer expects " + std::to_string(in_channels) + " input channels, gets " +
                     shape_str(input));
  g.validate();
  return g;
}

void LoweredModel::validate() const {
  input_params.validate();
  if (act_params.size() != layers.size()) throw FormatError("lowered model needs one output param set per layer");
  int bits = input_params.bits;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LoweredLayer& l = layers[i];
    if (l.bits_in != bits)
      throw LoweringError(static_cast<int>(i), "input is " + std::to_string(l.bits_in) +
                                                   "-bit but producer emits " + std::to_string(bits) + "-bit");
    if (l.bits_out != act_params[i].bits)
      throw LoweringError(static_cast<int>(i), "output bit-width disagrees with its params");
    if (!l.q_weights.values.in_range()) throw LoweringError(static_cast<int>(i), "weight codes out of range");
    if (static_cast<int>(l.folded_bias.size()) != l.out_channels ||
        static_cast<int>(l.bias_frac.size()) != l.out_channels)
      throw LoweringError(static_cast<int>(i), "folded bias has the wrong length");
    constexpr std::int32_t frac_max = 1 << (kBiasFracBits - 1);
    for (auto r : l.bias_frac)
      if (r < -frac_max || r > frac_max) throw LoweringError(static_cast<int>(i), "bias residual out of range");
    bits = l.bits_out;
  }
}

std::vector<std::int32_t> fold_bias(const Tensor& bias, float weight_scale, float input_scale,
                                    float input_zero_point, const IntTensor& q_weights, int layer_id) {
  if (!(weight_scale > 0.0f) || !(input_scale > 0.0f)) throw LoweringError(layer_id, "scales must be positive");
  if (q_weights.rank() < 1 || q_weights.dim(0) != static_cast<std::int64_t>(bias.size()))
    throw LoweringError(layer_id, "bias length does not match weight output channels");
  const std::size_t k_n = bias.size();
  const std::size_t fan_in = q_weights.size() / k_n;
  const double fw = weight_scale, fa = input_scale, za = input_zero_point;
  std::vector<std::int32_t> out(k_n);
  for (std::size_t k = 0; k < k_n; ++k) {
    std::int64_t wsum = 0;
    for (std::size_t j = 0; j < fan_in; ++j) wsum += q_weights[k * fan_in + j];
    const double folded = (static_cast<double>(bias[k]) + fw * za * static_cast<double>(wsum)) / (fw * fa);
    if (!std::isfinite(folded) || folded > static_cast<double>(kInt32Max) || folded < static_cast<double>(kInt32Min))
      throw LoweringError(layer_id, "folded bias of channel " + std::to_string(k) + " overflows 32 bits");
    out[k] = static_cast<std::int32_t>(round_away(folded));
  }
  return out;
}

std::vector<std::int32_t> fold_bias_residual(const Tensor& bias, float weight_scale, float input_scale,
                                             float input_zero_point, const IntTensor& q_weights,
                                             const std::vector<std::int32_t>& folded) {
  const std::size_t k_n = folded.size();
  const std::size_t fan_in = q_weights.size() / k_n;
  const double fw = weight_scale, fa = input_scale, za = input_zero_point;
  std::vector<std::int32_t> out(k_n);
  for (std::size_t k = 0; k < k_n; ++k) {
    std::int64_t wsum = 0;
    for (std::size_t j = 0; j < fan_in; ++j) wsum += q_weights[k * fan_in + j];
    const double exact = (static_cast<double>(bias[k]) + fw * za * static_cast<double>(wsum)) / (fw * fa);
    out[k] = static_cast<std::int32_t>(round_away(std::ldexp(exact - folded[k], kBiasFracBits)));
  }
  return out;
}

FixedPointMultiplier compute_requant(float weight_scale, float input_scale, float output_scale, int layer_id) {
  if (!(weight_scale > 0.0f) || !(input_scale > 0.0f) || !(output_scale > 0.0f))
    throw LoweringError(layer_id, "scales must be positive");
  const double m = static_cast<double>(weight_scale) * input_scale / output_scale;
  if (!FixedPointMultiplier::representable(m))
    throw LoweringError(layer_id, "requantization multiplier " + std::to_string(m) + " is not representable");
  return FixedPointMultiplier::encode(m);
}

std::int32_t output_zero_code(const QuantParams& out) {
  const double v = std::ldexp(-static_cast<double>(out.zero_point) / out.scale, kZeroFracBits);
  if (!std::isfinite(v) || v > static_cast<double>(kInt32Max) || v < static_cast<double>(kInt32Min))
    throw Error("output zero offset does not fit 32 bits");
  return static_cast<std::int32_t>(round_away(v));
}

std::int32_t output_zero_whole(std::int32_t out_zero) {
  return static_cast<std::int32_t>(rounding_shift(out_zero, kZeroFracBits));
}

namespace {

std::int64_t accumulator_bound(const LoweredLayer& l, int fan_in) {
  std::int64_t wmax = 0;
  for (auto w : l.q_weights.values.data()) wmax = std::max<std::int64_t>(wmax, std::abs(w));
  std::int64_t bmax = 0;
  for (auto b : l.folded_bias) bmax = std::max<std::int64_t>(bmax, std::abs(static_cast<std::int64_t>(b)));
  const std::int64_t amax = -static_cast<std::int64_t>(code_min(l.bits_in));
  return wmax * amax * fan_in + bmax;
}

}  // namespace

LoweredLayer lower_layer(const Layer& layer, const QuantParams& in_params, const Shape& input_shape, int id) {
  const LayerSpec& s = layer.spec;
  try {
    s.validate();
    in_params.validate();
  } catch (const Error& e) {
    throw LoweringError(id, e.what());
  }
  LoweredLayer l;
  l.kind = s.kind;
  l.in_channels = s.in_channels;
  l.out_channels = s.out_channels;
  l.kernel = s.kernel;
  l.stride = s.stride;
  l.padding = s.padding;
  l.bits_in = in_params.bits;
  l.bits_out = s.act_params.bits;
  l.source_activation = s.activation;
  l.q_weights = quantize(layer.weight, s.weight_params);
  l.folded_bias = fold_bias(layer.bias, s.weight_params.scale, in_params.scale, in_params.zero_point,
                            l.q_weights.values, id);
  l.bias_frac = fold_bias_residual(layer.bias, s.weight_params.scale, in_params.scale, in_params.zero_point,
                                   l.q_weights.values, l.folded_bias);
  l.requant = compute_requant(s.weight_params.scale, in_params.scale, s.act_params.scale, id);
  try {
    l.out_zero = output_zero_code(s.act_params);
  } catch (const Error& e) {
    throw LoweringError(id, e.what());
  }
  const std::int32_t zero_code = output_zero_whole(l.out_zero);
  if (zero_code < code_min(l.bits_out) || zero_code > code_max(l.bits_out))
    throw LoweringError(id, "output zero code " + std::to_string(zero_code) + " outside the " +
                                std::to_string(l.bits_out) + "-bit range");
  const double acc_scale = static_cast<double>(s.weight_params.scale) * in_params.scale;
  const double out_lo = s.act_params.zero_point + static_cast<double>(s.act_params.scale) * code_min(l.bits_out);
  const double out_hi = s.act_params.zero_point + static_cast<double>(s.act_params.scale) * code_max(l.bits_out);
  const double swish_domain = std::max({std::abs(out_lo), std::abs(out_hi), 8.0});
  try {
    l.activation = make_integer_activation(s.activation, acc_scale, swish_domain);
  } catch (const Error& e) {
    throw LoweringError(id, e.what());
  }
  Shape batch_shape{1};
  batch_shape.insert(batch_shape.end(), input_shape.begin(), input_shape.end());
  const auto g = l.geometry(batch_shape);
  if (accumulator_bound(l, g.patch_size()) > kInt32Max)
    throw LoweringError(id, "worst-case accumulator exceeds 32 bits");
  return l;
}

LoweredModel lower_model(const Model& m, LoweringReport* report) {
  m.validate();
  LoweredModel out;
  out.input_shape = m.input_shape;
  out.num_classes = m.num_classes;
  out.input_params = m.input_params;
  Shape in_shape = m.input_shape;
  const auto shapes = m.output_shapes();
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const QuantParams& in_params = m.input_params_of(i);
    const int id = static_cast<int>(i);
    LoweredLayer l = lower_layer(m.layers[i], in_params, in_shape, id);
    if (report) {
      const LayerSpec& s = m.layers[i].spec;
      LayerReport r;
      r.index = id;
      r.kind = s.kind == LayerKind::Conv2d ? "conv2d" : "linear";
      r.activation = activation_name(s.activation);
      r.weight_scale = s.weight_params.scale;
      r.in_scale = in_params.scale;
      r.in_zero_point = in_params.zero_point;
      r.out_scale = s.act_params.scale;
      r.out_zero_point = s.act_params.zero_point;
      r.bits_weight = s.weight_params.bits;
      r.bits_in = l.bits_in;
      r.bits_out = l.bits_out;
      r.multiplier = static_cast<double>(s.weight_params.scale) * in_params.scale / s.act_params.scale;
      r.multiplier_encoded = l.requant.value();
      r.mantissa = l.requant.mantissa;
      r.shift = l.requant.shift;
      r.out_zero = l.out_zero;
      Shape batch_shape{1};
      batch_shape.insert(batch_shape.end(), in_shape.begin(), in_shape.end());
      r.accumulator_bound = accumulator_bound(l, l.geometry(batch_shape).patch_size());
      report->layers.push_back(r);
    }
    out.layers.push_back(std::move(l));
    out.act_params.push_back(m.layers[i].spec.act_params);
    in_shape = shapes[i];
  }
  out.validate();
  if (report) {
    const auto bytes = payload_bytes(out);
    report->weight_bytes = bytes.weight;
    report->side_bytes = bytes.side;
  }
  return out;
}

std::string LoweringReport::to_json() const {
  nlohmann::ordered_json j;
  j["weight_bytes"] = weight_bytes;
  j["side_bytes"] = side_bytes;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& r : layers) {
    nlohmann::ordered_json l;
    l["index"] = r.index;
    l["kind"] = r.kind;
    l["activation"] = r.activation;
    l["bits_weight"] = r.bits_weight;
    l["bits_in"] = r.bits_in;
    l["bits_out"] = r.bits_out;
    l["weight_scale"] = r.weight_scale;
    l["in_scale"] = r.in_scale;
    l["in_zero_point"] = r.in_zero_point;
    l["out_scale"] = r.out_scale;
    l["out_zero_point"] = r.out_zero_point;
    l["multiplier"] = r.multiplier;
    l["multiplier_encoded"] = r.multiplier_encoded;
    l["mantissa"] = r.mantissa;
    l["shift"] = r.shift;
    l["out_zero"] = r.out_zero;
    l["accumulator_bound"] = r.accumulator_bound;
    j["layers"].push_back(std::move(l));
  }
  return j.dump(2) + "\n";
}

IntTensor integer_layer_forward(const IntTensor& a_hat, const LoweredLayer& layer, kernels::Backend backend) {
  if (a_hat.bits() != layer.bits_in)
    throw Error("layer expects " + std::to_string(layer.bits_in) + "-bit codes, got " + std::to_string(a_hat.bits()));
  const auto g = layer.geometry(a_hat.shape());
  IntTensor acc({g.batch, g.out_channels, g.out_h(), g.out_w()}, 32);
  kernels::conv2d_int_accumulate(backend, g, a_hat.data(), layer.q_weights.values.data(), layer.folded_bias, 0,
                                 acc.data());
  Shape out_shape = layer.kind == LayerKind::Linear ? Shape{g.batch, g.out_channels} : acc.shape();
  IntTensor out(std::move(out_shape), layer.bits_out);
  const std::size_t plane = static_cast<std::size_t>(g.out_h() * g.out_w());
  const std::size_t channels = static_cast<std::size_t>(g.out_channels);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::int64_t x = acc[i] * (std::int64_t{1} << kActFracBits) +
                           layer.bias_frac[(i / plane) % channels] * (std::int64_t{1} << (kActFracBits - kBiasFracBits));
    const std::int64_t y = integer_activation_fixed(x, layer.activation, kActFracBits);
    out[i] = clamp_code(
        rounding_shift(layer.requant.apply(y, kZeroFracBits - kActFracBits) + layer.out_zero, kZeroFracBits),
        layer.bits_out);
  }
  return out;
}

IntTensor run_integer(const LoweredModel& model, const IntTensor& input_codes, std::vector<IntTensor>* per_layer) {
  IntegerOnlyScope integer_only;
  IntTensor x = input_codes;
  for (const auto& layer : model.layers) {
    x = integer_layer_forward(x, layer);
    if (per_layer) per_layer->push_back(x);
  }
  return x;
}

IntTensor quantize_input(const Tensor& batch, const QuantParams& params) {
  return quantize(batch, params).values;
}

ResidualAddParams make_residual_add(const QuantParams& lhs, const QuantParams& rhs, const QuantParams& out) {
  lhs.validate();
  rhs.validate();
  out.validate();
  ResidualAddParams p;
  p.lhs = FixedPointMultiplier::encode(static_cast<double>(lhs.scale) / out.scale);
  p.rhs = FixedPointMultiplier::encode(static_cast<double>(rhs.scale) / out.scale);
  const double offset = (static_cast<double>(lhs.zero_point) + rhs.zero_point - out.zero_point) / out.scale;
  p.offset = round_away(std::ldexp(offset, ResidualAddParams::kFracBits));
  p.bits_out = out.bits;
  return p;
}

IntTensor residual_add_int(const IntTensor& lhs, const IntTensor& rhs, const ResidualAddParams& p) {
  if (lhs.shape() != rhs.shape())
    throw ShapeError("residual add: " + shape_str(lhs.shape()) + " vs " + shape_str(rhs.shape()));
  IntTensor out(lhs.shape(), p.bits_out);
  constexpr int frac = ResidualAddParams::kFracBits;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::int64_t sum = p.lhs.apply(lhs[i], frac) + p.rhs.apply(rhs[i], frac) + p.offset;
    out[i] = clamp_code(rounding_shift(sum, frac), p.bits_out);
  }
  return out;
}

PayloadBytes payload_bytes(const LoweredModel& model) {
  constexpr std::int64_t kMultiplierBytes = 3;  // int16 mantissa + int8 shift
  constexpr std::int64_t kParamBytes = 9;       // bits + scale + zero-point
  PayloadBytes b;
  for (const auto& l : model.layers) {
    b.weight += static_cast<std::int64_t>(l.q_weights.values.size());
    b.side += 4 * static_cast<std::int64_t>(l.folded_bias.size()) + static_cast<std::int64_t>(l.bias_frac.size());
    b.side += kMultiplierBytes + 4 + 2;  // requant, out_zero, bit-widths
    if (l.activation.kind == ActivationKind::LeakyReLU) b.side += kMultiplierBytes;
    if (l.activation.kind == ActivationKind::Swish)
      b.side += kMultiplierBytes + 4 * static_cast<std::int64_t>(l.activation.lut.size());
  }
  b.side += 2 * kParamBytes;
  return b;
}

Model reconstruct_qat_model(const LoweredModel& lowered) {
  lowered.validate();
  Model m;
  m.input_shape = lowered.input_shape;
  m.num_classes = lowered.num_classes;
  m.stage = Stage::Qat;
  m.input_params = lowered.input_params;
  for (std::size_t i = 0; i < lowered.layers.size(); ++i) {
    const LoweredLayer& l = lowered.layers[i];
    const QuantParams& in = i == 0 ? lowered.input_params : lowered.act_params[i - 1];
    Layer layer;
    layer.spec.kind = l.kind;
    layer.spec.in_channels = l.in_channels;
    layer.spec.out_channels = l.out_channels;
    layer.spec.kernel = l.kernel;
    layer.spec.stride = l.stride;
    layer.spec.padding = l.padding;
    layer.spec.activation = l.source_activation;
    layer.spec.weight_params = l.q_weights.params;
    layer.spec.act_params = lowered.act_params[i];
    layer.spec.first = i == 0;
    layer.spec.last = i + 1 == lowered.layers.size();
    layer.weight = dequantize(l.q_weights).reshaped(layer.spec.weight_shape());
    const double fw = l.q_weights.params.scale;
    const std::size_t fan_in = l.q_weights.values.size() / static_cast<std::size_t>(l.out_channels);
    layer.bias = Tensor({l.out_channels});
    for (int k = 0; k < l.out_channels; ++k) {
      std::int64_t wsum = 0;
      for (std::size_t j = 0; j < fan_in; ++j) wsum += l.q_weights.values[k * fan_in + j];
      const double folded = l.folded_bias[static_cast<std::size_t>(k)] +
                            std::ldexp(l.bias_frac[static_cast<std::size_t>(k)], -kBiasFracBits);
      layer.bias[k] = static_cast<float>(fw * in.scale * folded -
                                         fw * in.zero_point * static_cast<double>(wsum));
    }
    m.layers.push_back(std::move(layer));
  }
  m.validate();
  return m;
}

}  // namespace adaqat
