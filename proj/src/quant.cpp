#include "adaqat/quant.hpp"

#include <cmath>

#include "builtin_ops.hpp"

namespace adaqat {
namespace {

void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace

bool supported_bits(int bits) { return bits == 2 || bits == 3 || bits == 4 || bits == 8; }

std::string kind_name(QuantKind kind) { return kind == QuantKind::Weight ? "weight" : "activation"; }

void QuantParams::validate() const {
  if (!supported_bits(bits)) throw Error("unsupported bit-width " + std::to_string(bits));
  if (!(scale > 0.0f) || !std::isfinite(scale)) throw Error("quantization scale must be positive and finite");
  if (!std::isfinite(zero_point)) throw Error("quantization zero-point must be finite");
  if (kind == QuantKind::Weight && zero_point != 0.0f) throw Error("weight quantization has a fixed zero-point of 0");
}

float round_half_away(float x) { return std::round(x); }

std::int32_t q_int(float x, int bits) {
  const auto hi = code_max(bits), lo = code_min(bits);
  if (x > static_cast<float>(hi)) return hi;
  if (x <= static_cast<float>(lo)) return lo;
  if (std::isnan(x)) return 0;
  return static_cast<std::int32_t>(round_half_away(x));
}

IntTensor q_int(const Tensor& x, int bits) {
  require_real_arithmetic("q_int");
  if (!supported_bits(bits)) throw Error("unsupported bit-width " + std::to_string(bits));
  IntTensor out(x.shape(), bits);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = q_int(x[i], bits);
  return out;
}

Tensor normalize_weight(const Tensor& w, const QuantParams& params) {
  require_real_arithmetic("normalize_weight");
  if (params.kind != QuantKind::Weight) throw Error("normalize_weight needs weight quantization params");
  Tensor out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] / params.scale;
  return out;
}

Tensor normalize_activation(const Tensor& a, const QuantParams& params) {
  require_real_arithmetic("normalize_activation");
  if (params.kind != QuantKind::Activation)
    throw Error("normalize_activation needs activation quantization params");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - params.zero_point) / params.scale;
  return out;
}

QuantizedTensor quantize(const Tensor& x, const QuantParams& params) {
  params.validate();
  const Tensor normalized =
      params.kind == QuantKind::Weight ? normalize_weight(x, params) : normalize_activation(x, params);
  return {q_int(normalized, params.bits), params};
}

Tensor dequantize(const QuantizedTensor& qt) {
  require_real_arithmetic("dequantize");
  Tensor out(qt.values.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = qt.params.scale * static_cast<float>(qt.values[i]) + qt.params.zero_point;
  return out;
}

Tensor fake_quant(const Tensor& x, const QuantParams& params) {
  require_real_arithmetic("fake_quant");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float a_bar = (x[i] - params.zero_point) / params.scale;
    out[i] = params.scale * static_cast<float>(q_int(a_bar, params.bits)) + params.zero_point;
  }
  return out;
}

Tensor ste_mask(const Tensor& a_bar, int bits) {
  require_real_arithmetic("ste_mask");
  const float lo = static_cast<float>(code_min(bits)), hi = static_cast<float>(code_max(bits));
  Tensor mask(a_bar.shape());
  for (std::size_t i = 0; i < a_bar.size(); ++i) mask[i] = (a_bar[i] > lo && a_bar[i] < hi) ? 1.0f : 0.0f;
  return mask;
}

float grad_scale(const Tensor& upstream, const Tensor& a_bar, const Tensor& a_hat, const Tensor& mask) {
  require_real_arithmetic("grad_scale");
  expect_same_shape(upstream, a_bar, "grad_scale");
  expect_same_shape(upstream, a_hat, "grad_scale");
  expect_same_shape(upstream, mask, "grad_scale");
  double acc = 0.0;
  for (std::size_t i = 0; i < upstream.size(); ++i)
    acc += mask[i] != 0.0f ? static_cast<double>(upstream[i]) * (static_cast<double>(a_hat[i]) - a_bar[i])
                           : static_cast<double>(upstream[i]) * a_hat[i];
  return static_cast<float>(acc);
}

float grad_zero_point(const Tensor& upstream, const Tensor& mask) {
  require_real_arithmetic("grad_zero_point");
  expect_same_shape(upstream, mask, "grad_zero_point");
  double acc = 0.0;
  for (std::size_t i = 0; i < upstream.size(); ++i)
    if (mask[i] == 0.0f) acc += upstream[i];
  return static_cast<float>(acc);
}

Tensor grad_input(const Tensor& upstream, const Tensor& mask) {
  require_real_arithmetic("grad_input");
  expect_same_shape(upstream, mask, "grad_input");
  Tensor out(upstream.shape());
  for (std::size_t i = 0; i < upstream.size(); ++i) out[i] = upstream[i] * mask[i];
  return out;
}

namespace ops {

Var fake_quant(Tape& t, Var x, Var scale, Var zero_point, int bits) {
  require_real_arithmetic("fake_quant");
  if (!supported_bits(bits)) throw Error("unsupported bit-width " + std::to_string(bits));
  const Tensor& a = t.value(x);
  const float f = t.value(scale).item();
  const float z = t.value(zero_point).item();
  if (!(f > 0.0f)) throw Error("fake_quant: scale must be positive");
  Tensor a_bar(a.shape()), a_hat(a.shape()), out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a_bar[i] = (a[i] - z) / f;
    a_hat[i] = static_cast<float>(q_int(a_bar[i], bits));
    out[i] = f * a_hat[i] + z;
  }
  Tensor mask = ste_mask(a_bar, bits);
  SavedContext saved;
  saved.tensors = {std::move(a_bar), std::move(a_hat), std::move(mask)};
  saved.ints = {bits};
  return t.record("fake_quant", std::move(out), {x, scale, zero_point}, std::move(saved));
}

}  // namespace ops

namespace detail {

void register_quant_ops(OpRegistry& r) {
  r.register_rule("fake_quant", [](const BackwardArgs& a) {
    const Tensor& a_bar = a.saved.tensors.at(0);
    const Tensor& a_hat = a.saved.tensors.at(1);
    const Tensor& mask = a.saved.tensors.at(2);
    return std::vector<Tensor>{grad_input(a.upstream, mask),
                               Tensor::scalar(grad_scale(a.upstream, a_bar, a_hat, mask)),
                               Tensor::scalar(grad_zero_point(a.upstream, mask))};
  });
}

}  // namespace detail
}  // namespace adaqat
