#pragma once

#include <cstdint>
#include <string>

#include "adaqat/autodiff.hpp"
#include "adaqat/tensor.hpp"

namespace adaqat {

enum class QuantKind { Weight, Activation };

/// Smallest admissible scale; applied after every parameter update.
inline constexpr float kScaleFloor = 1e-6f;

/// Per-tensor quantization state. A real value A maps to the code
/// q_int((A - zero_point) / scale) and back to scale * code + zero_point.
struct QuantParams {
  int bits = 4;
  float scale = 1.0f;
  float zero_point = 0.0f;  // always 0 for weights
  QuantKind kind = QuantKind::Activation;

  static QuantParams weight(int bits, float scale) { return {bits, scale, 0.0f, QuantKind::Weight}; }
  static QuantParams activation(int bits, float scale, float zero_point) {
    return {bits, scale, zero_point, QuantKind::Activation};
  }

  std::int32_t lower() const { return code_min(bits); }
  std::int32_t upper() const { return code_max(bits); }
  /// Throws Error if bits is unsupported, scale <= 0, or a weight carries a
  /// non-zero zero-point.
  void validate() const;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

bool supported_bits(int bits);
std::string kind_name(QuantKind kind);

/// Round half away from zero.
float round_half_away(float x);

/// Clamp-then-round onto [-2^(bits-1), 2^(bits-1)-1]: x > upper maps to
/// upper, x <= lower maps to lower, otherwise round(x). NaN maps to 0.
std::int32_t q_int(float x, int bits);
IntTensor q_int(const Tensor& x, int bits);

Tensor normalize_weight(const Tensor& w, const QuantParams& params);
Tensor normalize_activation(const Tensor& a, const QuantParams& params);

struct QuantizedTensor {
  IntTensor values;
  QuantParams params;

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

QuantizedTensor quantize(const Tensor& x, const QuantParams& params);
Tensor dequantize(const QuantizedTensor& qt);

/// scale * q_int((x - zero_point) / scale) + zero_point, without a tape.
Tensor fake_quant(const Tensor& x, const QuantParams& params);

/// 1 where lower < a_bar < upper (open at both ends), else 0.
Tensor ste_mask(const Tensor& a_bar, int bits);

/// Scale gradient: sum of upstream * (a_hat - a_bar) over in-range elements
/// plus upstream * a_hat over clamped ones. Terms and the running sum are
/// evaluated in double in element order, then rounded to float.
float grad_scale(const Tensor& upstream, const Tensor& a_bar, const Tensor& a_hat, const Tensor& mask);
/// Zero-point gradient: sum of upstream over clamped elements.
float grad_zero_point(const Tensor& upstream, const Tensor& mask);
/// Straight-through input gradient: upstream * mask.
Tensor grad_input(const Tensor& upstream, const Tensor& mask);

namespace ops {

/// Differentiable fake quantization. `scale` and `zero_point` are scalar
/// ({1}) values; pass a constant zero for weights. Backward produces the
/// straight-through input gradient and the learned scale / zero-point
/// gradients above.
Var fake_quant(Tape& t, Var x, Var scale, Var zero_point, int bits);

}  // namespace ops
}  // namespace adaqat
