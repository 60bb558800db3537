#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaqat/fixed_point.hpp"
#include "adaqat/kernels.hpp"
#include "adaqat/layers.hpp"
#include "adaqat/quant.hpp"

namespace adaqat {

/// Fractional bits carried from the activation into requantization.
inline constexpr int kActFracBits = 8;

/// Activation evaluated on int32 accumulators. LeakyReLU scales negative
/// values by a fixed-point slope; Swish indexes a 512-entry table with a
/// 9-bit requantized accumulator. Table entries are in accumulator units
/// with kActFracBits fractional bits.
struct IntegerActivation {
  static constexpr int kLutSize = 512;
  static constexpr int kLutMin = -256;
  static constexpr int kLutMax = 255;

  ActivationKind kind = ActivationKind::Identity;
  FixedPointMultiplier alpha;      // LeakyReLU
  FixedPointMultiplier lut_index;  // Swish: accumulator -> table index
  std::vector<std::int32_t> lut;   // Swish

  friend bool operator==(const IntegerActivation&, const IntegerActivation&) = default;
};

/// Builds the integer form of `act` for accumulators of real scale
/// `acc_scale`. `swish_domain` is the largest input magnitude the Swish
/// table must resolve.
IntegerActivation make_integer_activation(const Activation& act, double acc_scale, double swish_domain);

/// Activation of one accumulator, returned with `frac_bits` fractional
/// bits (0..8). With fractional bits LeakyReLU keeps the sub-unit part of
/// its product and Swish interpolates linearly between table entries.
std::int64_t integer_activation(std::int64_t acc, const IntegerActivation& act, int frac_bits);
/// As above for an input that already carries `frac_bits` fractional bits.
std::int64_t integer_activation_fixed(std::int64_t x, const IntegerActivation& act, int frac_bits);
IntTensor integer_activation(const IntTensor& acc, const IntegerActivation& act);

/// Integer-only layer: Ŵ (b_w-bit), folded int32 bias, requantization
/// multiplier, output zero-point in output codes.
struct LoweredLayer {
  LayerKind kind = LayerKind::Conv2d;
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int bits_in = 8;
  int bits_out = 8;
  QuantizedTensor q_weights;
  std::vector<std::int32_t> folded_bias;
  /// Per channel: the rounding residual of folded_bias with kBiasFracBits
  /// fractional bits, in [-2^(kBiasFracBits-1), 2^(kBiasFracBits-1)].
  std::vector<std::int32_t> bias_frac;
  FixedPointMultiplier requant;
  /// -z/f of the output params with kZeroFracBits fractional bits.
  std::int32_t out_zero = 0;
  IntegerActivation activation;
  Activation source_activation;

  /// Fan-in of one accumulator for an input of per-sample shape `in`.
  kernels::ConvGeometry geometry(const Shape& input) const;
  friend bool operator==(const LoweredLayer&, const LoweredLayer&) = default;
};

struct LoweredModel {
  Shape input_shape{1, 32, 32};
  int num_classes = 10;
  QuantParams input_params;
  std::vector<LoweredLayer> layers;
  /// Per-layer output activation params (the last one dequantizes logits).
  std::vector<QuantParams> act_params;

  const QuantParams& output_params() const { return act_params.back(); }
  void validate() const;
  friend bool operator==(const LoweredModel&, const LoweredModel&) = default;
};

/// Per output channel: round((b_k + f_w * z_A * sum_j Ŵ_kj) / (f_w * f_A)).
/// Throws LoweringError(layer_id) when a value does not fit in 32 bits.
std::vector<std::int32_t> fold_bias(const Tensor& bias, float weight_scale, float input_scale,
                                    float input_zero_point, const IntTensor& q_weights, int layer_id = -1);

inline constexpr int kBiasFracBits = 7;

/// round((exact - folded_bias) * 2^kBiasFracBits) per channel, where exact is
/// the unrounded value fold_bias rounds.
std::vector<std::int32_t> fold_bias_residual(const Tensor& bias, float weight_scale, float input_scale,
                                             float input_zero_point, const IntTensor& q_weights,
                                             const std::vector<std::int32_t>& folded);

/// Encodes f_w * f_A / f_A_next. Throws LoweringError(layer_id) when out of range.
FixedPointMultiplier compute_requant(float weight_scale, float input_scale, float output_scale,
                                     int layer_id = -1);

inline constexpr int kZeroFracBits = 16;

/// round(-z / f * 2^kZeroFracBits); the runtime adds it to the requantized
/// value before the final rounding.
std::int32_t output_zero_code(const QuantParams& out_params);
/// The zero offset rounded to a whole output code.
std::int32_t output_zero_whole(std::int32_t out_zero);

/// Lowers one trained layer. `in_params` describe its input activations.
LoweredLayer lower_layer(const Layer& layer, const QuantParams& in_params, const Shape& input_shape,
                         int layer_id);

struct LayerReport {
  int index = 0;
  std::string kind;
  std::string activation;
  float weight_scale = 0.0f;
  float in_scale = 0.0f;
  float in_zero_point = 0.0f;
  float out_scale = 0.0f;
  float out_zero_point = 0.0f;
  int bits_weight = 0;
  int bits_in = 0;
  int bits_out = 0;
  double multiplier = 0.0;
  double multiplier_encoded = 0.0;
  int mantissa = 0;
  int shift = 0;
  std::int32_t out_zero = 0;
  std::int64_t accumulator_bound = 0;
};

struct LoweringReport {
  std::vector<LayerReport> layers;
  std::int64_t weight_bytes = 0;
  std::int64_t side_bytes = 0;
  /// Deterministic JSON text.
  std::string to_json() const;
};

/// Converts every layer with fold_bias + compute_requant; aborts with the
/// layer id on the first failure.
LoweredModel lower_model(const Model& qat_model, LoweringReport* report = nullptr);

/// The single per-layer execution routine: integer conv/matmul, folded bias,
/// activation, requantization, zero-point add, clamp.
IntTensor integer_layer_forward(const IntTensor& a_hat, const LoweredLayer& layer,
                                kernels::Backend backend = kernels::default_backend());

/// Runs every layer inside an IntegerOnlyScope. Returns logits codes.
IntTensor run_integer(const LoweredModel& model, const IntTensor& input_codes,
                      std::vector<IntTensor>* per_layer = nullptr);

/// Real -> input codes (done before entering the integer path).
IntTensor quantize_input(const Tensor& batch, const QuantParams& params);

struct ResidualAddParams {
  static constexpr int kFracBits = 8;
  FixedPointMultiplier lhs;
  FixedPointMultiplier rhs;
  std::int64_t offset = 0;  // (z_a + z_b - z_out) / f_out in kFracBits fixed point
  int bits_out = 8;
};

ResidualAddParams make_residual_add(const QuantParams& lhs, const QuantParams& rhs, const QuantParams& out);
/// Each operand is rescaled to the output step with extra fractional bits,
/// summed with the reconciled zero-point offset, rounded, and clamped.
IntTensor residual_add_int(const IntTensor& lhs, const IntTensor& rhs, const ResidualAddParams& params);

struct PayloadBytes {
  std::int64_t weight = 0;
  std::int64_t side = 0;
};

/// Weight codes count one byte each; side payload is everything else the
/// integer path consumes (folded biases, multipliers, zero codes, tables,
/// input/output params).
PayloadBytes payload_bytes(const LoweredModel& model);

/// Float model equivalent to a lowered model: weights f_w * Ŵ and biases
/// recovered from the folded integers. Used by the fake-quant engine.
Model reconstruct_qat_model(const LoweredModel& lowered);

}  // namespace adaqat
