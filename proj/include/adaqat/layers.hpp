#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adaqat/autodiff.hpp"
#include "adaqat/ops.hpp"
#include "adaqat/quant.hpp"

namespace adaqat {

enum class LayerKind { Conv2d, Linear };

/// One conv or linear layer with its output activation and quantization
/// state. For linear layers in/out channels are the feature counts and the
/// kernel is 1x1.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv2d;
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  Activation activation;
  QuantParams weight_params = QuantParams::weight(4, 1.0f);
  QuantParams act_params = QuantParams::activation(4, 1.0f, 0.0f);  // for this layer's output
  bool first = false;
  bool last = false;

  Shape weight_shape() const;
  void validate() const;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
  LayerSpec spec;
  Tensor weight;
  Tensor bias;
};

enum class Stage { Float, Qat, Lowered };
std::string stage_name(Stage stage);
Stage parse_stage(std::string_view text);

/// Sequential CNN: conv layers followed by linear layers. Input is [C, H, W]
/// per sample; a linear layer flattens a 4-D input.
struct Model {
  Shape input_shape{1, 32, 32};
  int num_classes = 10;
  Stage stage = Stage::Float;
  QuantParams input_params = QuantParams::activation(8, 1.0f / 255.0f, 0.5f);
  std::vector<Layer> layers;

  /// Per-sample output shape of each layer; throws ShapeError on mismatch.
  std::vector<Shape> output_shapes() const;
  void validate() const;
  /// Parameters of layer i feed from these activation params.
  const QuantParams& input_params_of(std::size_t layer) const;
};

/// Sets first/last flags and bit-widths: the first and last layers' weights,
/// the network input, the input of the last layer and the logits use
/// `first_last_bits`; everything else uses `bits`.
void apply_bit_policy(Model& model, int bits, int first_last_bits);

/// The desk classifier: 3 conv + 2 linear layers on 1x32x32 input, He-init.
Model make_desk_cnn(const Activation& act, std::uint64_t seed, int num_classes = 10);

// Tape parameter names.
std::string weight_name(std::size_t layer);
std::string bias_name(std::size_t layer);
std::string weight_scale_name(std::size_t layer);
std::string act_scale_name(std::size_t layer);
std::string act_zero_name(std::size_t layer);
inline const char* kInputScaleName = "input.scale";
inline const char* kInputZeroName = "input.zero";

enum class ForwardMode { Float, FakeQuant };

struct ForwardOptions {
  ForwardMode mode = ForwardMode::FakeQuant;
  bool trainable = true;            // parameters become tape parameters
  bool train_zero_points = true;    // activation zero-points are trainable
};

/// Tape handles of one layer's parameters.
struct LayerVars {
  Var weight;
  Var bias;
  Var weight_scale;
  Var weight_zero;  // constant 0
  Var act_scale;
  Var act_zero;
};

/// Quantization-aware forward of one layer:
/// fake_quant_out(g(conv(input, fake_quant_w(W)) + b)). Convolution padding
/// reads `input_zero_point`, so padded positions map to code 0.
Var layer_forward_qat(Tape& t, Var input, const LayerSpec& spec, const LayerVars& vars,
                      float input_zero_point);
/// Unquantized forward of one layer: g(conv(input, W) + b).
Var layer_forward_float(Tape& t, Var input, const LayerSpec& spec, Var weight, Var bias);

struct ForwardResult {
  Var input;                      // network input after input quantization
  std::vector<Var> pre_quant;     // per layer g(Y), before output quantization
  std::vector<Var> outputs;       // per layer output (fake-quantized in QAT mode)
  Var logits;
};

ForwardResult forward(Tape& t, const Model& model, const Tensor& batch, const ForwardOptions& opts);

/// Two-branch shortcut add, re-fake-quantized with its own parameters.
Var shortcut_add_qat(Tape& t, Var a, Var b, Var scale, Var zero_point, int bits);

/// Mean softmax cross-entropy over the batch; labels must lie in [0, C).
Var cross_entropy(Tape& t, Var logits, std::span<const std::int32_t> labels);

}  // namespace adaqat
