#pragma once

#include "adaqat/autodiff.hpp"
#include "adaqat/kernels.hpp"

namespace adaqat {

enum class ActivationKind { Identity, ReLU, LeakyReLU, Swish };

struct Activation {
  ActivationKind kind = ActivationKind::Identity;
  float alpha = 0.1f;  // LeakyReLU negative slope

  static Activation identity() { return {ActivationKind::Identity}; }
  static Activation relu() { return {ActivationKind::ReLU}; }
  static Activation leaky_relu(float alpha = 0.1f) { return {ActivationKind::LeakyReLU, alpha}; }
  static Activation swish() { return {ActivationKind::Swish}; }

  friend bool operator==(const Activation&, const Activation&) = default;
};

std::string activation_name(const Activation& act);
/// Parses "identity", "relu", "swish", "leaky_relu" or "leaky_relu:<alpha>".
Activation parse_activation(std::string_view text);

/// Elementwise activation in real arithmetic (no tape).
float activation_value(const Activation& act, float x);
float activation_derivative(const Activation& act, float x);

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  float pad_value = 0.0f;
};

namespace ops {

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, float c);
Var add_scalar(Tape& t, Var a, float c);
Var square(Tape& t, Var a);
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
Var reshape(Tape& t, Var a, Shape shape);
/// [N, ...] -> [N, prod(...)]
Var flatten(Tape& t, Var a);
/// x: [N, K, ...], b: [K]; adds b along axis 1.
Var bias_add(Tape& t, Var x, Var b);
/// x: [N, C, H, W], w: [K, C, kh, kw], b: [K] or invalid Var.
Var conv2d(Tape& t, Var x, Var w, Var b, const Conv2dOptions& opts);
/// x: [N, F], w: [K, F], b: [K] or invalid Var.
Var linear(Tape& t, Var x, Var w, Var b);
Var activation(Tape& t, Var x, const Activation& act);
Var sigmoid(Tape& t, Var x);

}  // namespace ops
}  // namespace adaqat
