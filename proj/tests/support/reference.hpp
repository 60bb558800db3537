#pragma once

// Real-arithmetic reference for one lowered layer, independent of the
// engine: dequantize inputs and weights in double, convolve with plain
// loops, apply the activation and quantize the result.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "adaqat/engine.hpp"
#include "adaqat/layers.hpp"

namespace adaqat::testing {

inline double ref_activation(const Activation& act, double y) {
  switch (act.kind) {
    case ActivationKind::Identity: return y;
    case ActivationKind::ReLU: return y > 0 ? y : 0.0;
    case ActivationKind::LeakyReLU: return y > 0 ? y : act.alpha * y;
    case ActivationKind::Swish: return y / (1.0 + std::exp(-y));
  }
  return y;
}

inline std::int32_t ref_quantize(double x, int bits) {
  const double lo = -std::ldexp(1.0, bits - 1), hi = std::ldexp(1.0, bits - 1) - 1.0;
  if (std::isnan(x)) return 0;
  if (x >= hi) return static_cast<std::int32_t>(hi);
  if (x <= lo) return static_cast<std::int32_t>(lo);
  return static_cast<std::int32_t>(std::round(x));
}

/// Unrounded output code (g(Y) - z) / f, computed from codes `in` with
/// params `in_params`, for a conv layer (linear when kind == Linear).
inline std::vector<double> reference_layer_real(const std::vector<std::int32_t>& in, std::int64_t batch,
                                                const Shape& in_shape, const Layer& layer,
                                                const QuantParams& in_params) {
  const LayerSpec& s = layer.spec;
  const QuantParams& wp = s.weight_params;
  const QuantParams& op = s.act_params;
  std::int64_t c_in, h, w;
  if (s.kind == LayerKind::Linear) {
    c_in = 1;
    for (auto d : in_shape) c_in *= d;
    h = w = 1;
  } else {
    c_in = in_shape[0];
    h = in_shape[1];
    w = in_shape[2];
  }
  const int k = s.kind == LayerKind::Linear ? 1 : s.kernel;
  const int stride = s.kind == LayerKind::Linear ? 1 : s.stride;
  const int pad = s.kind == LayerKind::Linear ? 0 : s.padding;
  const std::int64_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
  const std::int64_t c_out = s.out_channels;
  const auto wd = layer.weight.data();
  std::vector<double> out(static_cast<std::size_t>(batch * c_out * oh * ow));
  for (std::int64_t n = 0; n < batch; ++n)
    for (std::int64_t o = 0; o < c_out; ++o)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
          double acc = layer.bias[static_cast<std::size_t>(o)];
          for (std::int64_t c = 0; c < c_in; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const std::int64_t iy = y * stride + ky - pad, ix = x * stride + kx - pad;
                double a = in_params.zero_point;  // padding reads the zero-point
                if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                  a = static_cast<double>(in_params.scale) * in[static_cast<std::size_t>(((n * c_in + c) * h + iy) * w + ix)] +
                      in_params.zero_point;
                const std::int32_t wq = ref_quantize(wd[static_cast<std::size_t>(((o * c_in + c) * k + ky) * k + kx)] /
                                                         static_cast<double>(wp.scale),
                                                     wp.bits);
                acc += static_cast<double>(wp.scale) * wq * a;
              }
          out[static_cast<std::size_t>(((n * c_out + o) * oh + y) * ow + x)] =
              (ref_activation(s.activation, acc) - op.zero_point) / op.scale;
        }
  return out;
}

}  // namespace adaqat::testing
