// Reference loop nests. Summation order per output element follows the
// weight layout (c, i, j), which the parallel kernels reproduce.
#include <cstdint>
#include <limits>

#include "impl.hpp"

namespace adaqat::kernels::serial {

void conv2d_forward(const ConvGeometry& g, const float* in, const float* w, const float* bias,
                    float pad_value, float* out) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  for (int n = 0; n < g.batch; ++n)
    for (int k = 0; k < g.out_channels; ++k)
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) {
          float acc = bias ? bias[k] : 0.0f;
          for (int c = 0; c < g.in_channels; ++c)
            for (int i = 0; i < g.kernel_h; ++i)
              for (int j = 0; j < g.kernel_w; ++j) {
                const int y = oh * g.stride + i - g.padding;
                const int x = ow * g.stride + j - g.padding;
                const float v = (y < 0 || y >= g.in_h || x < 0 || x >= g.in_w)
                                    ? pad_value
                                    : in[((std::int64_t{n} * g.in_channels + c) * g.in_h + y) * g.in_w + x];
                acc += w[((std::int64_t{k} * g.in_channels + c) * g.kernel_h + i) * g.kernel_w + j] * v;
              }
          out[((std::int64_t{n} * g.out_channels + k) * oh_n + oh) * ow_n + ow] = acc;
        }
}

void conv2d_backward_input(const ConvGeometry& g, const float* w, const float* gout, float* gin) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  for (std::int64_t i = 0; i < g.input_size(); ++i) gin[i] = 0.0f;
  for (int n = 0; n < g.batch; ++n)
    for (int k = 0; k < g.out_channels; ++k)
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) {
          const float go = gout[((std::int64_t{n} * g.out_channels + k) * oh_n + oh) * ow_n + ow];
          for (int c = 0; c < g.in_channels; ++c)
            for (int i = 0; i < g.kernel_h; ++i)
              for (int j = 0; j < g.kernel_w; ++j) {
                const int y = oh * g.stride + i - g.padding;
                const int x = ow * g.stride + j - g.padding;
                if (y < 0 || y >= g.in_h || x < 0 || x >= g.in_w) continue;
                gin[((std::int64_t{n} * g.in_channels + c) * g.in_h + y) * g.in_w + x] +=
                    w[((std::int64_t{k} * g.in_channels + c) * g.kernel_h + i) * g.kernel_w + j] * go;
              }
        }
}

void conv2d_backward_weight(const ConvGeometry& g, const float* in, const float* gout,
                            float pad_value, float* gw) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  for (int k = 0; k < g.out_channels; ++k)
    for (int c = 0; c < g.in_channels; ++c)
      for (int i = 0; i < g.kernel_h; ++i)
        for (int j = 0; j < g.kernel_w; ++j) {
          float acc = 0.0f;
          for (int n = 0; n < g.batch; ++n)
            for (int oh = 0; oh < oh_n; ++oh)
              for (int ow = 0; ow < ow_n; ++ow) {
                const int y = oh * g.stride + i - g.padding;
                const int x = ow * g.stride + j - g.padding;
                const float v = (y < 0 || y >= g.in_h || x < 0 || x >= g.in_w)
                                    ? pad_value
                                    : in[((std::int64_t{n} * g.in_channels + c) * g.in_h + y) * g.in_w + x];
                acc += gout[((std::int64_t{n} * g.out_channels + k) * oh_n + oh) * ow_n + ow] * v;
              }
          gw[((std::int64_t{k} * g.in_channels + c) * g.kernel_h + i) * g.kernel_w + j] = acc;
        }
}

void linear_forward(int n, int f, int k, const float* x, const float* w, const float* b, float* out) {
  for (int s = 0; s < n; ++s)
    for (int o = 0; o < k; ++o) {
      float acc = b ? b[o] : 0.0f;
      for (int i = 0; i < f; ++i) acc += x[std::int64_t{s} * f + i] * w[std::int64_t{o} * f + i];
      out[std::int64_t{s} * k + o] = acc;
    }
}

void linear_backward_input(int n, int f, int k, const float* w, const float* gy, float* gx) {
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < f; ++i) {
      float acc = 0.0f;
      for (int o = 0; o < k; ++o) acc += gy[std::int64_t{s} * k + o] * w[std::int64_t{o} * f + i];
      gx[std::int64_t{s} * f + i] = acc;
    }
}

void linear_backward_weight(int n, int f, int k, const float* x, const float* gy, float* gw) {
  for (int o = 0; o < k; ++o)
    for (int i = 0; i < f; ++i) {
      float acc = 0.0f;
      for (int s = 0; s < n; ++s) acc += gy[std::int64_t{s} * k + o] * x[std::int64_t{s} * f + i];
      gw[std::int64_t{o} * f + i] = acc;
    }
}

void conv2d_int_accumulate(const ConvGeometry& g, const std::int32_t* codes, const std::int32_t* w,
                           const std::int32_t* bias, std::int32_t pad, std::int32_t* acc) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  for (int n = 0; n < g.batch; ++n)
    for (int k = 0; k < g.out_channels; ++k)
      for (int oh = 0; oh < oh_n; ++oh)
        for (int ow = 0; ow < ow_n; ++ow) {
          std::int64_t sum = bias ? bias[k] : 0;
          for (int c = 0; c < g.in_channels; ++c)
            for (int i = 0; i < g.kernel_h; ++i)
              for (int j = 0; j < g.kernel_w; ++j) {
                const int y = oh * g.stride + i - g.padding;
                const int x = ow * g.stride + j - g.padding;
                const std::int32_t v =
                    (y < 0 || y >= g.in_h || x < 0 || x >= g.in_w)
                        ? pad
                        : codes[((std::int64_t{n} * g.in_channels + c) * g.in_h + y) * g.in_w + x];
                sum += std::int64_t{w[((std::int64_t{k} * g.in_channels + c) * g.kernel_h + i) * g.kernel_w + j]} * v;
              }
          if (sum > std::numeric_limits<std::int32_t>::max() ||
              sum < std::numeric_limits<std::int32_t>::min())
            throw_accumulator_overflow(sum);
          acc[((std::int64_t{n} * g.out_channels + k) * oh_n + oh) * ow_n + ow] =
              static_cast<std::int32_t>(sum);
        }
}

}  // namespace adaqat::kernels::serial
