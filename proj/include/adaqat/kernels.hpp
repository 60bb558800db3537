#pragma once

#include <cstdint>
#include <span>

namespace adaqat::kernels {

/// NCHW convolution geometry; weights are [K, C, kh, kw].
struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;

  int out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  int out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  std::int64_t input_size() const;
  std::int64_t output_size() const;
  std::int64_t weight_size() const;
  /// Fan-in of one output element: C * kh * kw.
  int patch_size() const { return in_channels * kernel_h * kernel_w; }
  /// Throws ShapeError with a dimension report when inconsistent.
  void validate() const;
};

/// Serial kernels are the straightforward loop nests kept as the reference;
/// Parallel kernels are the OpenMP versions used by default.
enum class Backend { Serial, Parallel };

Backend default_backend() noexcept;
void set_default_backend(Backend backend) noexcept;
bool openmp_enabled() noexcept;
int max_threads() noexcept;

// Positions outside the input read `pad_value`. `bias` may be empty.
void conv2d_forward(Backend be, const ConvGeometry& g, std::span<const float> input,
                    std::span<const float> weight, std::span<const float> bias, float pad_value,
                    std::span<float> output);
// Overwrites grad_input.
void conv2d_backward_input(Backend be, const ConvGeometry& g, std::span<const float> weight,
                           std::span<const float> grad_output, std::span<float> grad_input);
// Overwrites grad_weight.
void conv2d_backward_weight(Backend be, const ConvGeometry& g, std::span<const float> input,
                            std::span<const float> grad_output, float pad_value,
                            std::span<float> grad_weight);

// x: [N, F], w: [K, F], out: [N, K].
void linear_forward(Backend be, int n, int in_features, int out_features, std::span<const float> x,
                    std::span<const float> weight, std::span<const float> bias, std::span<float> out);
void linear_backward_input(Backend be, int n, int in_features, int out_features,
                           std::span<const float> weight, std::span<const float> grad_out,
                           std::span<float> grad_x);
void linear_backward_weight(Backend be, int n, int in_features, int out_features,
                            std::span<const float> x, std::span<const float> grad_out,
                            std::span<float> grad_weight);

/// Integer convolution: acc = W * codes + bias, with out-of-bounds positions
/// reading `pad_code`. Accumulates in 64 bits and throws OverflowError if a
/// result leaves the int32 range.
void conv2d_int_accumulate(Backend be, const ConvGeometry& g, std::span<const std::int32_t> codes,
                           std::span<const std::int32_t> weight, std::span<const std::int32_t> bias,
                           std::int32_t pad_code, std::span<std::int32_t> acc);

}  // namespace adaqat::kernels
