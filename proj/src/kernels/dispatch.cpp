#include <string>

#include "adaqat/error.hpp"
#include "adaqat/tensor.hpp"
#include "impl.hpp"

namespace adaqat::kernels {
namespace {

template <typename T>
void expect_size(std::span<T> s, std::int64_t n, const char* what) {
  if (static_cast<std::int64_t>(s.size()) != n)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(n) + " values, got " +
                     std::to_string(s.size()));
}

template <typename T>
const T* opt(std::span<const T> s) {
  return s.empty() ? nullptr : s.data();
}

}  // namespace

void throw_accumulator_overflow(std::int64_t value) {
  throw OverflowError("integer accumulator overflow: " + std::to_string(value) +
                      " does not fit in 32 bits");
}

void conv2d_forward(Backend be, const ConvGeometry& g, std::span<const float> input,
                    std::span<const float> weight, std::span<const float> bias, float pad_value,
                    std::span<float> output) {
  require_real_arithmetic("conv2d_forward");
  g.validate();
  expect_size(input, g.input_size(), "conv2d input");
  expect_size(weight, g.weight_size(), "conv2d weight");
  if (!bias.empty()) expect_size(bias, g.out_channels, "conv2d bias");
  expect_size(output, g.output_size(), "conv2d output");
  if (be == Backend::Serial)
    serial::conv2d_forward(g, input.data(), weight.data(), opt(bias), pad_value, output.data());
  else
    parallel::conv2d_forward(g, input.data(), weight.data(), opt(bias), pad_value, output.data());
}

void conv2d_backward_input(Backend be, const ConvGeometry& g, std::span<const float> weight,
                           std::span<const float> grad_output, std::span<float> grad_input) {
  require_real_arithmetic("conv2d_backward_input");
  g.validate();
  expect_size(weight, g.weight_size(), "conv2d weight");
  expect_size(grad_output, g.output_size(), "conv2d grad_output");
  expect_size(grad_input, g.input_size(), "conv2d grad_input");
  if (be == Backend::Serial)
    serial::conv2d_backward_input(g, weight.data(), grad_output.data(), grad_input.data());
  else
    parallel::conv2d_backward_input(g, weight.data(), grad_output.data(), grad_input.data());
}

void conv2d_backward_weight(Backend be, const ConvGeometry& g, std::span<const float> input,
                            std::span<const float> grad_output, float pad_value,
                            std::span<float> grad_weight) {
  require_real_arithmetic("conv2d_backward_weight");
  g.validate();
  expect_size(input, g.input_size(), "conv2d input");
  expect_size(grad_output, g.output_size(), "conv2d grad_output");
  expect_size(grad_weight, g.weight_size(), "conv2d grad_weight");
  if (be == Backend::Serial)
    serial::conv2d_backward_weight(g, input.data(), grad_output.data(), pad_value, grad_weight.data());
  else
    parallel::conv2d_backward_weight(g, input.data(), grad_output.data(), pad_value, grad_weight.data());
}

void linear_forward(Backend be, int n, int in_features, int out_features, std::span<const float> x,
                    std::span<const float> weight, std::span<const float> bias, std::span<float> out) {
  require_real_arithmetic("linear_forward");
  expect_size(x, std::int64_t{n} * in_features, "linear input");
  expect_size(weight, std::int64_t{out_features} * in_features, "linear weight");
  if (!bias.empty()) expect_size(bias, out_features, "linear bias");
  expect_size(out, std::int64_t{n} * out_features, "linear output");
  if (be == Backend::Serial)
    serial::linear_forward(n, in_features, out_features, x.data(), weight.data(), opt(bias), out.data());
  else
    parallel::linear_forward(n, in_features, out_features, x.data(), weight.data(), opt(bias), out.data());
}

void linear_backward_input(Backend be, int n, int in_features, int out_features,
                           std::span<const float> weight, std::span<const float> grad_out,
                           std::span<float> grad_x) {
  require_real_arithmetic("linear_backward_input");
  expect_size(weight, std::int64_t{out_features} * in_features, "linear weight");
  expect_size(grad_out, std::int64_t{n} * out_features, "linear grad_out");
  expect_size(grad_x, std::int64_t{n} * in_features, "linear grad_x");
  if (be == Backend::Serial)
    serial::linear_backward_input(n, in_features, out_features, weight.data(), grad_out.data(), grad_x.data());
  else
    parallel::linear_backward_input(n, in_features, out_features, weight.data(), grad_out.data(), grad_x.data());
}

void linear_backward_weight(Backend be, int n, int in_features, int out_features,
                            std::span<const float> x, std::span<const float> grad_out,
                            std::span<float> grad_weight) {
  require_real_arithmetic("linear_backward_weight");
  expect_size(x, std::int64_t{n} * in_features, "linear input");
  expect_size(grad_out, std::int64_t{n} * out_features, "linear grad_out");
  expect_size(grad_weight, std::int64_t{out_features} * in_features, "linear grad_weight");
  if (be == Backend::Serial)
    serial::linear_backward_weight(n, in_features, out_features, x.data(), grad_out.data(), grad_weight.data());
  else
    parallel::linear_backward_weight(n, in_features, out_features, x.data(), grad_out.data(), grad_weight.data());
}

void conv2d_int_accumulate(Backend be, const ConvGeometry& g, std::span<const std::int32_t> codes,
                           std::span<const std::int32_t> weight, std::span<const std::int32_t> bias,
                           std::int32_t pad_code, std::span<std::int32_t> acc) {
  g.validate();
  expect_size(codes, g.input_size(), "int conv input");
  expect_size(weight, g.weight_size(), "int conv weight");
  if (!bias.empty()) expect_size(bias, g.out_channels, "int conv bias");
  expect_size(acc, g.output_size(), "int conv output");
  if (be == Backend::Serial)
    serial::conv2d_int_accumulate(g, codes.data(), weight.data(), opt(bias), pad_code, acc.data());
  else
    parallel::conv2d_int_accumulate(g, codes.data(), weight.data(), opt(bias), pad_code, acc.data());
}

}  // namespace adaqat::kernels
