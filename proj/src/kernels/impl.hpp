#pragma once

#include "adaqat/kernels.hpp"

namespace adaqat::kernels {

namespace serial {
void conv2d_forward(const ConvGeometry& g, const float* in, const float* w, const float* bias,
                    float pad_value, float* out);
void conv2d_backward_input(const ConvGeometry& g, const float* w, const float* gout, float* gin);
void conv2d_backward_weight(const ConvGeometry& g, const float* in, const float* gout,
                            float pad_value, float* gw);
void linear_forward(int n, int f, int k, const float* x, const float* w, const float* b, float* out);
void linear_backward_input(int n, int f, int k, const float* w, const float* gy, float* gx);
void linear_backward_weight(int n, int f, int k, const float* x, const float* gy, float* gw);
void conv2d_int_accumulate(const ConvGeometry& g, const std::int32_t* codes,
                           const std::int32_t* w, const std::int32_t* bias, std::int32_t pad,
                           std::int32_t* acc);
}  // namespace serial

namespace parallel {
void conv2d_forward(const ConvGeometry& g, const float* in, const float* w, const float* bias,
                    float pad_value, float* out);
void conv2d_backward_input(const ConvGeometry& g, const float* w, const float* gout, float* gin);
void conv2d_backward_weight(const ConvGeometry& g, const float* in, const float* gout,
                            float pad_value, float* gw);
void linear_forward(int n, int f, int k, const float* x, const float* w, const float* b, float* out);
void linear_backward_input(int n, int f, int k, const float* w, const float* gy, float* gx);
void linear_backward_weight(int n, int f, int k, const float* x, const float* gy, float* gw);
void conv2d_int_accumulate(const ConvGeometry& g, const std::int32_t* codes,
                           const std::int32_t* w, const std::int32_t* bias, std::int32_t pad,
                           std::int32_t* acc);
}  // namespace parallel

[[noreturn]] void throw_accumulator_overflow(std::int64_t value);

}  // namespace adaqat::kernels
