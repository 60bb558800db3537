// OpenMP kernels. Work is split over samples or output channels so that each
// output element is produced by exactly one thread in a fixed order; results
// do not depend on the thread count.
#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "impl.hpp"

namespace adaqat::kernels::parallel {
namespace {

// cols[r][p] for one sample, r = (c, i, j), p = (oh, ow).
void im2col(const ConvGeometry& g, const float* in, float pad_value, float* cols) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const std::int64_t plane = std::int64_t{oh_n} * ow_n;
  std::int64_t r = 0;
  for (int c = 0; c < g.in_channels; ++c)
    for (int i = 0; i < g.kernel_h; ++i)
      for (int j = 0; j < g.kernel_w; ++j, ++r) {
        float* row = cols + r * plane;
        for (int oh = 0; oh < oh_n; ++oh) {
          const int y = oh * g.stride + i - g.padding;
          for (int ow = 0; ow < ow_n; ++ow) {
            const int x = ow * g.stride + j - g.padding;
            row[oh * ow_n + ow] = (y < 0 || y >= g.in_h || x < 0 || x >= g.in_w)
                                      ? pad_value
                                      : in[(std::int64_t{c} * g.in_h + y) * g.in_w + x];
          }
        }
      }
}

// colsT[p][r] for one sample.
void im2row(const ConvGeometry& g, const float* in, float pad_value, float* rows) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const int patch = g.patch_size();
  for (int oh = 0; oh < oh_n; ++oh)
    for (int ow = 0; ow < ow_n; ++ow) {
      float* row = rows + std::int64_t{oh * ow_n + ow} * patch;
      int r = 0;
      for (int c = 0; c < g.in_channels; ++c)
        for (int i = 0; i < g.kernel_h; ++i) {
          const int y = oh * g.stride + i - g.padding;
          for (int j = 0; j < g.kernel_w; ++j, ++r) {
            const int x = ow * g.stride + j - g.padding;
            row[r] = (y < 0 || y >= g.in_h || x < 0 || x >= g.in_w)
                         ? pad_value
                         : in[(std::int64_t{c} * g.in_h + y) * g.in_w + x];
          }
        }
    }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const float* in, const float* w, const float* bias,
                    float pad_value, float* out) {
  const std::int64_t plane = std::int64_t{g.out_h()} * g.out_w();
  const int patch = g.patch_size();
  const std::int64_t in_stride = std::int64_t{g.in_channels} * g.in_h * g.in_w;
  const std::int64_t out_stride = g.out_channels * plane;
#pragma omp parallel
  {
    std::vector<float> cols(static_cast<std::size_t>(patch * plane));
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      im2col(g, in + n * in_stride, pad_value, cols.data());
      float* o = out + n * out_stride;
      for (int k = 0; k < g.out_channels; ++k) {
        float* orow = o + k * plane;
        const float b = bias ? bias[k] : 0.0f;
        for (std::int64_t p = 0; p < plane; ++p) orow[p] = b;
        const float* wrow = w + std::int64_t{k} * patch;
        for (int r = 0; r < patch; ++r) {
          const float a = wrow[r];
          const float* crow = cols.data() + r * plane;
          for (std::int64_t p = 0; p < plane; ++p) orow[p] += a * crow[p];
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const float* w, const float* gout, float* gin) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const std::int64_t plane = std::int64_t{oh_n} * ow_n;
  const int patch = g.patch_size();
  const std::int64_t in_stride = std::int64_t{g.in_channels} * g.in_h * g.in_w;
  const std::int64_t out_stride = g.out_channels * plane;
#pragma omp parallel
  {
    std::vector<float> dcols(static_cast<std::size_t>(patch * plane));
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      std::fill(dcols.begin(), dcols.end(), 0.0f);
      const float* go = gout + n * out_stride;
      for (int k = 0; k < g.out_channels; ++k) {
        const float* gorow = go + k * plane;
        const float* wrow = w + std::int64_t{k} * patch;
        for (int r = 0; r < patch; ++r) {
          const float a = wrow[r];
          float* drow = dcols.data() + r * plane;
          for (std::int64_t p = 0; p < plane; ++p) drow[p] += a * gorow[p];
        }
      }
      float* gi = gin + n * in_stride;
      for (std::int64_t i = 0; i < in_stride; ++i) gi[i] = 0.0f;
      std::int64_t r = 0;
      for (int c = 0; c < g.in_channels; ++c)
        for (int i = 0; i < g.kernel_h; ++i)
          for (int j = 0; j < g.kernel_w; ++j, ++r) {
            const float* drow = dcols.data() + r * plane;
            for (int oh = 0; oh < oh_n; ++oh) {
              const int y = oh * g.stride + i - g.padding;
              if (y < 0 || y >= g.in_h) continue;
              for (int ow = 0; ow < ow_n; ++ow) {
                const int x = ow * g.stride + j - g.padding;
                if (x < 0 || x >= g.in_w) continue;
                gi[(std::int64_t{c} * g.in_h + y) * g.in_w + x] += drow[oh * ow_n + ow];
              }
            }
          }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const float* in, const float* gout,
                            float pad_value, float* gw) {
  const std::int64_t plane = std::int64_t{g.out_h()} * g.out_w();
  const int patch = g.patch_size();
  const std::int64_t in_stride = std::int64_t{g.in_channels} * g.in_h * g.in_w;
  const std::int64_t out_stride = g.out_channels * plane;
  const std::int64_t rows_stride = plane * patch;
  std::vector<float> rows(static_cast<std::size_t>(g.batch * rows_stride));
#pragma omp parallel for schedule(static)
  for (int n = 0; n < g.batch; ++n) im2row(g, in + n * in_stride, pad_value, rows.data() + n * rows_stride);

#pragma omp parallel for schedule(static)
  for (int k = 0; k < g.out_channels; ++k) {
    float* gwrow = gw + std::int64_t{k} * patch;
    for (int r = 0; r < patch; ++r) gwrow[r] = 0.0f;
    for (int n = 0; n < g.batch; ++n) {
      const float* gorow = gout + n * out_stride + k * plane;
      const float* srows = rows.data() + n * rows_stride;
      for (std::int64_t p = 0; p < plane; ++p) {
        const float a = gorow[p];
        const float* row = srows + p * patch;
        for (int r = 0; r < patch; ++r) gwrow[r] += a * row[r];
      }
    }
  }
}

void linear_forward(int n, int f, int k, const float* x, const float* w, const float* b, float* out) {
  std::vector<float> wt(static_cast<std::size_t>(std::int64_t{f} * k));
  for (int o = 0; o < k; ++o)
    for (int i = 0; i < f; ++i) wt[std::int64_t{i} * k + o] = w[std::int64_t{o} * f + i];
#pragma omp parallel for schedule(static)
  for (int s = 0; s < n; ++s) {
    float* orow = out + std::int64_t{s} * k;
    for (int o = 0; o < k; ++o) orow[o] = b ? b[o] : 0.0f;
    const float* xrow = x + std::int64_t{s} * f;
    for (int i = 0; i < f; ++i) {
      const float a = xrow[i];
      const float* wtrow = wt.data() + std::int64_t{i} * k;
      for (int o = 0; o < k; ++o) orow[o] += a * wtrow[o];
    }
  }
}

void linear_backward_input(int n, int f, int k, const float* w, const float* gy, float* gx) {
#pragma omp parallel for schedule(static)
  for (int s = 0; s < n; ++s) {
    float* gxrow = gx + std::int64_t{s} * f;
    for (int i = 0; i < f; ++i) gxrow[i] = 0.0f;
    for (int o = 0; o < k; ++o) {
      const float a = gy[std::int64_t{s} * k + o];
      const float* wrow = w + std::int64_t{o} * f;
      for (int i = 0; i < f; ++i) gxrow[i] += a * wrow[i];
    }
  }
}

void linear_backward_weight(int n, int f, int k, const float* x, const float* gy, float* gw) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < k; ++o) {
    float* gwrow = gw + std::int64_t{o} * f;
    for (int i = 0; i < f; ++i) gwrow[i] = 0.0f;
    for (int s = 0; s < n; ++s) {
      const float a = gy[std::int64_t{s} * k + o];
      const float* xrow = x + std::int64_t{s} * f;
      for (int i = 0; i < f; ++i) gwrow[i] += a * xrow[i];
    }
  }
}

void conv2d_int_accumulate(const ConvGeometry& g, const std::int32_t* codes, const std::int32_t* w,
                           const std::int32_t* bias, std::int32_t pad, std::int32_t* acc) {
  const int oh_n = g.out_h(), ow_n = g.out_w();
  const std::int64_t plane = std::int64_t{oh_n} * ow_n;
  const int patch = g.patch_size();
  const std::int64_t in_stride = std::int64_t{g.in_channels} * g.in_h * g.in_w;
  bool overflow = false;
  std::int64_t overflow_value = 0;
#pragma omp parallel
  {
    std::vector<std::int32_t> row(static_cast<std::size_t>(patch));
    std::vector<std::int64_t> sums(static_cast<std::size_t>(g.out_channels));
#pragma omp for schedule(static)
    for (std::int64_t np = 0; np < std::int64_t{g.batch} * plane; ++np) {
      const std::int64_t n = np / plane, p = np % plane;
      const int oh = static_cast<int>(p / ow_n), ow = static_cast<int>(p % ow_n);
      const std::int32_t* src = codes + n * in_stride;
      int r = 0;
      for (int c = 0; c < g.in_channels; ++c)
        for (int i = 0; i < g.kernel_h; ++i) {
          const int y = oh * g.stride + i - g.padding;
          for (int j = 0; j < g.kernel_w; ++j, ++r) {
            const int x = ow * g.stride + j - g.padding;
            row[r] = (y < 0 || y >= g.in_h || x < 0 || x >= g.in_w)
                         ? pad
                         : src[(std::int64_t{c} * g.in_h + y) * g.in_w + x];
          }
        }
      for (int k = 0; k < g.out_channels; ++k) {
        const std::int32_t* wrow = w + std::int64_t{k} * patch;
        std::int64_t sum = bias ? bias[k] : 0;
        for (int q = 0; q < patch; ++q) sum += std::int64_t{wrow[q]} * row[q];
        if (sum > std::numeric_limits<std::int32_t>::max() ||
            sum < std::numeric_limits<std::int32_t>::min()) {
#pragma omp critical
          {
            overflow = true;
            overflow_value = sum;
          }
        }
        acc[(n * g.out_channels + k) * plane + p] = static_cast<std::int32_t>(sum);
      }
    }
  }
  if (overflow) throw_accumulator_overflow(overflow_value);
}

}  // namespace adaqat::kernels::parallel
