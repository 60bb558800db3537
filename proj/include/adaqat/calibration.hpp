#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "adaqat/dataset.hpp"
#include "adaqat/layers.hpp"
#include "adaqat/quant.hpp"

namespace adaqat {

struct ActivationStats {
  static constexpr int kBins = 256;
  float min = 0.0f;
  float max = 0.0f;
  double mean = 0.0;
  std::int64_t count = 0;
  std::vector<std::int64_t> histogram;  // kBins bins over [min, max]

  friend bool operator==(const ActivationStats&, const ActivationStats&) = default;
};

/// Histogram bin of `v` for a [min, max] range; a degenerate range maps
/// everything to bin 0.
int histogram_bin(float v, float min, float max);
ActivationStats compute_stats(std::span<const float> values);

struct ModelStats {
  ActivationStats input;
  std::vector<ActivationStats> layers;  // post-activation output of each layer

  friend bool operator==(const ModelStats&, const ModelStats&) = default;
};

/// Float-mode statistics over the given batches, in order. Throws on an
/// empty batch list.
ModelStats collect_stats(const Model& model, std::span<const Tensor> batches);

/// Activation params from statistics. With shift the range [min, max] maps
/// exactly onto the code range; without shift z = 0 and the scale covers
/// both |min| and max symmetrically.
QuantParams init_quant_params(const ActivationStats& stats, int bits, bool shift_enabled);
/// Weight params (z fixed at 0) from the tensor's range.
QuantParams init_weight_params(const Tensor& weight, int bits);

/// 10 log10(sum x^2 / sum (x - fake_quant(x))^2); +inf for zero error.
double sqnr_db(std::span<const float> sample, const QuantParams& params);

struct SqnrCandidate {
  float scale;
  float zero_point;
};

/// The candidate grid: `resolution` scales geometric around the init scale
/// (which is included exactly) times `resolution` zero-points linear across
/// the sample range plus the init zero-point. With `pin_zero` the only
/// zero-point is 0 and the init is the no-shift init.
std::vector<SqnrCandidate> sqnr_search_grid(std::span<const float> sample, int bits, int resolution, bool pin_zero);

struct SqnrResult {
  QuantParams params;
  double sqnr = 0.0;
};

/// Exhaustive SQNR maximization over sqnr_search_grid; the first best
/// candidate in grid order wins ties.
SqnrResult sqnr_linear_search(std::span<const float> sample, int bits, int resolution = 32, bool pin_zero = false);

enum class CalibrationMethod { MinMax, Sqnr };

struct CalibrationOptions {
  int bits = 4;
  int first_last_bits = 8;
  bool shift_enabled = true;
  CalibrationMethod method = CalibrationMethod::MinMax;
  int batches = 4;
  int batch_size = 64;
  int sqnr_resolution = 32;
  std::size_t sqnr_max_samples = 16384;
};

/// Applies the bit policy, collects statistics on the first `batches`
/// batches and initializes every QuantParams. Turns a float model into a
/// qat-stage model.
ModelStats calibrate_model(Model& model, const Dataset& data, const CalibrationOptions& opts);

}  // namespace adaqat
