#include "adaqat/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace adaqat {

int histogram_bin(float v, float min, float max) {
  if (!(max > min)) return 0;
  const double pos = (static_cast<double>(v) - min) / (static_cast<double>(max) - min) * ActivationStats::kBins;
  return std::clamp(static_cast<int>(std::floor(pos)), 0, ActivationStats::kBins - 1);
}

ActivationStats compute_stats(std::span<const float> values) {
  if (values.empty()) throw Error("activation statistics need at least one value");
  ActivationStats s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (float v : values) sum += v;
  s.count = static_cast<std::int64_t>(values.size());
  s.mean = std::clamp(sum / static_cast<double>(s.count), static_cast<double>(s.min), static_cast<double>(s.max));
  s.histogram.assign(ActivationStats::kBins, 0);
  for (float v : values) ++s.histogram[static_cast<std::size_t>(histogram_bin(v, s.min, s.max))];
  return s;
}

namespace {

struct GatheredValues {
  std::vector<float> input;
  std::vector<std::vector<float>> layers;
};

GatheredValues gather_values(const Model& model, std::span<const Tensor> batches) {
  if (batches.empty()) throw Error("collect_stats: no calibration batches");
  GatheredValues g;
  g.layers.resize(model.layers.size());
  for (const Tensor& batch : batches) {
    Tape t;
    const auto r = forward(t, model, batch, {ForwardMode::Float, false, false});
    const auto in = t.value(r.input).data();
    g.input.insert(g.input.end(), in.begin(), in.end());
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      const auto v = t.value(r.pre_quant[i]).data();
      g.layers[i].insert(g.layers[i].end(), v.begin(), v.end());
    }
  }
  return g;
}

ModelStats stats_of(const GatheredValues& g) {
  ModelStats stats;
  stats.input = compute_stats(g.input);
  for (const auto& v : g.layers) stats.layers.push_back(compute_stats(v));
  return stats;
}

}  // namespace

ModelStats collect_stats(const Model& model, std::span<const Tensor> batches) {
  return stats_of(gather_values(model, batches));
}

QuantParams init_quant_params(const ActivationStats& stats, int bits, bool shift_enabled) {
  if (!supported_bits(bits)) throw Error("unsupported bit-width " + std::to_string(bits));
  const double lo = stats.min, hi = stats.max;
  if (!(hi > lo)) return QuantParams::activation(bits, kScaleFloor, stats.min);
  const double half = std::ldexp(1.0, bits - 1);
  if (shift_enabled) {
    const double f = (hi - lo) / (2.0 * half - 1.0);
    return QuantParams::activation(bits, static_cast<float>(f), static_cast<float>(lo + half * f));
  }
  const double f = std::max(std::abs(std::min(lo, 0.0)) / half, std::max(hi, 0.0) / (half - 1.0));
  return QuantParams::activation(bits, std::max(static_cast<float>(f), kScaleFloor), 0.0f);
}

QuantParams init_weight_params(const Tensor& weight, int bits) {
  ActivationStats s = compute_stats(weight.data());
  QuantParams p = init_quant_params(s, bits, false);
  return QuantParams::weight(bits, p.scale);
}

double sqnr_db(std::span<const float> sample, const QuantParams& p) {
  double signal = 0.0, noise = 0.0;
  for (float x : sample) {
    const float q = p.scale * static_cast<float>(q_int((x - p.zero_point) / p.scale, p.bits)) + p.zero_point;
    const double e = static_cast<double>(x) - q;
    signal += static_cast<double>(x) * x;
    noise += e * e;
  }
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

std::vector<SqnrCandidate> sqnr_search_grid(std::span<const float> sample, int bits, int resolution, bool pin_zero) {
  if (sample.empty()) throw Error("sqnr_linear_search: empty sample");
  if (resolution < 8) throw Error("sqnr_linear_search: grid resolution must be >= 8");
  const ActivationStats stats = compute_stats(sample);
  const QuantParams init = init_quant_params(stats, bits, !pin_zero);
  std::vector<float> scales;
  const int centre = resolution / 2;
  const double step = 3.0 / resolution;  // factors 2^-1.5 .. 2^1.5
  for (int i = 0; i < resolution; ++i)
    scales.push_back(i == centre ? init.scale
                                 : std::max(static_cast<float>(init.scale * std::exp2((i - centre) * step)), kScaleFloor));
  std::vector<float> zeros;
  if (pin_zero) {
    zeros.push_back(0.0f);
  } else {
    for (int j = 0; j < resolution; ++j)
      zeros.push_back(static_cast<float>(stats.min + (static_cast<double>(stats.max) - stats.min) * j / (resolution - 1)));
    if (std::find(zeros.begin(), zeros.end(), init.zero_point) == zeros.end()) zeros.push_back(init.zero_point);
  }
  std::vector<SqnrCandidate> grid;
  grid.reserve(scales.size() * zeros.size());
  for (float f : scales)
    for (float z : zeros) grid.push_back({f, z});
  return grid;
}

SqnrResult sqnr_linear_search(std::span<const float> sample, int bits, int resolution, bool pin_zero) {
  const auto grid = sqnr_search_grid(sample, bits, resolution, pin_zero);
  SqnrResult best;
  best.sqnr = -std::numeric_limits<double>::infinity();
  for (const auto& c : grid) {
    const QuantParams p = QuantParams::activation(bits, c.scale, c.zero_point);
    const double s = sqnr_db(sample, p);
    if (s > best.sqnr || best.params.scale <= 0.0f) {
      best.sqnr = s;
      best.params = p;
    }
    if (std::isinf(best.sqnr) && best.sqnr > 0) break;
  }
  return best;
}

namespace {

std::vector<float> subsample(std::span<const float> values, std::size_t max_samples) {
  if (values.size() <= max_samples) return {values.begin(), values.end()};
  std::vector<float> out;
  out.reserve(max_samples);
  const double stride = static_cast<double>(values.size()) / static_cast<double>(max_samples);
  for (std::size_t i = 0; i < max_samples; ++i) out.push_back(values[static_cast<std::size_t>(i * stride)]);
  return out;
}

}  // namespace

ModelStats calibrate_model(Model& model, const Dataset& data, const CalibrationOptions& opts) {
  if (opts.batches < 1 || opts.batch_size < 1) throw Error("calibration needs at least one non-empty batch");
  apply_bit_policy(model, opts.bits, opts.first_last_bits);
  std::vector<Tensor> batches;
  for (int b = 0; b < opts.batches; ++b) {
    const std::size_t begin = static_cast<std::size_t>(b) * static_cast<std::size_t>(opts.batch_size);
    if (begin >= data.size()) break;
    const std::size_t end = std::min(data.size(), begin + static_cast<std::size_t>(opts.batch_size));
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    batches.push_back(data.batch(idx));
  }
  const GatheredValues values = gather_values(model, batches);
  const ModelStats stats = stats_of(values);

  auto activation_params = [&](const ActivationStats& s, std::span<const float> v, int bits) {
    if (opts.method == CalibrationMethod::MinMax) return init_quant_params(s, bits, opts.shift_enabled);
    const auto sample = subsample(v, opts.sqnr_max_samples);
    return sqnr_linear_search(sample, bits, opts.sqnr_resolution, !opts.shift_enabled).params;
  };

  model.input_params = activation_params(stats.input, values.input, model.input_params.bits);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    LayerSpec& s = model.layers[i].spec;
    s.act_params = activation_params(stats.layers[i], values.layers[i], s.act_params.bits);
    if (opts.method == CalibrationMethod::MinMax) {
      s.weight_params = init_weight_params(model.layers[i].weight, s.weight_params.bits);
    } else {
      const auto sample = subsample(model.layers[i].weight.data(), opts.sqnr_max_samples);
      const auto found = sqnr_linear_search(sample, s.weight_params.bits, opts.sqnr_resolution, true);
      s.weight_params = QuantParams::weight(s.weight_params.bits, found.params.scale);
    }
  }
  model.stage = Stage::Qat;
  model.validate();
  return stats;
}

}  // namespace adaqat
