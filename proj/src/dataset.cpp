#include "adaqat/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "adaqat/rng.hpp"

namespace adaqat {

void Dataset::validate() const {
  const auto n = sample_numel();
  if (num_classes < 1) throw FormatError("dataset needs at least one class");
  if (samples.size() != labels.size() * static_cast<std::size_t>(n))
    throw FormatError("dataset holds " + std::to_string(samples.size()) + " values for " +
                      std::to_string(labels.size()) + " samples of shape " + shape_str(sample_shape));
  for (auto l : labels)
    if (l < 0 || l >= num_classes)
      throw FormatError("label " + std::to_string(l) + " outside [0, " + std::to_string(num_classes) + ")");
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  const auto n = static_cast<std::size_t>(sample_numel());
  Shape shape{static_cast<std::int64_t>(indices.size())};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor out(shape);
  for (std::size_t b = 0; b < indices.size(); ++b)
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(indices[b] * n), n, out.data().begin() + static_cast<std::ptrdiff_t>(b * n));
  return out;
}

std::vector<std::int32_t> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<std::int32_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw Error("dataset slice out of range");
  const auto n = static_cast<std::size_t>(sample_numel());
  Dataset d;
  d.sample_shape = sample_shape;
  d.num_classes = num_classes;
  d.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(begin * n),
                   samples.begin() + static_cast<std::ptrdiff_t>(end * n));
  d.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin), labels.begin() + static_cast<std::ptrdiff_t>(end));
  return d;
}

std::string shape_class_name(int label) {
  static const std::array<const char*, 10> names{"disc", "ring", "square", "frame", "triangle",
                                                 "plus", "cross", "hbar", "vbar", "diagonal"};
  return label >= 0 && label < 10 ? names[static_cast<std::size_t>(label)] : "unknown";
}

namespace {

constexpr int kSide = 32;

// Signed coverage test in a canvas centred at (cx, cy) with radius r.
bool covered(int label, double x, double y, double r, double thick) {
  const double ax = std::abs(x), ay = std::abs(y);
  const double d = std::sqrt(x * x + y * y);
  switch (label) {
    case 0: return d <= r;
    case 1: return d <= r && d >= r - thick;
    case 2: return ax <= r * 0.85 && ay <= r * 0.85;
    case 3: return ax <= r * 0.85 && ay <= r * 0.85 && (ax >= r * 0.85 - thick || ay >= r * 0.85 - thick);
    case 4: return y <= r * 0.8 && y >= -r * 0.8 && ax <= (y + r * 0.8) * 0.6;
    case 5: return (ax <= thick * 0.5 && ay <= r) || (ay <= thick * 0.5 && ax <= r);
    case 6: return (std::abs(x - y) <= thick * 0.7 || std::abs(x + y) <= thick * 0.7) && ax <= r * 0.8 && ay <= r * 0.8;
    case 7: return ay <= thick * 0.5 && ax <= r;
    case 8: return ax <= thick * 0.5 && ay <= r;
    case 9: return std::abs(x - y) <= thick * 0.7 && ax <= r * 0.8 && ay <= r * 0.8;
    default: return false;
  }
}

}  // namespace

Dataset make_shapes_dataset(std::size_t count, std::uint64_t seed) {
  Dataset d;
  d.sample_shape = {1, kSide, kSide};
  d.num_classes = 10;
  d.samples.assign(count * kSide * kSide, 0.0f);
  d.labels.resize(count);
  Rng rng(seed);
  for (std::size_t s = 0; s < count; ++s) {
    const int label = static_cast<int>(s % 10);
    d.labels[s] = label;
    const double r = rng.uniform(6.0, 12.0);
    const double cx = rng.uniform(r * 0.8 + 1.0, kSide - r * 0.8 - 1.0);
    const double cy = rng.uniform(r * 0.8 + 1.0, kSide - r * 0.8 - 1.0);
    const double thick = rng.uniform(2.0, 3.5);
    const double fg = rng.uniform(0.55, 1.0);
    const double bg = rng.uniform(0.0, 0.3);
    const double noise = rng.uniform(0.05, 0.2);
    float* img = d.samples.data() + s * kSide * kSide;
    for (int y = 0; y < kSide; ++y)
      for (int x = 0; x < kSide; ++x) {
        // 2x2 supersampling for soft edges
        int hits = 0;
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx)
            hits += covered(label, x + 0.25 + 0.5 * sx - cx, y + 0.25 + 0.5 * sy - cy, r, thick) ? 1 : 0;
        const double v = bg + (fg - bg) * hits / 4.0 + noise * rng.normal();
        img[y * kSide + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  }
  // interleave classes deterministically but not in label order
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  Dataset shuffled = d;
  const std::size_t n = kSide * kSide;
  for (std::size_t i = 0; i < count; ++i) {
    shuffled.labels[i] = d.labels[order[i]];
    std::copy_n(d.samples.begin() + static_cast<std::ptrdiff_t>(order[i] * n), n,
                shuffled.samples.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return shuffled;
}

}  // namespace adaqat
