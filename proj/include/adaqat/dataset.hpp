#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adaqat/tensor.hpp"

namespace adaqat {

/// Labelled real32 samples of one fixed per-sample shape.
struct Dataset {
  Shape sample_shape{1, 32, 32};
  int num_classes = 10;
  std::vector<float> samples;  // count * prod(sample_shape)
  std::vector<std::int32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::int64_t sample_numel() const { return shape_numel(sample_shape); }
  void validate() const;

  /// Gathers the given sample indices into a [n, ...] batch.
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<std::int32_t> batch_labels(std::span<const std::size_t> indices) const;
  /// Contiguous [begin, end) slice.
  Dataset slice(std::size_t begin, std::size_t end) const;
};

/// 10-class synthetic shapes at 32x32: filled/hollow circles and squares,
/// triangles, plus, cross, horizontal/vertical bars, diagonal. Random
/// position, size, intensity and noise; values in [0, 1].
Dataset make_shapes_dataset(std::size_t count, std::uint64_t seed);

std::string shape_class_name(int label);

}  // namespace adaqat
