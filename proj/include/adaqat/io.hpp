#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adaqat/calibration.hpp"
#include "adaqat/dataset.hpp"
#include "adaqat/engine.hpp"
#include "adaqat/layers.hpp"
#include "adaqat/training.hpp"

namespace adaqat::io {

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

using Bytes = std::vector<std::uint8_t>;

/// A decoded model container: `model` for float/qat stages, `lowered` for
/// the lowered stage.
struct ModelContainer {
  Stage stage = Stage::Float;
  std::optional<Model> model;
  std::optional<LoweredModel> lowered;
};

Bytes encode_model(const Model& model);
Bytes encode_lowered(const LoweredModel& model);
/// Throws FormatError on malformed input and ChecksumError (with the byte
/// offset of the failing section) on corruption.
ModelContainer decode_container(std::span<const std::uint8_t> bytes);

Bytes encode_dataset(const Dataset& data);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
void write_text(const std::string& path, const std::string& text);

void save_model(const std::string& path, const Model& model);
void save_lowered(const std::string& path, const LoweredModel& model);
ModelContainer load_container(const std::string& path);
/// Loads a float or qat container; throws FormatError for other stages.
Model load_model(const std::string& path);
LoweredModel load_lowered(const std::string& path);

void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

/// Shortest round-trip decimal form of a float.
std::string format_float(float v);
std::string format_double(double v);

/// One row per epoch: loss, accuracies and every (f, z).
std::string metrics_csv(const TrainHistory& history);
/// One row per (layer, bin) of the float-mode activation histograms.
std::string histogram_csv(const Model& model, const ModelStats& stats);

}  // namespace adaqat::io
