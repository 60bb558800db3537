#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adaqat/dataset.hpp"
#include "adaqat/engine.hpp"
#include "adaqat/layers.hpp"

namespace adaqat {

/// How quantization-parameter learning rates relate to the weight rate.
enum class QParamLrMode {
  Scaled,   // lr / sqrt(elements feeding the f/z reduction)
  Literal,  // same lr as the weights
};

std::string qparam_lr_mode_name(QParamLrMode mode);
QParamLrMode parse_qparam_lr_mode(std::string_view text);

struct TrainConfig {
  int epochs = 30;
  float lr = 1e-3f;
  float weight_decay = 1e-4f;
  float momentum = 0.9f;
  int batch_size = 64;
  int bits = 4;
  int first_last_bits = 8;
  bool shift_enabled = true;
  std::uint64_t seed = 1;
  QParamLrMode qparam_lr_mode = QParamLrMode::Scaled;
  bool cosine_schedule = true;
  float final_lr_ratio = 0.01f;

  /// Throws Error unless lr > 0, epochs >= 0, batch_size >= 1 and the
  /// momentum lies in [0, 1).
  void validate() const;
};

/// Step-wise learning rate: cosine from lr down to lr * final_lr_ratio.
float scheduled_lr(const TrainConfig& config, std::int64_t step, std::int64_t total_steps);

/// SGD with momentum over named parameters. Weight decay applies to conv
/// and linear weights only.
class SgdMomentum {
 public:
  /// Applies one update. `elements` maps quantization-parameter names to
  /// the element count of the tensor they quantize.
  void step(Model& model, const GradMap& grads, const TrainConfig& config, float lr,
            const std::map<std::string, std::int64_t>& elements);
  void reset() { velocity_.clear(); }
  const std::map<std::string, std::vector<float>>& velocity() const { return velocity_; }

 private:
  std::map<std::string, std::vector<float>> velocity_;
};

struct StepResult {
  double loss = 0.0;
  std::int64_t correct = 0;
};

/// One forward/backward/update on a batch. FakeQuant mode trains weights,
/// biases, every f and (with shift_enabled) every activation z; Float mode
/// trains weights and biases. Non-finite loss throws TrainingError with
/// per-layer diagnostics and leaves the model untouched.
StepResult train_step(Model& model, SgdMomentum& optimizer, const Tensor& batch,
                      std::span<const std::int32_t> labels, const TrainConfig& config, float lr,
                      ForwardMode mode, std::int64_t step_index = 0);

inline StepResult qat_step(Model& model, SgdMomentum& optimizer, const Tensor& batch,
                           std::span<const std::int32_t> labels, const TrainConfig& config, float lr,
                           std::int64_t step_index = 0) {
  return train_step(model, optimizer, batch, labels, config, lr, ForwardMode::FakeQuant, step_index);
}

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;
  QuantParams input_params;
  std::vector<QuantParams> weight_params;
  std::vector<QuantParams> act_params;
};

struct TrainHistory {
  std::vector<EpochMetrics> epochs;
};

/// Trains for config.epochs over seed-shuffled batches. Aborts with
/// TrainingError when every step of an epoch exceeds 10x the initial loss.
TrainHistory train_model(Model& model, const Dataset& train, const Dataset& eval, const TrainConfig& config,
                         ForwardMode mode);
inline TrainHistory train_float(Model& model, const Dataset& train, const Dataset& eval, const TrainConfig& config) {
  return train_model(model, train, eval, config, ForwardMode::Float);
}
inline TrainHistory qat_train(Model& model, const Dataset& train, const Dataset& eval, const TrainConfig& config) {
  return train_model(model, train, eval, config, ForwardMode::FakeQuant);
}

struct EvalResult {
  std::int64_t correct = 0;
  std::int64_t count = 0;
  std::vector<std::int32_t> predictions;
  double accuracy() const { return count ? 100.0 * static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
};

inline constexpr int kEvalBatch = 250;

/// Float or fake-quant evaluation; returns top-1 accuracy in percent.
EvalResult evaluate(const Model& model, const Dataset& data, ForwardMode mode, int batch_size = kEvalBatch);
/// Integer-engine evaluation; argmax over the output codes.
EvalResult evaluate_integer(const LoweredModel& model, const Dataset& data, int batch_size = kEvalBatch);

/// Index of the first maximum in each row of a [N, C] tensor.
std::vector<std::int32_t> argmax_rows(std::span<const float> values, std::int64_t rows, std::int64_t cols);

}  // namespace adaqat
