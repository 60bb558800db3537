#include "adaqat/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "adaqat/rng.hpp"

namespace adaqat {

std::string qparam_lr_mode_name(QParamLrMode mode) {
  return mode == QParamLrMode::Scaled ? "scaled" : "literal";
}

QParamLrMode parse_qparam_lr_mode(std::string_view text) {
  if (text == "scaled") return QParamLrMode::Scaled;
  if (text == "literal") return QParamLrMode::Literal;
  throw Error("unknown quantization-parameter lr mode '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0f) || !std::isfinite(lr)) throw Error("learning rate must be finite and > 0");
  if (epochs < 0) throw Error("epochs must be >= 0");
  if (batch_size < 1) throw Error("batch size must be >= 1");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw Error("momentum must lie in [0, 1)");
  if (weight_decay < 0.0f) throw Error("weight decay must be >= 0");
  if (!supported_bits(bits) || !supported_bits(first_last_bits)) throw Error("unsupported bit-width");
}

float scheduled_lr(const TrainConfig& config, std::int64_t step, std::int64_t total_steps) {
  if (!config.cosine_schedule || total_steps <= 1) return config.lr;
  const double lo = static_cast<double>(config.lr) * config.final_lr_ratio;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return static_cast<float>(lo + 0.5 * (config.lr - lo) * (1.0 + std::cos(std::numbers::pi * progress)));
}

namespace {

struct ParamRef {
  std::string name;
  std::span<float> data;
  bool decay = false;
  bool quant = false;  // a scale or zero-point
  bool is_scale = false;
};

std::vector<ParamRef> model_params(Model& model, bool shift_enabled) {
  std::vector<ParamRef> refs;
  auto scalar = [](float& v) { return std::span<float>(&v, 1); };
  refs.push_back({kInputScaleName, scalar(model.input_params.scale), false, true, true});
  if (shift_enabled) refs.push_back({kInputZeroName, scalar(model.input_params.zero_point), false, true, false});
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    Layer& l = model.layers[i];
    refs.push_back({weight_name(i), l.weight.data(), true, false, false});
    refs.push_back({bias_name(i), l.bias.data(), false, false, false});
    refs.push_back({weight_scale_name(i), scalar(l.spec.weight_params.scale), false, true, true});
    refs.push_back({act_scale_name(i), scalar(l.spec.act_params.scale), false, true, true});
    if (shift_enabled) refs.push_back({act_zero_name(i), scalar(l.spec.act_params.zero_point), false, true, false});
  }
  return refs;
}

double max_abs(std::span<const float> v) {
  double m = 0.0;
  for (float x : v) m = std::isfinite(x) ? std::max(m, static_cast<double>(std::abs(x))) : std::numeric_limits<double>::infinity();
  return m;
}

std::string diagnostics(const Model& model, const Tape& t, const ForwardResult& r, std::int64_t step) {
  std::ostringstream os;
  os << "step " << step << ": non-finite loss;";
  std::size_t offending = model.layers.size();
  for (std::size_t i = 0; i < model.layers.size() && offending == model.layers.size(); ++i)
    if (!std::isfinite(max_abs(t.value(r.outputs[i]).data()))) offending = i;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& s = model.layers[i].spec;
    os << " L" << i << (i == offending ? "*" : "") << "{w_scale=" << s.weight_params.scale
       << " act_scale=" << s.act_params.scale << " act_zero=" << s.act_params.zero_point
       << " max|g(Y)|=" << max_abs(t.value(r.pre_quant[i]).data()) << "}";
  }
  return os.str();
}

std::int64_t count_correct(const std::vector<std::int32_t>& pred, std::span<const std::int32_t> labels) {
  std::int64_t c = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) c += pred[i] == labels[i];
  return c;
}

}  // namespace

void SgdMomentum::step(Model& model, const GradMap& grads, const TrainConfig& config, float lr,
                       const std::map<std::string, std::int64_t>& elements) {
  for (ParamRef& p : model_params(model, config.shift_enabled)) {
    const auto g = grads.find(p.name);
    if (g == grads.end()) continue;
    const auto gd = g->second.data();
    if (gd.size() != p.data.size())
      throw ShapeError("optimizer: gradient of " + p.name + " has " + std::to_string(gd.size()) + " elements, parameter " +
                       std::to_string(p.data.size()));
    float step_lr = lr;
    if (p.quant && config.qparam_lr_mode == QParamLrMode::Scaled) {
      const auto e = elements.find(p.name);
      if (e != elements.end() && e->second > 0)
        step_lr = static_cast<float>(lr / std::sqrt(static_cast<double>(e->second)));
    }
    auto& v = velocity_[p.name];
    if (v.size() != p.data.size()) v.assign(p.data.size(), 0.0f);
    for (std::size_t k = 0; k < p.data.size(); ++k) {
      float grad = gd[k];
      if (p.decay) grad += config.weight_decay * p.data[k];
      v[k] = config.momentum * v[k] + grad;
      p.data[k] -= step_lr * v[k];
    }
    if (p.is_scale) p.data[0] = std::max(p.data[0], kScaleFloor);
  }
}

StepResult train_step(Model& model, SgdMomentum& optimizer, const Tensor& batch, std::span<const std::int32_t> labels,
                      const TrainConfig& config, float lr, ForwardMode mode, std::int64_t step_index) {
  Tape t;
  const ForwardResult r = forward(t, model, batch, {mode, true, config.shift_enabled});
  const Var loss = cross_entropy(t, r.logits, labels);
  const float loss_value = t.value(loss).item();
  if (!std::isfinite(loss_value)) throw TrainingError(diagnostics(model, t, r, step_index));

  const Tensor& logits = t.value(r.logits);
  StepResult result;
  result.loss = loss_value;
  result.correct = count_correct(argmax_rows(logits.data(), logits.dim(0), logits.dim(1)), labels);

  const GradMap grads = t.backward(loss);
  for (const auto& [name, g] : grads)
    if (!std::isfinite(max_abs(g.data())))
      throw TrainingError("step " + std::to_string(step_index) + ": non-finite gradient for " + name);

  std::map<std::string, std::int64_t> elements;
  if (mode == ForwardMode::FakeQuant) {
    elements[kInputScaleName] = elements[kInputZeroName] = batch.size();
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      elements[weight_scale_name(i)] = model.layers[i].weight.size();
      elements[act_scale_name(i)] = elements[act_zero_name(i)] = t.value(r.pre_quant[i]).size();
    }
  }
  optimizer.step(model, grads, config, lr, elements);
  return result;
}

TrainHistory train_model(Model& model, const Dataset& train, const Dataset& eval, const TrainConfig& config,
                         ForwardMode mode) {
  config.validate();
  train.validate();
  TrainHistory history;
  if (config.epochs == 0) return history;
  if (train.size() == 0) throw TrainingError("training set is empty");
  if (mode == ForwardMode::FakeQuant && model.stage != Stage::Qat)
    throw TrainingError("quantization-aware training needs a calibrated (qat-stage) model");

  SgdMomentum optimizer;
  Rng rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>((train.size() + bs - 1) / bs);
  const std::int64_t total_steps = steps_per_epoch * config.epochs;
  std::int64_t step = 0;
  double initial_loss = -1.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0, min_loss = std::numeric_limits<double>::infinity();
    std::int64_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      const std::span<const std::size_t> idx(order.data() + begin, std::min(bs, order.size() - begin));
      const Tensor batch = train.batch(idx);
      const auto labels = train.batch_labels(idx);
      const StepResult r =
          train_step(model, optimizer, batch, labels, config, scheduled_lr(config, step, total_steps), mode, step);
      if (initial_loss < 0.0) initial_loss = r.loss;
      loss_sum += r.loss * static_cast<double>(idx.size());
      min_loss = std::min(min_loss, r.loss);
      correct += r.correct;
      ++step;
    }
    if (min_loss > 10.0 * initial_loss)
      throw TrainingError("training diverged in epoch " + std::to_string(epoch) + ": every loss above " +
                          std::to_string(10.0 * initial_loss) + " (10x the initial loss)");

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(train.size());
    m.train_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(train.size());
    m.eval_accuracy = eval.size() ? evaluate(model, eval, mode).accuracy() : 0.0;
    m.input_params = model.input_params;
    for (const Layer& l : model.layers) {
      m.weight_params.push_back(l.spec.weight_params);
      m.act_params.push_back(l.spec.act_params);
    }
    history.epochs.push_back(std::move(m));
  }
  return history;
}

std::vector<std::int32_t> argmax_rows(std::span<const float> values, std::int64_t rows, std::int64_t cols) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* row = values.data() + r * cols;
    out[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(std::max_element(row, row + cols) - row);
  }
  return out;
}

EvalResult evaluate(const Model& model, const Dataset& data, ForwardMode mode, int batch_size) {
  data.validate();
  EvalResult res;
  const std::size_t bs = static_cast<std::size_t>(std::max(batch_size, 1));
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += bs) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(data.size(), begin + bs); ++i) idx.push_back(i);
    Tape t;
    const auto r = forward(t, model, data.batch(idx), {mode, false, false});
    const Tensor& logits = t.value(r.logits);
    const auto pred = argmax_rows(logits.data(), logits.dim(0), logits.dim(1));
    res.correct += count_correct(pred, data.batch_labels(idx));
    res.predictions.insert(res.predictions.end(), pred.begin(), pred.end());
  }
  res.count = static_cast<std::int64_t>(data.size());
  return res;
}

EvalResult evaluate_integer(const LoweredModel& model, const Dataset& data, int batch_size) {
  data.validate();
  EvalResult res;
  const std::size_t bs = static_cast<std::size_t>(std::max(batch_size, 1));
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += bs) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(data.size(), begin + bs); ++i) idx.push_back(i);
    const IntTensor out = run_integer(model, quantize_input(data.batch(idx), model.input_params));
    const std::int64_t rows = out.shape()[0], cols = out.shape()[1];
    std::vector<std::int32_t> pred(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
      const auto* row = out.data().data() + r * cols;
      pred[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(std::max_element(row, row + cols) - row);
    }
    res.correct += count_correct(pred, data.batch_labels(idx));
    res.predictions.insert(res.predictions.end(), pred.begin(), pred.end());
  }
  res.count = static_cast<std::int64_t>(data.size());
  return res;
}

}  // namespace adaqat
