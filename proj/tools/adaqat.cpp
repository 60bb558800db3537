// Command-line front end: data generation, float training, calibration,
// quantization-aware training, lowering, inference and analysis.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "adaqat/calibration.hpp"
#include "adaqat/error.hpp"
#include "adaqat/gradcheck.hpp"
#include "adaqat/io.hpp"
#include "adaqat/rng.hpp"
#include "adaqat/training.hpp"

using namespace adaqat;

namespace {

enum class Engine { Float, FakeQuant, Integer };

Engine parse_engine(const std::string& s) {
  if (s == "float") return Engine::Float;
  if (s == "fake-quant") return Engine::FakeQuant;
  if (s == "integer") return Engine::Integer;
  throw Error("unknown engine '" + s + "' (float, fake-quant, integer)");
}

struct Outputs {
  EvalResult eval;
  std::vector<std::string> rows;  // per-sample raw outputs, comma separated
};

Outputs run_engine(const io::ModelContainer& c, const Dataset& data, Engine engine, bool keep_rows) {
  Outputs out;
  if (engine == Engine::Integer) {
    if (!c.lowered) throw Error("the integer engine needs a lowered container (run 'lower' first)");
    const LoweredModel& m = *c.lowered;
    out.eval = evaluate_integer(m, data);
    if (keep_rows) {
      for (std::size_t begin = 0; begin < data.size(); begin += kEvalBatch) {
        std::vector<std::size_t> idx;
        for (std::size_t i = begin; i < std::min(data.size(), begin + kEvalBatch); ++i) idx.push_back(i);
        const IntTensor codes = run_integer(m, quantize_input(data.batch(idx), m.input_params));
        const std::size_t cols = codes.size() / idx.size();
        for (std::size_t r = 0; r < idx.size(); ++r) {
          std::string row;
          for (std::size_t k = 0; k < cols; ++k) row += (k ? "," : "") + std::to_string(codes[r * cols + k]);
          out.rows.push_back(row);
        }
      }
    }
    return out;
  }
  const Model m = c.model ? *c.model : reconstruct_qat_model(*c.lowered);
  const ForwardMode mode = engine == Engine::Float ? ForwardMode::Float : ForwardMode::FakeQuant;
  if (mode == ForwardMode::FakeQuant && m.stage == Stage::Float)
    throw Error("the fake-quant engine needs a calibrated (qat or lowered) container");
  out.eval = evaluate(m, data, mode);
  if (keep_rows) {
    for (std::size_t begin = 0; begin < data.size(); begin += kEvalBatch) {
      std::vector<std::size_t> idx;
      for (std::size_t i = begin; i < std::min(data.size(), begin + kEvalBatch); ++i) idx.push_back(i);
      Tape t;
      const auto r = forward(t, m, data.batch(idx), {mode, false, false});
      const Tensor& logits = t.value(r.logits);
      const std::size_t cols = logits.size() / idx.size();
      for (std::size_t s = 0; s < idx.size(); ++s) {
        std::string row;
        for (std::size_t k = 0; k < cols; ++k) row += (k ? "," : "") + io::format_float(logits[s * cols + k]);
        out.rows.push_back(row);
      }
    }
  }
  return out;
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

int report_error(const std::string& kind, const std::string& message, const std::string& extra = "") {
  std::cerr << "error kind=" << kind << extra << " message=\"" << one_line(message) << "\"\n";
  return 1;
}

void print_history(const TrainHistory& h) {
  for (const auto& e : h.epochs)
    std::printf("epoch=%d train_loss=%.6f train_accuracy=%.2f eval_accuracy=%.2f\n", e.epoch, e.train_loss,
                e.train_accuracy, e.eval_accuracy);
}

Dataset load_or_empty(const std::string& path) { return path.empty() ? Dataset{} : io::load_dataset(path); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantization-aware training with learned scale and zero-point, plus an integer-only engine"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  try {
    seed = default_seed(1);
  } catch (const Error& e) {
    return report_error("Error", e.what());
  }

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic 10-class shapes dataset container");
  std::size_t gen_count = 2000;
  std::string gen_out;
  gen->add_option("--count", gen_count, "Number of samples")->capture_default_str();
  gen->add_option("--out", gen_out, "Output dataset container")->required();
  gen->add_option("--seed", seed, "Generator seed (default: $ADAQAT_SEED or 1)");

  // train-float
  auto* tf = app.add_subcommand("train-float", "Train the float baseline");
  std::string tf_data, tf_eval, tf_out, tf_metrics, tf_act = "leaky_relu:0.1";
  TrainConfig tf_cfg;
  tf_cfg.lr = 0.05f;
  tf_cfg.epochs = 10;
  tf->add_option("--data", tf_data, "Training dataset container")->required();
  tf->add_option("--eval", tf_eval, "Evaluation dataset container");
  tf->add_option("--out", tf_out, "Output float model container")->required();
  tf->add_option("--metrics", tf_metrics, "Per-epoch metrics CSV");
  tf->add_option("--activation", tf_act, "identity, relu, leaky_relu[:alpha] or swish")->capture_default_str();
  tf->add_option("--epochs", tf_cfg.epochs)->capture_default_str();
  tf->add_option("--lr", tf_cfg.lr)->capture_default_str();
  tf->add_option("--batch", tf_cfg.batch_size)->capture_default_str();
  tf->add_option("--momentum", tf_cfg.momentum)->capture_default_str();
  tf->add_option("--weight-decay", tf_cfg.weight_decay)->capture_default_str();
  tf->add_option("--seed", seed, "Initialization and shuffling seed");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Initialize quantization parameters from activation statistics");
  std::string cal_model, cal_data, cal_out, cal_method = "sqnr";
  CalibrationOptions cal_opts;
  bool cal_no_shift = false;
  cal->add_option("--model", cal_model, "Float model container")->required();
  cal->add_option("--data", cal_data, "Calibration dataset container")->required();
  cal->add_option("--out", cal_out, "Output qat model container")->required();
  cal->add_option("--bits", cal_opts.bits)->capture_default_str();
  cal->add_option("--first-last-bits", cal_opts.first_last_bits)->capture_default_str();
  cal->add_flag("--no-shift", cal_no_shift, "Pin activation zero-points to 0");
  cal->add_option("--method", cal_method, "minmax or sqnr")->capture_default_str();
  cal->add_option("--batches", cal_opts.batches)->capture_default_str();
  cal->add_option("--batch", cal_opts.batch_size)->capture_default_str();

  // qat
  auto* qat = app.add_subcommand("qat", "Quantization-aware retraining of a calibrated model");
  std::string qat_model, qat_data, qat_eval, qat_out, qat_metrics, qat_lr_mode = "scaled";
  TrainConfig qat_cfg;
  bool qat_no_shift = false, qat_no_cosine = false;
  qat->add_option("--model", qat_model, "Qat model container")->required();
  qat->add_option("--data", qat_data, "Training dataset container")->required();
  qat->add_option("--eval", qat_eval, "Evaluation dataset container");
  qat->add_option("--out", qat_out, "Output qat model container")->required();
  qat->add_option("--metrics", qat_metrics, "Per-epoch metrics CSV");
  qat->add_option("--epochs", qat_cfg.epochs)->capture_default_str();
  qat->add_option("--lr", qat_cfg.lr)->capture_default_str();
  qat->add_option("--batch", qat_cfg.batch_size)->capture_default_str();
  qat->add_option("--momentum", qat_cfg.momentum)->capture_default_str();
  qat->add_option("--weight-decay", qat_cfg.weight_decay)->capture_default_str();
  qat->add_flag("--no-shift", qat_no_shift, "Keep activation zero-points fixed");
  qat->add_flag("--no-cosine", qat_no_cosine, "Constant learning rate");
  qat->add_option("--qparam-lr", qat_lr_mode, "scaled or literal")->capture_default_str();
  qat->add_option("--seed", seed, "Shuffling seed");

  // lower
  auto* low = app.add_subcommand("lower", "Lower a qat model to the integer-only form");
  std::string low_model, low_out, low_report;
  low->add_option("--model", low_model, "Qat model container")->required();
  low->add_option("--out", low_out, "Output lowered container")->required();
  low->add_option("--report", low_report, "Lowering report (JSON)");

  // infer / eval
  std::string run_model, run_data, run_engine_name = "float", run_out;
  auto* inf = app.add_subcommand("infer", "Write raw model outputs for every sample as CSV");
  auto* ev = app.add_subcommand("eval", "Report top-1 accuracy");
  for (auto* sub : {inf, ev}) {
    sub->add_option("--model", run_model, "Model container")->required();
    sub->add_option("--data", run_data, "Dataset container")->required();
    sub->add_option("--engine", run_engine_name, "float, fake-quant or integer")->capture_default_str();
  }
  inf->add_option("--out", run_out, "Output CSV (default: stdout)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Run the gradient oracle and finite-difference suites");
  GradcheckOptions gc_opts;
  gc->add_option("--trials", gc_opts.oracle_trials, "Random tensors for the fake-quant oracle")->capture_default_str();
  gc->add_option("--fd-trials", gc_opts.fd_trials, "Random smooth compositions")->capture_default_str();
  gc->add_option("--seed", seed);

  // analyze
  auto* an = app.add_subcommand("analyze", "Write per-layer activation histograms as CSV");
  std::string an_model, an_data, an_out;
  int an_batches = 4, an_batch = 64;
  an->add_option("--model", an_model, "Float or qat model container")->required();
  an->add_option("--data", an_data, "Dataset container")->required();
  an->add_option("--out", an_out, "Output CSV (default: stdout)");
  an->add_option("--batches", an_batches)->capture_default_str();
  an->add_option("--batch", an_batch)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error kind=UsageError message=\"" << one_line(e.what()) << "\"\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      const Dataset d = make_shapes_dataset(gen_count, seed);
      io::save_dataset(gen_out, d);
      std::printf("samples=%zu classes=%d out=%s\n", d.size(), d.num_classes, gen_out.c_str());
    } else if (tf->parsed()) {
      const Dataset train = io::load_dataset(tf_data), eval = load_or_empty(tf_eval);
      Model m = make_desk_cnn(parse_activation(tf_act), seed, train.num_classes);
      tf_cfg.seed = seed;
      const TrainHistory h = train_float(m, train, eval, tf_cfg);
      print_history(h);
      io::save_model(tf_out, m);
      if (!tf_metrics.empty()) io::write_text(tf_metrics, io::metrics_csv(h));
    } else if (cal->parsed()) {
      Model m = io::load_model(cal_model);
      if (m.stage != Stage::Float) throw Error("calibrate expects a float container, got " + stage_name(m.stage));
      if (cal_method == "minmax")
        cal_opts.method = CalibrationMethod::MinMax;
      else if (cal_method == "sqnr")
        cal_opts.method = CalibrationMethod::Sqnr;
      else
        throw Error("unknown calibration method '" + cal_method + "' (minmax, sqnr)");
      cal_opts.shift_enabled = !cal_no_shift;
      calibrate_model(m, io::load_dataset(cal_data), cal_opts);
      io::save_model(cal_out, m);
      std::printf("input scale=%s zero=%s\n", io::format_float(m.input_params.scale).c_str(),
                  io::format_float(m.input_params.zero_point).c_str());
      for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& s = m.layers[i].spec;
        std::printf("layer=%zu w_bits=%d w_scale=%s act_bits=%d act_scale=%s act_zero=%s\n", i, s.weight_params.bits,
                    io::format_float(s.weight_params.scale).c_str(), s.act_params.bits,
                    io::format_float(s.act_params.scale).c_str(), io::format_float(s.act_params.zero_point).c_str());
      }
    } else if (qat->parsed()) {
      Model m = io::load_model(qat_model);
      const Dataset train = io::load_dataset(qat_data), eval = load_or_empty(qat_eval);
      qat_cfg.seed = seed;
      qat_cfg.shift_enabled = !qat_no_shift;
      qat_cfg.cosine_schedule = !qat_no_cosine;
      qat_cfg.qparam_lr_mode = parse_qparam_lr_mode(qat_lr_mode);
      const TrainHistory h = qat_train(m, train, eval, qat_cfg);
      print_history(h);
      io::save_model(qat_out, m);
      if (!qat_metrics.empty()) io::write_text(qat_metrics, io::metrics_csv(h));
    } else if (low->parsed()) {
      const Model m = io::load_model(low_model);
      if (m.stage != Stage::Qat) throw Error("lower expects a qat container, got " + stage_name(m.stage));
      LoweringReport report;
      const LoweredModel lowered = lower_model(m, &report);
      io::save_lowered(low_out, lowered);
      if (!low_report.empty()) io::write_text(low_report, report.to_json());
      std::printf("layers=%zu weight_bytes=%lld side_bytes=%lld\n", lowered.layers.size(),
                  static_cast<long long>(report.weight_bytes), static_cast<long long>(report.side_bytes));
    } else if (inf->parsed() || ev->parsed()) {
      const io::ModelContainer c = io::load_container(run_model);
      const Dataset data = io::load_dataset(run_data);
      const Engine engine = parse_engine(run_engine_name);
      const Outputs out = run_engine(c, data, engine, inf->parsed());
      if (ev->parsed()) {
        std::printf("engine=%s accuracy=%.2f correct=%lld count=%lld\n", run_engine_name.c_str(), out.eval.accuracy(),
                    static_cast<long long>(out.eval.correct), static_cast<long long>(out.eval.count));
      } else {
        std::ostringstream csv;
        csv << "sample,label,prediction";
        const std::size_t cols = out.rows.empty() ? 0 : std::count(out.rows[0].begin(), out.rows[0].end(), ',') + 1;
        for (std::size_t k = 0; k < cols; ++k) csv << ",out" << k;
        csv << "\n";
        for (std::size_t i = 0; i < out.rows.size(); ++i)
          csv << i << ',' << data.labels[i] << ',' << out.eval.predictions[i] << ',' << out.rows[i] << "\n";
        if (run_out.empty())
          std::cout << csv.str();
        else
          io::write_text(run_out, csv.str());
      }
    } else if (gc->parsed()) {
      gc_opts.seed = seed;
      bool all = true;
      for (const CheckResult& r : run_gradcheck(gc_opts)) {
        std::printf("%s %s trials=%d max_error=%.3g%s%s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.trials,
                    r.max_error, r.detail.empty() ? "" : " detail=", r.detail.c_str());
        all = all && r.passed;
      }
      if (!all) return report_error("GradcheckFailure", "one or more gradient checks failed");
    } else if (an->parsed()) {
      const Model m = io::load_model(an_model);
      const Dataset data = io::load_dataset(an_data);
      std::vector<Tensor> batches;
      for (int b = 0; b < an_batches; ++b) {
        std::vector<std::size_t> idx;
        const std::size_t begin = static_cast<std::size_t>(b) * static_cast<std::size_t>(an_batch);
        for (std::size_t i = begin; i < std::min(data.size(), begin + static_cast<std::size_t>(an_batch)); ++i)
          idx.push_back(i);
        if (!idx.empty()) batches.push_back(data.batch(idx));
      }
      const std::string csv = io::histogram_csv(m, collect_stats(m, batches));
      if (an_out.empty())
        std::cout << csv;
      else
        io::write_text(an_out, csv);
    }
  } catch (const ChecksumError& e) {
    return report_error("ChecksumError", e.what(), " offset=" + std::to_string(e.offset()));
  } catch (const LoweringError& e) {
    return report_error("LoweringError", e.what(), " layer=" + std::to_string(e.layer()));
  } catch (const FormatError& e) {
    return report_error("FormatError", e.what());
  } catch (const TrainingError& e) {
    return report_error("TrainingError", e.what());
  } catch (const ShapeError& e) {
    return report_error("ShapeError", e.what());
  } catch (const Error& e) {
    return report_error("Error", e.what());
  } catch (const std::exception& e) {
    return report_error("InternalError", e.what());
  }
  return 0;
}
