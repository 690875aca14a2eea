#pragma once

// Experiment drivers behind the CLI: accuracy-vs-T sweeps, alpha ablation,
// noise-family comparison and the training-speed benchmark against direct
// multi-step training. Every driver returns ReportRows; CsvReport writes them.

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "noisnn/checkpoint.hpp"
#include "noisnn/dataset.hpp"
#include "noisnn/runtime.hpp"
#include "noisnn/trainer.hpp"

namespace noisnn {

struct ReportRow {
  std::string experiment;
  std::string config;  // "key=value;key=value"
  std::string metric;
  double value = 0.0;
  double seconds = 0.0;
};

inline constexpr const char* kReportHeader = "experiment,config,metric,value,seconds";

std::string render_row(const ReportRow& row);

/// Append-only CSV; the header is written only when the file is new or empty.
class CsvReport {
 public:
  explicit CsvReport(const std::string& path);
  void append(const ReportRow& row);
  void append(const std::vector<ReportRow>& rows);

 private:
  std::ofstream out_;
};

/// Finds the value of `key` inside a row's config string.
std::optional<std::string> config_value(const std::string& config, const std::string& key);

using ProgressFn = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// T sweep

struct SweepTOptions {
  std::vector<std::size_t> Ts{1, 5, 10};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};  // evaluation noise seeds
  std::vector<int> stages{2, 3};
  RenormParams renorm;
  std::size_t eval_batch = 200;
};

/// One accuracy row per (model, seed, stage, T).
std::vector<ReportRow> sweep_t(const std::vector<Checkpoint>& models, const Dataset& test,
                               const SweepTOptions& opt, const ProgressFn& progress = {});

// ---------------------------------------------------------------------------
// alpha sweep

struct SweepAlphaOptions {
  std::vector<float> alphas{2.0f, 3.0f, 4.0f, 8.0f, RenormParams::infinite_alpha};
  std::vector<std::size_t> Ts{1, 10};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  float beta = 0.5f;
  std::size_t eval_batch = 200;
};

/// Stage-3 accuracy rows per (model, seed, alpha, T). The config carries the
/// residual noise half range, which is 0 at alpha = 2.
std::vector<ReportRow> sweep_alpha(const std::vector<Checkpoint>& models, const Dataset& test,
                                   const SweepAlphaOptions& opt, const ProgressFn& progress = {});

// ---------------------------------------------------------------------------
// noise-family comparison

struct CompareNoiseOptions {
  std::vector<NoiseFamily> families{NoiseFamily::gaussian, NoiseFamily::uniform,
                                    NoiseFamily::none};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};  // training seeds; eval reuses them
  std::vector<std::size_t> Ts{1, 10};
  RenormParams renorm;
  TrainConfig train;
  std::size_t eval_batch = 200;
  /// Optional pre-trained models; called before training (family, seed).
  std::function<std::optional<Checkpoint>(NoiseFamily, std::uint64_t)> lookup;
  /// Called with every freshly trained model.
  std::function<void(const Checkpoint&)> store;
};

/// Trains one model per (family, seed) on identical budgets and reports
/// stage-3 accuracy at each T, per-family mean improvement between the first
/// and last T, and the last-T accuracy gap between gaussian and uniform.
std::vector<ReportRow> compare_noise(const NetworkSpec& base_spec, const Dataset& train,
                                     const Dataset& test, const CompareNoiseOptions& opt,
                                     const ProgressFn& progress = {});

// ---------------------------------------------------------------------------
// training-speed benchmark

/// Surrogate-gradient training through T unrolled LIF steps with carried
/// membrane state and no injected noise; the baseline arm of bench-speed.
class DirectTrainer {
 public:
  DirectTrainer(NetworkSpec spec, TrainConfig cfg, std::size_t T);

  EpochMetrics run_epoch(const Dataset& data);
  const ParamSet& params() const { return params_; }
  std::size_t T() const { return T_; }

 private:
  NetworkSpec spec_;
  TrainConfig cfg_;
  std::size_t T_;
  ParamSet params_;
  AdamState adam_;
  std::size_t epoch_ = 0;
};

/// Noise-free LIF network run for T steps (H = lambda V + W S), outputs averaged.
EvalResult forward_direct(const ParamSet& params, const NetworkSpec& spec, const Tensor& batch,
                          std::size_t T);
double evaluate_direct(const ParamSet& params, const NetworkSpec& spec, const Dataset& data,
                       std::size_t T, std::size_t batch_size = 200);

struct BenchSpeedOptions {
  double target_accuracy = 0.9;
  double budget_seconds = 600.0;  // training wall clock per arm
  std::size_t max_epochs = 50;
  std::size_t T = 10;
  RenormParams renorm;
  TrainConfig train;
  std::uint64_t eval_seed = 1;
  std::size_t eval_batch = 200;
};

struct ArmReport {
  std::string arm;
  bool reached = false;
  std::size_t epochs = 0;
  double train_seconds = 0.0;  // evaluation time excluded
  double mean_epoch_seconds = 0.0;
  double final_accuracy = 0.0;
};

struct BenchSpeedReport {
  ArmReport ours;
  ArmReport direct;
  double speedup = 0.0;  // direct.train_seconds / ours.train_seconds
  std::vector<ReportRow> rows;
};

/// Arm "ours": stage-1 training, converted to stage 3 at T for the accuracy
/// check after each epoch. Arm "direct": DirectTrainer at T. Each arm stops at
/// the target accuracy, the epoch cap or the wall-clock budget.
BenchSpeedReport bench_speed(const NetworkSpec& spec, const Dataset& train, const Dataset& test,
                             const BenchSpeedOptions& opt, const ProgressFn& progress = {});

}  // namespace noisnn
