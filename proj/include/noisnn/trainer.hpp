#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "noisnn/arch.hpp"
#include "noisnn/checkpoint.hpp"
#include "noisnn/dataset.hpp"

namespace noisnn {

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  float lr0 = 1e-4f;
  float lr_min = 0.0f;
  std::size_t scheduler_period = 100;  // epochs between warm restarts
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState for_params(const ParamSet& params);
};

/// Bias-corrected Adam step applied in place.
void adam_update(ParamSet& params, const std::vector<Tensor>& grads, AdamState& state, float lr,
                 float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);

/// Cosine annealing from lr0 to lr_min over each period, restarting at lr0.
float cosine_warm_restart_lr(std::size_t epoch, const TrainConfig& cfg);

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double seconds = 0.0;
  float lr = 0.0f;
};

/// Minibatch trainer for the single-step noisy network: fresh noise every
/// iteration, MSE against one-hot targets, Adam with the cosine schedule.
class Stage1Trainer {
 public:
  Stage1Trainer(NetworkSpec spec, TrainConfig cfg);
  Stage1Trainer(NetworkSpec spec, TrainConfig cfg, ParamSet initial);

  /// One pass over `data`. Throws NumericError on a non-finite loss.
  EpochMetrics run_epoch(const Dataset& data);

  const ParamSet& params() const { return params_; }
  const NetworkSpec& spec() const { return spec_; }
  std::size_t epochs_done() const { return epoch_; }
  std::uint64_t iterations() const { return iteration_; }
  Checkpoint checkpoint(std::string created = {}) const;

 private:
  NetworkSpec spec_;
  TrainConfig cfg_;
  ParamSet params_;
  AdamState adam_;
  std::size_t epoch_ = 0;
  std::uint64_t iteration_ = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> metrics;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

TrainResult train_stage1(const NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {});

}  // namespace noisnn
