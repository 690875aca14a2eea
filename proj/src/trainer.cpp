#include "noisnn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "noisnn/error.hpp"
#include "noisnn/ops.hpp"
#include "noisnn/runtime.hpp"

namespace noisnn {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(lr0 >= 0.0f) || !std::isfinite(lr0)) throw ConfigError("learning rate must be >= 0");
  if (!(lr_min >= 0.0f) || lr_min > lr0) throw ConfigError("lr_min must lie in [0, lr0]");
  if (scheduler_period < 1) throw ConfigError("scheduler period must be >= 1");
}

AdamState AdamState::for_params(const ParamSet& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

void adam_update(ParamSet& params, const std::vector<Tensor>& grads, AdamState& state, float lr,
                 float beta1, float beta2, float eps) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw DimensionError("adam_update: parameter, gradient and state counts differ");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(params[k], grads[k], "adam_update");
    auto p = params[k].values();
    const auto g = grads[k].values();
    auto m = state.m[k].values();
    auto v = state.v[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

float cosine_warm_restart_lr(std::size_t epoch, const TrainConfig& cfg) {
  const double phase = static_cast<double>(epoch % cfg.scheduler_period) /
                       static_cast<double>(cfg.scheduler_period);
  return static_cast<float>(cfg.lr_min + (cfg.lr0 - cfg.lr_min) / 2.0 *
                                             (1.0 + std::cos(std::numbers::pi * phase)));
}

Stage1Trainer::Stage1Trainer(NetworkSpec spec, TrainConfig cfg)
    : spec_(std::move(spec)), cfg_(cfg) {
  cfg_.validate();
  spec_.validate();
  Rng rng = Rng::substream(cfg_.seed, StreamTag::init, {});
  params_ = init_params(spec_, rng);
  adam_ = AdamState::for_params(params_);
}

Stage1Trainer::Stage1Trainer(NetworkSpec spec, TrainConfig cfg, ParamSet initial)
    : spec_(std::move(spec)), cfg_(cfg), params_(std::move(initial)) {
  cfg_.validate();
  spec_.validate();
  adam_ = AdamState::for_params(params_);
}

namespace {

[[noreturn]] void report_divergence(const NetworkSpec& spec, const ParamSet& params,
                                    const std::vector<LayerTrace>& trace, std::size_t epoch,
                                    std::uint64_t iteration) {
  std::string where = "loss";
  std::size_t pi = 0;
  for (std::size_t i = 0; i < spec.layers.size() && where == "loss"; ++i) {
    if (!spec.layers[i].has_weights()) continue;
    const std::size_t n = spec.bias_enabled ? 2 : 1;
    for (std::size_t k = 0; k < n; ++k) {
      if (!params[pi + k].all_finite()) where = "parameters of layer " + std::to_string(i);
    }
    pi += n;
  }
  if (where == "loss") {
    for (const auto& t : trace) {
      if (!t.value->value.all_finite()) {
        where = "output of " + t.name;
        break;
      }
    }
  }
  throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                     ", iteration " + std::to_string(iteration) + "; first offender: " + where);
}

}  // namespace

EpochMetrics Stage1Trainer::run_epoch(const Dataset& data) {
  const auto start = std::chrono::steady_clock::now();
  EpochMetrics m;
  m.epoch = epoch_;
  m.lr = cosine_warm_restart_lr(epoch_, cfg_);

  BatchIterator it(data, cfg_.batch_size, cfg_.seed, epoch_, spec_.num_classes());
  Batch b;
  double loss_sum = 0.0;
  std::size_t correct = 0, seen = 0;
  while (it.next(b)) {
    const NoiseStream noise(cfg_.seed, StreamTag::train_noise, iteration_);
    auto fwd = forward_stage1(params_, spec_, b.images, noise, /*record_graph=*/true);
    Var loss = ops::mse_loss(fwd.output, b.targets);
    const float lv = loss->value[0];
    if (!std::isfinite(lv)) report_divergence(spec_, params_, fwd.trace, epoch_, iteration_);

    backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(fwd.param_vars.size());
    for (const auto& pv : fwd.param_vars) {
      grads.push_back(pv->grad.empty() ? Tensor(pv->value.shape()) : std::move(pv->grad));
    }
    adam_update(params_, grads, adam_, m.lr, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps);

    loss_sum += static_cast<double>(lv) * b.labels.size();
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
      correct += fwd.eval.predictions[i] == b.labels[i] ? 1 : 0;
    }
    seen += b.labels.size();
    ++iteration_;
  }
  m.loss = loss_sum / static_cast<double>(seen);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ++epoch_;
  return m;
}

Checkpoint Stage1Trainer::checkpoint(std::string created) const {
  Checkpoint c;
  c.spec = spec_;
  c.mode = RunMode{};
  c.seed = cfg_.seed;
  c.created = std::move(created);
  c.params = params_;
  return c;
}

TrainResult train_stage1(const NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch) {
  Stage1Trainer trainer(spec, cfg);
  TrainResult r;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    r.metrics.push_back(trainer.run_epoch(data));
    if (on_epoch) on_epoch(r.metrics.back());
  }
  r.checkpoint = trainer.checkpoint();
  return r;
}

}  // namespace noisnn
