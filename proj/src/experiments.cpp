#include "noisnn/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "noisnn/error.hpp"
#include "noisnn/kernels.hpp"
#include "noisnn/ops.hpp"

namespace noisnn {

std::string render_row(const ReportRow& row) {
  char value[64], seconds[64];
  std::snprintf(value, sizeof value, "%.6g", row.value);
  std::snprintf(seconds, sizeof seconds, "%.3f", row.seconds);
  return row.experiment + "," + row.config + "," + row.metric + "," + value + "," + seconds;
}

CsvReport::CsvReport(const std::string& path) {
  namespace fs = std::filesystem;
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw FormatError("cannot open report " + path);
  if (fresh) out_ << kReportHeader << '\n';
}

void CsvReport::append(const ReportRow& row) { out_ << render_row(row) << '\n' << std::flush; }

void CsvReport::append(const std::vector<ReportRow>& rows) {
  for (const auto& r : rows) append(r);
}

std::optional<std::string> config_value(const std::string& config, const std::string& key) {
  std::size_t pos = 0;
  while (pos <= config.size()) {
    std::size_t end = config.find(';', pos);
    if (end == std::string::npos) end = config.size();
    const std::string item = config.substr(pos, end - pos);
    const auto eq = item.find('=');
    if (eq != std::string::npos && item.substr(0, eq) == key) return item.substr(eq + 1);
    pos = end + 1;
  }
  return std::nullopt;
}

namespace {

std::string alpha_text(float a) { return std::isinf(a) ? "inf" : format_float(a); }

void say(const ProgressFn& p, const std::string& msg) {
  if (p) p(msg);
}

}  // namespace

std::vector<ReportRow> sweep_t(const std::vector<Checkpoint>& models, const Dataset& test,
                               const SweepTOptions& opt, const ProgressFn& progress) {
  std::vector<ReportRow> rows;
  for (const auto& m : models) {
    for (auto seed : opt.seeds) {
      for (int stage : opt.stages) {
        for (auto T : opt.Ts) {
          RunMode mode{stage, stage == 1 ? 1 : T, opt.renorm};
          if (stage == 1 && T != 1) continue;
          const auto s = evaluate(m.params, m.spec, test, mode, seed, opt.eval_batch);
          std::string cfg = "model=" + std::to_string(m.seed) + ";seed=" + std::to_string(seed) +
                            ";stage=" + std::to_string(stage) + ";T=" + std::to_string(T) +
                            ";noise=" + to_string(m.spec.noise.family);
          if (stage == 3) {
            cfg += ";alpha=" + alpha_text(opt.renorm.alpha) +
                   ";beta=" + format_float(opt.renorm.beta);
          }
          rows.push_back({"sweep-t", cfg, "accuracy", s.accuracy, s.seconds});
          say(progress, render_row(rows.back()));
        }
      }
    }
  }
  return rows;
}

std::vector<ReportRow> sweep_alpha(const std::vector<Checkpoint>& models, const Dataset& test,
                                   const SweepAlphaOptions& opt, const ProgressFn& progress) {
  std::vector<ReportRow> rows;
  for (const auto& m : models) {
    for (float alpha : opt.alphas) {
      const RenormParams renorm{alpha, opt.beta};
      const NoiseSpec residual = residual_noise_spec(m.spec.noise, renorm);
      for (auto seed : opt.seeds) {
        for (auto T : opt.Ts) {
          const auto s = evaluate(m.params, m.spec, test, RunMode{3, T, renorm}, seed,
                                  opt.eval_batch);
          const std::string cfg =
              "model=" + std::to_string(m.seed) + ";seed=" + std::to_string(seed) +
              ";stage=3;T=" + std::to_string(T) + ";alpha=" + alpha_text(alpha) +
              ";beta=" + format_float(opt.beta) +
              ";residual_half_range=" + format_float(residual.half_range) +
              ";noise=" + to_string(m.spec.noise.family);
          rows.push_back({"sweep-alpha", cfg, "accuracy", s.accuracy, s.seconds});
          say(progress, render_row(rows.back()));
        }
      }
    }
  }
  return rows;
}

std::vector<ReportRow> compare_noise(const NetworkSpec& base_spec, const Dataset& train,
                                     const Dataset& test, const CompareNoiseOptions& opt,
                                     const ProgressFn& progress) {
  if (opt.Ts.empty()) throw ConfigError("compare-noise needs at least one T");
  std::vector<ReportRow> rows;
  // family -> T -> accuracies over seeds
  std::map<NoiseFamily, std::map<std::size_t, std::vector<double>>> acc;

  for (auto family : opt.families) {
    for (auto seed : opt.seeds) {
      std::optional<Checkpoint> model = opt.lookup ? opt.lookup(family, seed) : std::nullopt;
      double train_seconds = 0.0;
      if (!model) {
        NetworkSpec spec = base_spec;
        spec.noise.family = family;
        TrainConfig cfg = opt.train;
        cfg.seed = seed;
        auto r = train_stage1(spec, train, cfg);
        for (const auto& m : r.metrics) train_seconds += m.seconds;
        model = std::move(r.checkpoint);
        if (opt.store) opt.store(*model);
      }
      say(progress, "trained " + to_string(family) + " seed " + std::to_string(seed));
      for (auto T : opt.Ts) {
        const auto s =
            evaluate(model->params, model->spec, test, RunMode{3, T, opt.renorm}, seed,
                     opt.eval_batch);
        acc[family][T].push_back(s.accuracy);
        rows.push_back({"compare-noise",
                        "noise=" + to_string(family) + ";seed=" + std::to_string(seed) +
                            ";stage=3;T=" + std::to_string(T) +
                            ";alpha=" + alpha_text(opt.renorm.alpha) +
                            ";beta=" + format_float(opt.renorm.beta),
                        "accuracy", s.accuracy, s.seconds + train_seconds});
        say(progress, render_row(rows.back()));
      }
    }
  }

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  const std::size_t t_first = opt.Ts.front(), t_last = opt.Ts.back();
  for (auto family : opt.families) {
    rows.push_back({"compare-noise",
                    "noise=" + to_string(family) + ";T_from=" + std::to_string(t_first) +
                        ";T_to=" + std::to_string(t_last),
                    "mean_improvement", mean(acc[family][t_last]) - mean(acc[family][t_first]),
                    0.0});
  }
  if (acc.count(NoiseFamily::gaussian) && acc.count(NoiseFamily::uniform)) {
    rows.push_back({"compare-noise", "T=" + std::to_string(t_last), "gap_gaussian_minus_uniform",
                    mean(acc[NoiseFamily::gaussian][t_last]) -
                        mean(acc[NoiseFamily::uniform][t_last]),
                    0.0});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// direct multi-step training

DirectTrainer::DirectTrainer(NetworkSpec spec, TrainConfig cfg, std::size_t T)
    : spec_(std::move(spec)), cfg_(cfg), T_(T) {
  if (T_ < 1) throw ConfigError("T must be >= 1");
  cfg_.validate();
  spec_.validate();
  Rng rng = Rng::substream(cfg_.seed, StreamTag::init, {});
  params_ = init_params(spec_, rng);
  adam_ = AdamState::for_params(params_);
}

namespace {

// Unrolled graph: H(t) = lambda V(t-1) + W S(t), spike, reset; readout averaged.
Var direct_graph(const std::vector<Var>& p, const NetworkSpec& spec, const Var& input,
                 std::size_t T) {
  std::vector<Var> state(spec.num_spiking_layers());
  std::vector<Var> outputs;
  Var first_layer;  // input is identical at every step
  auto spike = [&](std::size_t idx, const Var& wx, bool readout_potential) {
    Var h = state[idx] ? ops::add(ops::scale(state[idx], spec.lif.lambda), wx) : wx;
    Var s = ops::heaviside(h, spec.surrogate);
    state[idx] = ops::lif_reset(h, s, spec.lif.v_reset);
    return readout_potential ? h : s;
  };
  for (std::size_t t = 0; t < T; ++t) {
    Var x = input;
    std::size_t pi = 0, spiking = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto& l = spec.layers[i];
      switch (l.kind) {
        case LayerKind::conv3:
        case LayerKind::fc: {
          const Var& w = p[pi++];
          Var b = spec.bias_enabled ? p[pi++] : nullptr;
          if (i == 0 && first_layer) {
            x = first_layer;
            break;
          }
          x = l.kind == LayerKind::conv3 ? ops::conv2d(x, w, b) : ops::fc(x, w, b);
          if (i == 0) first_layer = x;
          break;
        }
        case LayerKind::avgpool2: x = ops::avgpool2(x); break;
        case LayerKind::flatten: x = ops::flatten(x); break;
        case LayerKind::spike: x = spike(spiking++, x, false); break;
      }
    }
    outputs.push_back(spike(spiking, x, spec.readout == Readout::potentials));
  }
  return ops::mean_of(outputs);
}

Tensor flat_input(const NetworkSpec& spec, const Tensor& batch) {
  if (spec.input_shape.size() == 1 && batch.rank() != 2) {
    return batch.reshaped({batch.dim(0), spec.input_shape[0]});
  }
  return batch;
}

}  // namespace

EpochMetrics DirectTrainer::run_epoch(const Dataset& data) {
  const auto start = std::chrono::steady_clock::now();
  EpochMetrics m;
  m.epoch = epoch_;
  m.lr = cosine_warm_restart_lr(epoch_, cfg_);
  BatchIterator it(data, cfg_.batch_size, cfg_.seed, epoch_, spec_.num_classes());
  Batch b;
  double loss_sum = 0.0;
  std::size_t correct = 0, seen = 0;
  while (it.next(b)) {
    std::vector<Var> vars;
    for (const auto& t : params_) vars.push_back(parameter(t));
    Var out = direct_graph(vars, spec_, constant(flat_input(spec_, b.images)), T_);
    Var loss = ops::mse_loss(out, b.targets);
    const float lv = loss->value[0];
    if (!std::isfinite(lv)) {
      throw NumericError("non-finite loss in direct training at epoch " + std::to_string(epoch_));
    }
    backward(loss);
    std::vector<Tensor> grads;
    for (const auto& v : vars) grads.push_back(v->grad.empty() ? Tensor(v->value.shape()) : v->grad);
    adam_update(params_, grads, adam_, m.lr, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps);
    const auto pred = argmax_rows(out->value);
    for (std::size_t i = 0; i < b.labels.size(); ++i) correct += pred[i] == b.labels[i] ? 1 : 0;
    loss_sum += static_cast<double>(lv) * b.labels.size();
    seen += b.labels.size();
  }
  m.loss = loss_sum / static_cast<double>(seen);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ++epoch_;
  return m;
}

EvalResult forward_direct(const ParamSet& params, const NetworkSpec& spec, const Tensor& batch,
                          std::size_t T) {
  std::vector<Var> vars;
  for (const auto& t : params) vars.push_back(constant(t));
  Var out = direct_graph(vars, spec, constant(flat_input(spec, batch)), T);
  EvalResult r;
  r.averaged_output = out->value;
  r.predictions = argmax_rows(r.averaged_output);
  return r;
}

double evaluate_direct(const ParamSet& params, const NetworkSpec& spec, const Dataset& data,
                       std::size_t T, std::size_t batch_size) {
  BatchIterator it(data, batch_size, 0, 0, spec.num_classes(), false);
  Batch b;
  std::size_t correct = 0;
  while (it.next(b)) {
    const auto r = forward_direct(params, spec, b.images, T);
    for (std::size_t i = 0; i < b.labels.size(); ++i) correct += r.predictions[i] == b.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

BenchSpeedReport bench_speed(const NetworkSpec& spec, const Dataset& train, const Dataset& test,
                             const BenchSpeedOptions& opt, const ProgressFn& progress) {
  BenchSpeedReport rep;
  const std::string tcfg = "T=" + std::to_string(opt.T) +
                           ";target=" + format_float(static_cast<float>(opt.target_accuracy)) +
                           ";batch=" + std::to_string(opt.train.batch_size) +
                           ";seed=" + std::to_string(opt.train.seed);

  auto run_arm = [&](ArmReport& arm, auto&& train_epoch, auto&& accuracy) {
    double epoch_sum = 0.0;
    while (arm.epochs < opt.max_epochs && arm.train_seconds < opt.budget_seconds) {
      const EpochMetrics m = train_epoch();
      ++arm.epochs;
      arm.train_seconds += m.seconds;
      epoch_sum += m.seconds;
      arm.final_accuracy = accuracy();
      say(progress, arm.arm + " epoch " + std::to_string(arm.epochs) + ": train " +
                        std::to_string(m.seconds) + "s, test acc " +
                        std::to_string(arm.final_accuracy));
      if (arm.final_accuracy >= opt.target_accuracy) {
        arm.reached = true;
        break;
      }
    }
    arm.mean_epoch_seconds = arm.epochs ? epoch_sum / static_cast<double>(arm.epochs) : 0.0;
  };

  rep.ours.arm = "ours";
  {
    Stage1Trainer trainer(spec, opt.train);
    const RunMode mode{3, opt.T, opt.renorm};
    run_arm(
        rep.ours, [&] { return trainer.run_epoch(train); },
        [&] {
          const Checkpoint c = convert(trainer.checkpoint(), mode);
          return evaluate(c.params, c.spec, test, c.mode, opt.eval_seed, opt.eval_batch).accuracy;
        });
  }
  rep.direct.arm = "direct";
  {
    DirectTrainer trainer(spec, opt.train, opt.T);
    run_arm(
        rep.direct, [&] { return trainer.run_epoch(train); },
        [&] { return evaluate_direct(trainer.params(), spec, test, opt.T, opt.eval_batch); });
  }
  rep.speedup = rep.ours.train_seconds > 0 ? rep.direct.train_seconds / rep.ours.train_seconds : 0;

  for (const ArmReport* arm : {&rep.ours, &rep.direct}) {
    const std::string cfg = "arm=" + arm->arm + ";" + tcfg +
                            ";status=" + (arm->reached ? "reached" : "timeout");
    rep.rows.push_back({"bench-speed", cfg, "seconds_to_target", arm->train_seconds,
                        arm->train_seconds});
    rep.rows.push_back({"bench-speed", cfg, "epochs", static_cast<double>(arm->epochs),
                        arm->train_seconds});
    rep.rows.push_back({"bench-speed", cfg, "mean_epoch_seconds", arm->mean_epoch_seconds,
                        arm->train_seconds});
    rep.rows.push_back({"bench-speed", cfg, "final_accuracy", arm->final_accuracy,
                        arm->train_seconds});
  }
  const bool both = rep.ours.reached && rep.direct.reached;
  rep.rows.push_back({"bench-speed", tcfg + ";status=" + (both ? "reached" : "timeout"),
                      "speedup", rep.speedup, rep.ours.train_seconds + rep.direct.train_seconds});
  return rep;
}

}  // namespace noisnn
