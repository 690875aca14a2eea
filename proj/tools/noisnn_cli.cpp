// noisnn: train single-step noisy SNNs, convert them to multi-step runs and
// drive the accuracy / ablation / speed experiments.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error,
// 4 numeric failure during training.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "noisnn/arch.hpp"
#include "noisnn/checkpoint.hpp"
#include "noisnn/dataset.hpp"
#include "noisnn/error.hpp"
#include "noisnn/experiments.hpp"
#include "noisnn/runtime.hpp"
#include "noisnn/runtime_env.hpp"
#include "noisnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace noisnn;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

constexpr const char* kDefaultArch = "64C3-AP2-128C3-AP2-128C3-AP2-512FC-10FC";

// Wraps data-loading failures so they map to exit code 3.
class DataFailure : public Error {
 public:
  using Error::Error;
};

struct DataFlags {
  std::string dataset = "mnist";
  std::string data_dir;
  std::size_t subset = 0;

  std::string dir() const { return data_dir.empty() ? "data/" + dataset : data_dir; }
};

struct NetFlags {
  std::string arch = kDefaultArch;
  std::string noise = "gaussian";
  float noise_lo = 0.0f;
  float noise_hi = 1.0f;
  bool no_clip = false;
  bool no_bias = false;
  std::string readout = "spikes";
  float lambda = 0.5f;
  float v_th = 1.0f;
  float v_reset = 0.0f;
  float surrogate_a = 3.0f;
};

struct TrainFlags {
  std::size_t epochs = 1;
  std::size_t batch = 64;
  float lr = 1e-4f;
  std::size_t period = 100;
  std::uint64_t seed = 0;
};

struct ModeFlags {
  int stage = 3;
  std::size_t T = 10;
  std::string alpha = "4";
  float beta = 0.5f;
};

float parse_alpha(const std::string& s) {
  if (s == "inf" || s == "+inf" || s == "infinity") return RenormParams::infinite_alpha;
  try {
    return parse_float(s);
  } catch (const Error&) {
    throw ConfigError("alpha must be a number or 'inf', got '" + s + "'");
  }
}

void add_data_flags(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("--dataset", d.dataset, "Dataset name; IDX files default to data/<name>");
  cmd->add_option("--data-dir", d.data_dir,
                  "Directory holding train-/t10k- images-idx3-ubyte and labels-idx1-ubyte[.gz]");
  cmd->add_option("--subset", d.subset, "Use only the first N training images (0 = all)");
}

void add_net_flags(CLI::App* cmd, NetFlags& n) {
  cmd->add_option("--arch", n.arch, "Layer string, e.g. 64C3-AP2-512FC-10FC");
  cmd->add_option("--noise", n.noise, "Training noise: gaussian, uniform or none");
  cmd->add_option("--noise-lo", n.noise_lo, "Lower end of the noise interval");
  cmd->add_option("--noise-hi", n.noise_hi, "Upper end of the noise interval");
  cmd->add_flag("--no-clip", n.no_clip, "Do not clamp gaussian noise to the interval");
  cmd->add_flag("--no-bias", n.no_bias, "Drop conv/fc bias terms");
  cmd->add_option("--readout", n.readout, "Output layer readout: spikes or potentials");
  cmd->add_option("--lambda", n.lambda, "Membrane decay factor");
  cmd->add_option("--v-th", n.v_th, "Firing threshold");
  cmd->add_option("--v-reset", n.v_reset, "Reset potential");
  cmd->add_option("--surrogate-a", n.surrogate_a, "Surrogate gradient sharpness");
}

void add_train_flags(CLI::App* cmd, TrainFlags& t) {
  cmd->add_option("--epochs", t.epochs, "Training epochs (>= 1)");
  cmd->add_option("--batch", t.batch, "Minibatch size");
  cmd->add_option("--lr", t.lr, "Initial learning rate");
  cmd->add_option("--lr-period", t.period, "Epochs between cosine warm restarts");
  cmd->add_option("--seed", t.seed, "Root seed for init, shuffling and noise");
}

void add_mode_flags(CLI::App* cmd, ModeFlags& m) {
  cmd->add_option("--stage", m.stage, "Run stage: 1, 2 or 3");
  cmd->add_option("--T", m.T, "Simulation steps");
  cmd->add_option("--alpha", m.alpha, "Potential rescaling alpha (>= 2, or inf)");
  cmd->add_option("--beta", m.beta, "Potential rescaling mean beta");
}

NetworkSpec build_spec(const NetFlags& n) {
  NetworkSpec spec = parse_arch(n.arch, {1, 28, 28});
  spec.noise.family = parse_noise_family(n.noise);
  if (!(n.noise_hi >= n.noise_lo)) throw ConfigError("--noise-hi must be >= --noise-lo");
  spec.noise.mean = (n.noise_lo + n.noise_hi) / 2.0f;
  spec.noise.half_range = (n.noise_hi - n.noise_lo) / 2.0f;
  spec.noise.clip = !n.no_clip;
  spec.bias_enabled = !n.no_bias;
  spec.readout = parse_readout(n.readout);
  spec.lif = {n.lambda, n.v_th, n.v_reset};
  spec.surrogate = {n.surrogate_a, n.v_th};
  spec.validate();
  return spec;
}

TrainConfig build_train_config(const TrainFlags& t) {
  TrainConfig cfg;
  cfg.epochs = t.epochs;
  cfg.batch_size = t.batch;
  cfg.lr0 = t.lr;
  cfg.scheduler_period = t.period;
  cfg.seed = t.seed;
  cfg.validate();
  return cfg;
}

RunMode build_mode(const ModeFlags& m) {
  RunMode mode;
  mode.stage = m.stage;
  mode.T = m.stage == 1 ? 1 : m.T;
  mode.renorm.alpha = parse_alpha(m.alpha);
  mode.renorm.beta = m.beta;
  mode.validate();
  return mode;
}

Dataset load_split(const DataFlags& d, const std::string& prefix) {
  try {
    Dataset ds = load_idx_dir(d.dir(), prefix);
    if (prefix == "train" && d.subset > 0 && d.subset < ds.size()) {
      ds = ds.slice(0, d.subset, "train");
    }
    return ds;
  } catch (const FormatError& e) {
    throw DataFailure(e.what());
  }
}

Checkpoint load_ckpt(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const FormatError& e) {
    throw DataFailure(e.what());
  }
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

void log(const std::string& msg) { std::cerr << msg << std::endl; }

// ---------------------------------------------------------------------------

struct TrainCmd {
  DataFlags data;
  NetFlags net;
  TrainFlags train;
  std::string out = "model.nsnn";
  std::string metrics;
  std::size_t val_holdout = 0;
  bool val_holdout_set = false;

  int run() {
    const NetworkSpec spec = build_spec(net);
    const TrainConfig cfg = build_train_config(train);
    Dataset all = load_split(data, "train");

    // Hold out the tail of the training set for model selection on full-size
    // sets; small desk-scale subsets train on everything.
    std::size_t holdout = val_holdout_set ? val_holdout : (all.size() > 20000 ? 5000 : 0);
    Dataset train_set = all, val_set;
    if (holdout > 0) std::tie(train_set, val_set) = split_holdout(all, holdout);

    std::optional<std::ofstream> csv;
    if (!metrics.empty()) {
      csv.emplace(metrics, std::ios::trunc);
      if (!*csv) throw DataFailure("cannot write " + metrics);
      *csv << "epoch,loss,acc,seconds,lr\n";
    }

    Stage1Trainer trainer(spec, cfg);
    ParamSet best = trainer.params();
    double best_val = -1.0;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      const EpochMetrics m = trainer.run_epoch(train_set);
      char line[160];
      std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.3f,%.6g", m.epoch, m.loss, m.accuracy,
                    m.seconds, static_cast<double>(m.lr));
      if (csv) *csv << line << '\n' << std::flush;
      std::string msg = std::string("epoch ") + line;
      if (val_set.size() > 0) {
        const double acc =
            evaluate(trainer.params(), spec, val_set, RunMode{}, cfg.seed).accuracy;
        if (acc > best_val) {
          best_val = acc;
          best = trainer.params();
        }
        msg += " val_acc=" + std::to_string(acc);
      }
      log(msg);
    }
    Checkpoint ckpt = trainer.checkpoint("dataset=" + data.dataset + " at=" + timestamp());
    if (val_set.size() > 0) ckpt.params = best;
    save_checkpoint(ckpt, out);
    log("wrote " + out);
    return 0;
  }
};

struct ConvertCmd {
  std::string in;
  std::string out;
  ModeFlags mode;

  int run() {
    const RunMode target = build_mode(mode);
    Checkpoint c = load_ckpt(in);
    c = convert(std::move(c), target);
    save_checkpoint(c, out.empty() ? in : out);
    log("converted to " + target.describe());
    return 0;
  }
};

struct EvalCmd {
  std::string ckpt;
  DataFlags data;
  std::string split = "test";
  ModeFlags mode;
  bool mode_from_ckpt = false;
  std::uint64_t seed = 1;
  bool seed_aligned = false;
  std::size_t batch = 200;
  std::string report;
  std::string outputs;

  int run() {
    std::optional<RunMode> target;
    if (!mode_from_ckpt) target = build_mode(mode);
    Checkpoint c = load_ckpt(ckpt);
    if (target) c = convert(std::move(c), *target);
    const Dataset ds = load_split(data, split == "test" ? "t10k" : "train");
    const std::uint64_t eval_seed = seed_aligned ? c.seed : seed;
    const EvalSummary s = evaluate(c.params, c.spec, ds, c.mode, eval_seed, batch);
    const double latency_ms = s.count ? 1e3 * s.seconds / static_cast<double>(s.count) : 0.0;
    std::printf("accuracy %.4f  (%zu images, %s, %.3f ms/image)\n", s.accuracy, s.count,
                c.mode.describe().c_str(), latency_ms);
    const std::string cfg = "ckpt=" + fs::path(ckpt).filename().string() +
                            ";seed=" + std::to_string(eval_seed) + ";stage=" +
                            std::to_string(c.mode.stage) + ";T=" + std::to_string(c.mode.T) +
                            ";alpha=" + format_float(c.mode.renorm.alpha) +
                            ";beta=" + format_float(c.mode.renorm.beta);
    if (!report.empty()) {
      CsvReport r(report);
      r.append({"eval", cfg, "accuracy", s.accuracy, s.seconds});
      r.append({"eval", cfg, "latency_ms_per_image", latency_ms, s.seconds});
    }
    if (!outputs.empty()) {
      std::ofstream f(outputs, std::ios::trunc);
      const std::size_t k = s.outputs.dim(1);
      f << "index,label,prediction";
      for (std::size_t j = 0; j < k; ++j) f << ",out" << j;
      f << '\n';
      for (std::size_t i = 0; i < s.count; ++i) {
        f << i << ',' << int(ds.labels[i]) << ',' << s.predictions[i];
        for (std::size_t j = 0; j < k; ++j) f << ',' << format_float(s.outputs[i * k + j]);
        f << '\n';
      }
    }
    return 0;
  }
};

std::vector<Checkpoint> load_models(const std::vector<std::string>& paths) {
  std::vector<Checkpoint> models;
  for (const auto& p : paths) models.push_back(load_ckpt(p));
  return models;
}

struct SweepTCmd {
  std::vector<std::string> ckpts;
  DataFlags data;
  std::vector<std::size_t> Ts{1, 5, 10};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<int> stages{2, 3};
  std::string alpha = "4";
  float beta = 0.5f;
  std::string report = "sweep_t.csv";

  int run() {
    SweepTOptions opt;
    opt.Ts = Ts;
    opt.seeds = seeds;
    opt.stages = stages;
    opt.renorm = {parse_alpha(alpha), beta};
    opt.renorm.validate();
    const auto models = load_models(ckpts);
    const Dataset test = load_split(data, "t10k");
    CsvReport r(report);
    r.append(sweep_t(models, test, opt, log));
    return 0;
  }
};

struct SweepAlphaCmd {
  std::vector<std::string> ckpts;
  DataFlags data;
  std::vector<std::string> alphas{"2", "3", "4", "8", "inf"};
  std::vector<std::size_t> Ts{1, 10};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  float beta = 0.5f;
  std::string report = "sweep_alpha.csv";

  int run() {
    SweepAlphaOptions opt;
    opt.alphas.clear();
    for (const auto& a : alphas) {
      RenormParams p{parse_alpha(a), beta};
      p.validate();
      opt.alphas.push_back(p.alpha);
    }
    opt.Ts = Ts;
    opt.seeds = seeds;
    opt.beta = beta;
    const auto models = load_models(ckpts);
    for (const auto& m : models) {
      for (float a : opt.alphas) residual_noise_spec(m.spec.noise, {a, beta});
    }
    const Dataset test = load_split(data, "t10k");
    CsvReport r(report);
    r.append(sweep_alpha(models, test, opt, log));
    return 0;
  }
};

struct CompareNoiseCmd {
  DataFlags data;
  NetFlags net;
  TrainFlags train;
  std::vector<std::string> families{"gaussian", "uniform", "none"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> Ts{1, 10};
  std::string alpha = "4";
  float beta = 0.5f;
  std::string save_dir;
  std::string report = "compare_noise.csv";

  int run() {
    const NetworkSpec spec = build_spec(net);
    CompareNoiseOptions opt;
    opt.train = build_train_config(train);
    opt.families.clear();
    for (const auto& f : families) opt.families.push_back(parse_noise_family(f));
    opt.seeds = seeds;
    opt.Ts = Ts;
    opt.renorm = {parse_alpha(alpha), beta};
    opt.renorm.validate();
    residual_noise_spec(spec.noise, opt.renorm);
    if (!save_dir.empty()) {
      fs::create_directories(save_dir);
      opt.store = [this](const Checkpoint& c) {
        save_checkpoint(c, (fs::path(save_dir) / (to_string(c.spec.noise.family) + "_seed" +
                                                   std::to_string(c.seed) + ".nsnn"))
                               .string());
      };
    }
    const Dataset train_set = load_split(data, "train");
    const Dataset test = load_split(data, "t10k");
    CsvReport r(report);
    r.append(compare_noise(spec, train_set, test, opt, log));
    return 0;
  }
};

struct BenchSpeedCmd {
  DataFlags data;
  NetFlags net;
  TrainFlags train;
  double target = 0.9;
  double budget = 1800.0;
  std::size_t max_epochs = 50;
  std::size_t T = 10;
  std::string alpha = "4";
  float beta = 0.5f;
  std::string report = "bench_speed.csv";

  int run() {
    const NetworkSpec spec = build_spec(net);
    BenchSpeedOptions opt;
    opt.train = build_train_config(train);
    opt.target_accuracy = target;
    opt.budget_seconds = budget;
    opt.max_epochs = max_epochs;
    opt.T = T;
    opt.renorm = {parse_alpha(alpha), beta};
    opt.renorm.validate();
    residual_noise_spec(spec.noise, opt.renorm);
    if (T < 1) throw ConfigError("--T must be >= 1");
    const Dataset train_set = load_split(data, "train");
    const Dataset test = load_split(data, "t10k");
    const auto rep = bench_speed(spec, train_set, test, opt, log);
    CsvReport r(report);
    r.append(rep.rows);
    std::printf("ours %.1fs (%s), direct %.1fs (%s), speedup %.2fx\n", rep.ours.train_seconds,
                rep.ours.reached ? "reached" : "timeout", rep.direct.train_seconds,
                rep.direct.reached ? "reached" : "timeout", rep.speedup);
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  apply_runtime_env();
  CLI::App app{"Noise-trained single-step SNNs converted to multi-step inference"};
  app.require_subcommand(1);

  TrainCmd train;
  auto* c_train = app.add_subcommand("train", "Train a single-step noisy SNN (stage 1)");
  add_data_flags(c_train, train.data);
  add_net_flags(c_train, train.net);
  add_train_flags(c_train, train.train);
  c_train->add_option("--out", train.out, "Checkpoint path");
  c_train->add_option("--metrics", train.metrics, "Per-epoch CSV (epoch,loss,acc,seconds,lr)");
  c_train->add_option("--val-holdout", train.val_holdout,
                      "Hold out the last N training images for model selection")
      ->each([&](const std::string&) { train.val_holdout_set = true; });

  ConvertCmd conv;
  auto* c_conv = app.add_subcommand("convert", "Retarget a checkpoint to another stage / T");
  c_conv->add_option("--ckpt", conv.in, "Input checkpoint")->required();
  c_conv->add_option("--out", conv.out, "Output path (default: overwrite input)");
  add_mode_flags(c_conv, conv.mode);

  EvalCmd ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  add_data_flags(c_eval, ev.data);
  c_eval->add_option("--split", ev.split, "test or train")->check(CLI::IsMember({"test", "train"}));
  add_mode_flags(c_eval, ev.mode);
  c_eval->add_flag("--from-ckpt", ev.mode_from_ckpt, "Use the run mode stored in the checkpoint");
  c_eval->add_option("--seed", ev.seed, "Evaluation noise seed");
  c_eval->add_flag("--seed-aligned", ev.seed_aligned,
                   "Draw evaluation noise from the checkpoint's own seed");
  c_eval->add_option("--batch", ev.batch, "Evaluation batch size");
  c_eval->add_option("--report", ev.report, "Append accuracy rows to this CSV");
  c_eval->add_option("--outputs", ev.outputs, "Write per-sample averaged outputs to this CSV");

  SweepTCmd st;
  auto* c_st = app.add_subcommand("sweep-t", "Accuracy over T for stages 2 and 3");
  c_st->add_option("--ckpt", st.ckpts, "Checkpoint(s)")->required();
  add_data_flags(c_st, st.data);
  c_st->add_option("--Ts", st.Ts, "Comma-separated T values")->delimiter(',');
  c_st->add_option("--seeds", st.seeds, "Comma-separated evaluation seeds")->delimiter(',');
  c_st->add_option("--stages", st.stages, "Stages to run (2,3)")->delimiter(',');
  c_st->add_option("--alpha", st.alpha, "Stage-3 alpha");
  c_st->add_option("--beta", st.beta, "Stage-3 beta");
  c_st->add_option("--report", st.report, "CSV report path");

  SweepAlphaCmd sa;
  auto* c_sa = app.add_subcommand("sweep-alpha", "Stage-3 accuracy over alpha");
  c_sa->add_option("--ckpt", sa.ckpts, "Checkpoint(s)")->required();
  add_data_flags(c_sa, sa.data);
  c_sa->add_option("--alphas", sa.alphas, "Comma-separated alphas (inf allowed)")->delimiter(',');
  c_sa->add_option("--Ts", sa.Ts, "Comma-separated T values")->delimiter(',');
  c_sa->add_option("--seeds", sa.seeds, "Comma-separated evaluation seeds")->delimiter(',');
  c_sa->add_option("--beta", sa.beta, "Stage-3 beta");
  c_sa->add_option("--report", sa.report, "CSV report path");

  CompareNoiseCmd cn;
  auto* c_cn = app.add_subcommand("compare-noise", "Train per noise family and compare");
  add_data_flags(c_cn, cn.data);
  add_net_flags(c_cn, cn.net);
  add_train_flags(c_cn, cn.train);
  c_cn->add_option("--families", cn.families, "gaussian,uniform,none")->delimiter(',');
  c_cn->add_option("--seeds", cn.seeds, "Training seeds")->delimiter(',');
  c_cn->add_option("--Ts", cn.Ts, "T values, first and last are compared")->delimiter(',');
  c_cn->add_option("--alpha", cn.alpha, "Stage-3 alpha");
  c_cn->add_option("--beta", cn.beta, "Stage-3 beta");
  c_cn->add_option("--save-dir", cn.save_dir, "Keep the trained checkpoints here");
  c_cn->add_option("--report", cn.report, "CSV report path");

  BenchSpeedCmd bs;
  auto* c_bs = app.add_subcommand("bench-speed", "Time-to-accuracy: ours vs direct T-step training");
  add_data_flags(c_bs, bs.data);
  add_net_flags(c_bs, bs.net);
  add_train_flags(c_bs, bs.train);
  c_bs->add_option("--target-acc", bs.target, "Test accuracy both arms must reach");
  c_bs->add_option("--budget", bs.budget, "Training wall-clock budget per arm, seconds");
  c_bs->add_option("--max-epochs", bs.max_epochs, "Epoch cap per arm");
  c_bs->add_option("--T", bs.T, "Simulation steps for both arms");
  c_bs->add_option("--alpha", bs.alpha, "Stage-3 alpha for our arm");
  c_bs->add_option("--beta", bs.beta, "Stage-3 beta for our arm");
  c_bs->add_option("--report", bs.report, "CSV report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (c_train->parsed()) return train.run();
    if (c_conv->parsed()) return conv.run();
    if (c_eval->parsed()) return ev.run();
    if (c_st->parsed()) return st.run();
    if (c_sa->parsed()) return sa.run();
    if (c_cn->parsed()) return cn.run();
    if (c_bs->parsed()) return bs.run();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataFailure& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
