#include "noisnn/runtime.hpp"

#include <chrono>
#include <cmath>

#include "noisnn/error.hpp"
#include "noisnn/kernels.hpp"
#include "noisnn/ops.hpp"

namespace noisnn {

void RunMode::validate() const {
  if (stage < 1 || stage > 3) throw ConfigError("stage must be 1, 2 or 3");
  if (T < 1) throw ConfigError("T must be >= 1");
  if (stage == 1 && T != 1) throw ConfigError("stage 1 runs exactly one step (T = 1)");
  renorm.validate();
}

std::string RunMode::describe() const {
  std::string s = "stage=" + std::to_string(stage) + " T=" + std::to_string(T);
  if (stage == 3) {
    s += " alpha=" + format_float(renorm.alpha) + " beta=" + format_float(renorm.beta);
  }
  return s;
}

namespace {

std::string layer_label(const LayerSpec& l, std::size_t index) {
  const char* kind = "layer";
  switch (l.kind) {
    case LayerKind::conv3: kind = "conv3"; break;
    case LayerKind::avgpool2: kind = "avgpool2"; break;
    case LayerKind::flatten: kind = "flatten"; break;
    case LayerKind::fc: kind = "fc"; break;
    case LayerKind::spike: kind = "spike"; break;
  }
  return std::string(kind) + "#" + std::to_string(index);
}

void check_batch(const NetworkSpec& spec, const Tensor& batch) {
  Shape want{batch.rank() ? batch.dim(0) : 0};
  want.insert(want.end(), spec.input_shape.begin(), spec.input_shape.end());
  if (batch.shape() != want) {
    // A flat-input net also accepts [B, 1, H, W] images and flattens them.
    if (!(spec.input_shape.size() == 1 && batch.rank() >= 2 &&
          batch.numel() == batch.dim(0) * spec.input_shape[0])) {
      throw DimensionError("batch shape " + shape_str(batch.shape()) +
                           " does not match network input " + shape_str(spec.input_shape));
    }
  }
}

Tensor as_network_input(const NetworkSpec& spec, const Tensor& batch) {
  check_batch(spec, batch);
  if (spec.input_shape.size() == 1 && batch.rank() != 2) {
    return batch.reshaped({batch.dim(0), spec.input_shape[0]});
  }
  return batch;
}

// One stateless noisy pass through the graph ops at time step `step`.
Var stateless_pass(const std::vector<Var>& p, const NetworkSpec& spec, Var x,
                   const NoiseStream& noise, std::size_t step, std::vector<LayerTrace>* trace) {
  std::size_t pi = 0, spiking = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::conv3:
      case LayerKind::fc: {
        const Var& w = p[pi++];
        Var b = spec.bias_enabled ? p[pi++] : nullptr;
        x = l.kind == LayerKind::conv3 ? ops::conv2d(x, w, b) : ops::fc(x, w, b);
        break;
      }
      case LayerKind::avgpool2: x = ops::avgpool2(x); break;
      case LayerKind::flatten: x = ops::flatten(x); break;
      case LayerKind::spike: {
        Rng rng = noise.at(spiking++, step);
        x = ops::heaviside(single_step_preactivation(x, spec.noise, rng), spec.surrogate);
        break;
      }
    }
    if (trace) trace->push_back({layer_label(l, i), x});
  }
  Rng rng = noise.at(spiking, step);
  x = single_step_preactivation(x, spec.noise, rng);
  if (spec.readout == Readout::spikes) x = ops::heaviside(x, spec.surrogate);
  if (trace) trace->push_back({"readout", x});
  return x;
}

std::vector<Var> wrap_params(const ParamSet& params, bool trainable) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& t : params) vars.push_back(trainable ? parameter(t) : constant(t));
  return vars;
}

void check_params(const ParamSet& params, const NetworkSpec& spec) {
  const auto shapes = param_shapes(spec);
  if (shapes.size() != params.size()) {
    throw DimensionError("network needs " + std::to_string(shapes.size()) +
                         " parameter arrays, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params[i].shape() != shapes[i]) {
      throw DimensionError("parameter " + std::to_string(i) + " has shape " +
                           shape_str(params[i].shape()) + ", expected " + shape_str(shapes[i]));
    }
  }
}

// Accumulates per-step outputs into an average, optionally retaining them.
class StepAverager {
 public:
  StepAverager(std::size_t T, bool keep) : T_(T), keep_(keep) {}

  void add(const Tensor& out) {
    if (sum_.empty()) {
      sum_ = out;
      if (keep_) {
        Shape s{T_};
        s.insert(s.end(), out.shape().begin(), out.shape().end());
        steps_ = Tensor(s);
      }
    } else {
      sum_ += out;
    }
    if (keep_) std::copy_n(out.data(), out.numel(), steps_.data() + n_ * out.numel());
    ++n_;
  }

  EvalResult finish() {
    EvalResult r;
    r.averaged_output = std::move(sum_);
    const float inv = 1.0f / static_cast<float>(T_);
    for (float& v : r.averaged_output.values()) v *= inv;
    r.predictions = argmax_rows(r.averaged_output);
    r.per_step_outputs = std::move(steps_);
    return r;
  }

 private:
  std::size_t T_;
  bool keep_;
  std::size_t n_ = 0;
  Tensor sum_;
  Tensor steps_;
};

}  // namespace

std::vector<std::size_t> argmax_rows(const Tensor& outputs) {
  if (outputs.rank() != 2) throw DimensionError("argmax_rows expects [B, classes]");
  const std::size_t rows = outputs.dim(0), cols = outputs.dim(1);
  std::vector<std::size_t> idx(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = outputs.data() + r * cols;
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (row[c] > row[best]) best = c;
    }
    idx[r] = best;
  }
  return idx;
}

Stage1Result forward_stage1(const ParamSet& params, const NetworkSpec& spec, const Tensor& batch,
                            const NoiseStream& noise, bool record_graph) {
  check_params(params, spec);
  Stage1Result r;
  auto vars = wrap_params(params, record_graph);
  r.output = stateless_pass(vars, spec, constant(as_network_input(spec, batch)), noise, 0,
                            record_graph ? &r.trace : nullptr);
  r.eval.averaged_output = r.output->value;
  r.eval.predictions = argmax_rows(r.eval.averaged_output);
  if (record_graph) r.param_vars = std::move(vars);
  return r;
}

EvalResult forward_stage2(const ParamSet& params, const NetworkSpec& spec, const Tensor& batch,
                          std::size_t T, const NoiseStream& noise, bool keep_steps) {
  if (T < 1) throw ConfigError("T must be >= 1");
  check_params(params, spec);
  const auto vars = wrap_params(params, false);
  const Var input = constant(as_network_input(spec, batch));
  StepAverager avg(T, keep_steps);
  for (std::size_t t = 0; t < T; ++t) {
    avg.add(stateless_pass(vars, spec, input, noise, t, nullptr)->value);
  }
  return avg.finish();
}

EvalResult forward_stage3(const ParamSet& params, const NetworkSpec& spec, const Tensor& batch,
                          std::size_t T, const RenormParams& renorm, const NoiseStream& noise,
                          bool keep_steps, const InjectionObserver& observer) {
  if (T < 1) throw ConfigError("T must be >= 1");
  check_params(params, spec);
  const NoiseSpec residual = residual_noise_spec(spec.noise, renorm);
  const Tensor input = as_network_input(spec, batch);
  static const Tensor kNoBias;

  std::vector<LIFState> states(spec.num_spiking_layers());
  Tensor first_layer_cache;  // the input is identical at every step
  StepAverager avg(T, keep_steps);

  auto spike_layer = [&](std::size_t idx, std::size_t t, const Tensor& weighted) {
    LIFState& st = states[idx];
    if (st.v.empty()) st = LIFState::zeros(weighted.shape());
    Rng rng = noise.at(idx, t);
    Tensor inj = accumulation_injection(st, spec.lif, renorm, spec.noise, residual, rng);
    if (observer) observer(idx, t, inj);
    auto step = lif_step(st, spec.lif, weighted, inj);
    st = std::move(step.state);
    return std::make_pair(std::move(step.spikes), std::move(inj));
  };

  for (std::size_t t = 0; t < T; ++t) {
    Tensor x = input;
    std::size_t pi = 0, spiking = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto& l = spec.layers[i];
      switch (l.kind) {
        case LayerKind::conv3:
        case LayerKind::fc: {
          const Tensor& w = params[pi++];
          const Tensor& b = spec.bias_enabled ? params[pi++] : kNoBias;
          if (i == 0 && !first_layer_cache.empty()) {
            x = first_layer_cache;
            break;
          }
          x = l.kind == LayerKind::conv3 ? kernels::conv3x3_forward(x, w, b)
                                         : kernels::fc_forward(x, w, b);
          if (i == 0) first_layer_cache = x;
          break;
        }
        case LayerKind::avgpool2: x = kernels::avgpool2_forward(x); break;
        case LayerKind::flatten: x = x.reshaped({x.dim(0), x.numel() / x.dim(0)}); break;
        case LayerKind::spike: x = spike_layer(spiking++, t, x).first; break;
      }
    }
    auto [spikes, inj] = spike_layer(spiking, t, x);
    if (spec.readout == Readout::spikes) {
      avg.add(spikes);
    } else {
      inj += x;  // pre-activation H
      avg.add(inj);
    }
  }
  return avg.finish();
}

EvalResult run_forward(const ParamSet& params, const NetworkSpec& spec, const Tensor& batch,
                       const RunMode& mode, const NoiseStream& noise, bool keep_steps) {
  mode.validate();
  switch (mode.stage) {
    case 1: {
      auto r = forward_stage1(params, spec, batch, noise, false);
      if (keep_steps) {
        Shape s{1};
        s.insert(s.end(), r.eval.averaged_output.shape().begin(),
                 r.eval.averaged_output.shape().end());
        r.eval.per_step_outputs = r.eval.averaged_output.reshaped(s);
      }
      return std::move(r.eval);
    }
    case 2: return forward_stage2(params, spec, batch, mode.T, noise, keep_steps);
    default: return forward_stage3(params, spec, batch, mode.T, mode.renorm, noise, keep_steps);
  }
}

EvalSummary evaluate(const ParamSet& params, const NetworkSpec& spec, const Dataset& data,
                     const RunMode& mode, std::uint64_t seed, std::size_t batch_size,
                     const InjectionObserver& observer) {
  mode.validate();
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t classes = spec.num_classes();
  EvalSummary s;
  s.count = data.size();
  s.outputs = Tensor({data.size(), classes});
  std::size_t correct = 0;
  BatchIterator it(data, batch_size, 0, 0, classes, /*shuffle=*/false);
  Batch b;
  for (std::uint64_t shard = 0; it.next(b); ++shard) {
    const NoiseStream noise(seed, StreamTag::eval_noise, shard);
    EvalResult r = mode.stage == 3
                       ? forward_stage3(params, spec, b.images, mode.T, mode.renorm, noise,
                                        false, observer)
                       : run_forward(params, spec, b.images, mode, noise);
    for (std::size_t i = 0; i < b.indices.size(); ++i) {
      s.predictions.push_back(r.predictions[i]);
      correct += r.predictions[i] == b.labels[i] ? 1 : 0;
      std::copy_n(r.averaged_output.data() + i * classes, classes,
                  s.outputs.data() + b.indices[i] * classes);
    }
  }
  s.accuracy = s.count ? static_cast<double>(correct) / static_cast<double>(s.count) : 0.0;
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s;
}

Checkpoint convert(Checkpoint ckpt, const RunMode& target) {
  target.validate();
  if (target.stage == 3) residual_noise_spec(ckpt.spec.noise, target.renorm);
  ckpt.mode = target;
  return ckpt;
}

}  // namespace noisnn
