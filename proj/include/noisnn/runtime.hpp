#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "noisnn/arch.hpp"
#include "noisnn/autograd.hpp"
#include "noisnn/checkpoint.hpp"
#include "noisnn/dataset.hpp"
#include "noisnn/rng.hpp"
#include "noisnn/run_mode.hpp"

namespace noisnn {

/// Keyed noise source for one batch. The draw for spiking layer `l` at time
/// step `t` depends only on (seed, tag, shard, l, t), so a stage-2 run at
/// T = 1 replays exactly the noise of a stage-1 run on the same stream.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, StreamTag tag, std::uint64_t shard)
      : seed_(seed), tag_(tag), shard_(shard) {}

  Rng at(std::size_t layer, std::size_t step) const {
    return Rng::substream(seed_, tag_, {shard_, layer, step});
  }

 private:
  std::uint64_t seed_;
  StreamTag tag_;
  std::uint64_t shard_;
};

struct EvalResult {
  Tensor averaged_output;                // [B, classes]
  std::vector<std::size_t> predictions;  // argmax, lowest index wins ties
  Tensor per_step_outputs;               // [T, B, classes] when retained, else empty
};

/// Intermediate values of a recorded single-step pass, in layer order.
struct LayerTrace {
  std::string name;
  Var value;
};

struct Stage1Result {
  EvalResult eval;
  Var output;                     // readout node of the graph
  std::vector<Var> param_vars;    // trainable leaves, aligned with ParamSet (record_graph only)
  std::vector<LayerTrace> trace;  // record_graph only
};

/// Observer hook for stage-3 injections: (spiking layer, step, injection).
using InjectionObserver = std::function<void(std::size_t, std::size_t, const Tensor&)>;

/// Single noisy pass at step 0 of `noise`. With `record_graph` the parameters
/// enter the graph as trainable leaves so the caller can run backward.
Stage1Result forward_stage1(const ParamSet& params, const NetworkSpec& spec, const Tensor& batch,
                            const NoiseStream& noise, bool record_graph = false);

/// T stateless replicas with independent noise (step t uses noise.at(., t)).
EvalResult forward_stage2(const ParamSet& params, const NetworkSpec& spec, const Tensor& batch,
                          std::size_t T, const NoiseStream& noise, bool keep_steps = false);

/// T steps with membrane state; injection per layer and step is the
/// renormalized carried potential plus residual noise. V(-1) = 0.
EvalResult forward_stage3(const ParamSet& params, const NetworkSpec& spec, const Tensor& batch,
                          std::size_t T, const RenormParams& renorm, const NoiseStream& noise,
                          bool keep_steps = false, const InjectionObserver& observer = {});

/// Dispatches on `mode.stage`.
EvalResult run_forward(const ParamSet& params, const NetworkSpec& spec, const Tensor& batch,
                       const RunMode& mode, const NoiseStream& noise, bool keep_steps = false);

std::vector<std::size_t> argmax_rows(const Tensor& outputs);

struct EvalSummary {
  double accuracy = 0.0;
  std::size_t count = 0;
  double seconds = 0.0;
  std::vector<std::size_t> predictions;
  Tensor outputs;  // [n, classes] averaged outputs
};

/// Evaluates a whole dataset in fixed-size batches; batch k draws noise from
/// NoiseStream(seed, eval_noise, k).
EvalSummary evaluate(const ParamSet& params, const NetworkSpec& spec, const Dataset& data,
                     const RunMode& mode, std::uint64_t seed, std::size_t batch_size = 200,
                     const InjectionObserver& observer = {});

/// Retargets a checkpoint to another run mode. Only metadata changes.
Checkpoint convert(Checkpoint ckpt, const RunMode& target);

}  // namespace noisnn
