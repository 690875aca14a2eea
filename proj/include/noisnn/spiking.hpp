#pragma once

#include <limits>
#include <string>
#include <utility>

#include "noisnn/autograd.hpp"
#include "noisnn/rng.hpp"
#include "noisnn/tensor.hpp"

namespace noisnn {

/// Leaky integrate-and-fire constants.
struct LIFParams {
  float lambda = 0.5f;  // decay applied to the carried potential
  float v_th = 1.0f;
  float v_reset = 0.0f;

  void validate() const;
};

/// Membrane potential after the last step, one entry per neuron.
struct LIFState {
  Tensor v;

  static LIFState zeros(const Shape& shape) { return {Tensor(shape)}; }
};

enum class NoiseFamily { none, gaussian, uniform };

std::string to_string(NoiseFamily f);
NoiseFamily parse_noise_family(const std::string& s);

/// Additive pre-activation noise. Gaussian draws use standard deviation
/// half_range / 2 and, when `clip` is set, are clamped to
/// [mean - half_range, mean + half_range].
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::gaussian;
  float mean = 0.5f;
  float half_range = 0.5f;
  bool clip = true;

  float lo() const { return mean - half_range; }
  float hi() const { return mean + half_range; }
  void validate() const;

  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

/// Rescaling of the carried potential into (beta - 1/alpha, beta + 1/alpha).
/// alpha = +inf removes the potential term entirely.
struct RenormParams {
  float alpha = 4.0f;
  float beta = 0.5f;
  float sigma_eps = 1e-8f;

  static constexpr float infinite_alpha = std::numeric_limits<float>::infinity();
  bool alpha_is_infinite() const { return alpha == infinite_alpha; }
  void validate() const;

  friend bool operator==(const RenormParams&, const RenormParams&) = default;
};

/// Fresh draw on every call; the stream advances.
Tensor sample_noise(const NoiseSpec& spec, const Shape& shape, Rng& rng);

/// weighted_input + noise, with the noise entering the graph as a constant.
Var single_step_preactivation(const Var& weighted_input, const NoiseSpec& spec, Rng& rng);

struct LIFStepResult {
  Tensor spikes;
  LIFState state;
};

/// H = injection + weighted_input; S = [H > v_th]; V = H (1 - S) + v_reset S.
LIFStepResult lif_step(const LIFState& state, const LIFParams& params,
                       const Tensor& weighted_input, const Tensor& injection);

/// Standardizes `a_term` with its own mean and population standard deviation
/// (taken over every element) and maps the result to
/// standardized / (alpha * max|standardized|) + beta.
/// Degenerate spread yields the constant beta; infinite alpha yields zeros.
Tensor renormalize_potential(const Tensor& a_term, const RenormParams& p);

/// Noise left over once the renormalized potential takes its share of the
/// training noise: mean shifts by -beta, half range shrinks by 1/alpha.
/// Infinite alpha returns `base` unchanged.
NoiseSpec residual_noise_spec(const NoiseSpec& base, const RenormParams& p);

/// Injection for one accumulation step: renormalize(lambda * V) plus a draw of
/// `residual`, clamped to the training noise interval of `base`.
Tensor accumulation_injection(const LIFState& state, const LIFParams& lif,
                              const RenormParams& renorm, const NoiseSpec& base,
                              const NoiseSpec& residual, Rng& rng);

}  // namespace noisnn
