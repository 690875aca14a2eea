#pragma once

#include <vector>

#include "noisnn/autograd.hpp"

namespace noisnn {

/// Sharpness and centre of the arctan-family surrogate derivative.
struct SurrogateParams {
  float a = 3.0f;
  float v_th = 1.0f;

  void validate() const;
};

/// a / (2 (1 + (pi/2 * a * (x - v_th))^2)); integrates to 1 over the real line.
float surrogate_grad(float x, const SurrogateParams& p);

namespace ops {

/// [B, in] x [in, out] + [out]. `bias` may be null.
Var fc(const Var& input, const Var& weights, const Var& bias);

/// 3x3 kernels, stride 1, zero padding 1: [B, Cin, H, W] -> [B, Cout, H, W].
Var conv2d(const Var& input, const Var& kernels, const Var& bias);

/// 2x2 mean, stride 2; trailing odd rows/columns are dropped.
Var avgpool2(const Var& input);

/// [B, ...] -> [B, prod(...)].
Var flatten(const Var& input);

/// x + c with c treated as a constant (no gradient to c).
Var add_constant(const Var& x, const Tensor& c);

Var add(const Var& a, const Var& b);
Var scale(const Var& x, float s);

/// Forward: 1 where x > v_th, else 0. Backward: upstream * surrogate_grad(x).
Var heaviside(const Var& x, const SurrogateParams& p);

/// h * (1 - spikes) + v_reset * spikes. Gradient flows to h only; the spike
/// tensor acts as a constant mask on the reset path.
Var lif_reset(const Var& h, const Var& spikes, float v_reset);

/// Elementwise mean of equally shaped inputs.
Var mean_of(const std::vector<Var>& xs);

/// mean((pred - target)^2) as a [1] tensor.
Var mse_loss(const Var& pred, const Tensor& target);

/// sum(x * w) for a constant w; used to project tensor outputs to a scalar.
Var dot_constant(const Var& x, const Tensor& w);

}  // namespace ops
}  // namespace noisnn
