#include "noisnn/spiking.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

#include <Eigen/Core>

#include "noisnn/error.hpp"
#include "noisnn/ops.hpp"

namespace noisnn {

void LIFParams::validate() const {
  if (!(lambda >= 0.0f && lambda <= 1.0f)) throw ConfigError("lambda must lie in [0, 1]");
  if (!(v_reset < v_th)) throw ConfigError("v_reset must be below v_th");
}

std::string to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::none: return "none";
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::uniform: return "uniform";
  }
  return "?";
}

NoiseFamily parse_noise_family(const std::string& s) {
  if (s == "none") return NoiseFamily::none;
  if (s == "gaussian") return NoiseFamily::gaussian;
  if (s == "uniform") return NoiseFamily::uniform;
  throw ConfigError("unknown noise family '" + s + "' (expected gaussian, uniform or none)");
}

void NoiseSpec::validate() const {
  if (!(half_range >= 0.0f) || !std::isfinite(mean)) {
    throw ConfigError("noise half_range must be >= 0 and mean finite");
  }
}

void RenormParams::validate() const {
  if (!(alpha >= 2.0f)) {
    throw ConfigError("alpha must be >= 2 (or inf), got " + std::to_string(alpha));
  }
  if (!std::isfinite(beta)) throw ConfigError("beta must be finite");
  if (!(sigma_eps > 0.0f)) throw ConfigError("sigma_eps must be > 0");
}

namespace {

// Box-Muller over chunks so the transcendental calls vectorize. One 64-bit
// draw feeds both uniforms of a pair; std::normal_distribution costs ~4x more.
void fill_standard_normal(std::span<float> out, Rng::engine_type& eng) {
  constexpr std::size_t kPairs = 512;
  constexpr float kScale = 1.0f / 16777216.0f;
  Eigen::ArrayXf u1(kPairs), u2(kPairs), rad(kPairs);
  for (std::size_t start = 0; start < out.size(); start += 2 * kPairs) {
    const std::size_t remaining = out.size() - start;
    const Eigen::Index pairs = static_cast<Eigen::Index>(std::min(kPairs, (remaining + 1) / 2));
    for (Eigen::Index i = 0; i < pairs; ++i) {
      const std::uint64_t r = eng();
      u1[i] = static_cast<float>((r >> 40) + 1) * kScale;  // (0, 1]
      u2[i] = static_cast<float>((r >> 16) & 0xFFFFFF) * kScale;
    }
    rad.head(pairs) = (-2.0f * u1.head(pairs).log()).sqrt();
    u2.head(pairs) *= 2.0f * std::numbers::pi_v<float>;
    u1.head(pairs) = rad.head(pairs) * u2.head(pairs).cos();
    rad.head(pairs) *= u2.head(pairs).sin();
    const std::size_t n = static_cast<std::size_t>(pairs);
    std::copy_n(u1.data(), n, out.data() + start);
    std::copy_n(rad.data(), std::min(n, remaining - n), out.data() + start + n);
  }
}

}  // namespace

Tensor sample_noise(const NoiseSpec& spec, const Shape& shape, Rng& rng) {
  Tensor out(shape);
  if (spec.family == NoiseFamily::none) return out;
  if (spec.half_range == 0.0f) {
    out.fill(spec.mean);
    return out;
  }
  auto& eng = rng.engine();
  auto v = out.values();
  if (spec.family == NoiseFamily::gaussian) {
    fill_standard_normal(v, eng);
    const float mean = spec.mean, sd = spec.half_range / 2.0f;
    if (spec.clip) {
      const float lo = spec.lo(), hi = spec.hi();
      for (float& x : v) x = std::clamp(mean + sd * x, lo, hi);
    } else {
      for (float& x : v) x = mean + sd * x;
    }
  } else {
    std::uniform_real_distribution<float> dist(spec.lo(), spec.hi());
    for (float& x : v) x = dist(eng);
  }
  return out;
}

Var single_step_preactivation(const Var& weighted_input, const NoiseSpec& spec, Rng& rng) {
  if (spec.family == NoiseFamily::none) return weighted_input;
  return ops::add_constant(weighted_input, sample_noise(spec, weighted_input->value.shape(), rng));
}

LIFStepResult lif_step(const LIFState& state, const LIFParams& params,
                       const Tensor& weighted_input, const Tensor& injection) {
  require_same_shape(weighted_input, injection, "lif_step");
  require_same_shape(weighted_input, state.v, "lif_step");
  LIFStepResult r{Tensor(weighted_input.shape()), LIFState{Tensor(weighted_input.shape())}};
  const auto x = weighted_input.values();
  const auto inj = injection.values();
  auto s = r.spikes.values();
  auto v = r.state.v.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float h = inj[i] + x[i];
    const bool fire = h > params.v_th;
    s[i] = fire ? 1.0f : 0.0f;
    v[i] = fire ? params.v_reset : h;
  }
  return r;
}

namespace {

// Fixed lane order, so the result does not depend on buffer alignment the way
// Eigen's vectorized reductions do.
template <class F>
double ordered_sum(std::span<const float> v, F f) {
  double lanes[4] = {};
  std::size_t i = 0;
  for (; i + 4 <= v.size(); i += 4) {
    for (std::size_t l = 0; l < 4; ++l) lanes[l] += f(static_cast<double>(v[i + l]));
  }
  double total = (lanes[0] + lanes[2]) + (lanes[1] + lanes[3]);
  for (; i < v.size(); ++i) total += f(static_cast<double>(v[i]));
  return total;
}

}  // namespace

Tensor renormalize_potential(const Tensor& a_term, const RenormParams& p) {
  Tensor out(a_term.shape());
  if (p.alpha_is_infinite()) return out;

  const Eigen::Map<const Eigen::ArrayXf> a(a_term.data(), static_cast<Eigen::Index>(a_term.numel()));
  const double n = static_cast<double>(a_term.numel());
  const double mean = ordered_sum(a_term.values(), [](double x) { return x; }) / n;
  const double sigma =
      std::sqrt(ordered_sum(a_term.values(), [mean](double x) { return (x - mean) * (x - mean); }) / n);
  if (sigma < p.sigma_eps) {
    out.fill(p.beta);
    return out;
  }
  const double max_abs = (a.cast<double>() - mean).abs().maxCoeff() / sigma;
  if (max_abs < p.sigma_eps) {
    out.fill(p.beta);
    return out;
  }
  const double scale = 1.0 / (sigma * static_cast<double>(p.alpha) * max_abs);
  Eigen::Map<Eigen::ArrayXf>(out.data(), a.size()) =
      ((a.cast<double>() - mean) * scale + static_cast<double>(p.beta)).cast<float>();
  return out;
}

NoiseSpec residual_noise_spec(const NoiseSpec& base, const RenormParams& p) {
  p.validate();
  if (p.alpha_is_infinite()) return base;
  NoiseSpec r = base;
  r.mean = base.mean - p.beta;
  r.half_range = base.half_range - 1.0f / p.alpha;
  if (r.half_range < 0.0f) {
    throw ConfigError("noise decomposition infeasible: half_range " +
                      std::to_string(base.half_range) + " < 1/alpha = " +
                      std::to_string(1.0f / p.alpha));
  }
  return r;
}

Tensor accumulation_injection(const LIFState& state, const LIFParams& lif,
                              const RenormParams& renorm, const NoiseSpec& base,
                              const NoiseSpec& residual, Rng& rng) {
  Tensor a = state.v;
  for (float& x : a.values()) x *= lif.lambda;
  Tensor inj = renormalize_potential(a, renorm);
  inj += sample_noise(residual, inj.shape(), rng);
  const bool bounded = base.family == NoiseFamily::uniform ||
                       (base.family == NoiseFamily::gaussian && base.clip);
  if (bounded) {
    // Summing the two bounded parts can overshoot the interval by one ulp.
    const float lo = base.lo(), hi = base.hi();
    for (float& x : inj.values()) x = std::clamp(x, lo, hi);
  }
  return inj;
}

}  // namespace noisnn
