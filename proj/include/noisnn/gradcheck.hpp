#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "noisnn/autograd.hpp"

namespace noisnn {

struct GradCheckResult {
  float max_rel_error = 0.0f;
  std::size_t worst_index = 0;
  std::vector<float> analytic;
  std::vector<float> numeric;
};

/// Compares the autodiff gradient of scalar `f` at `x` against central
/// differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
///
/// Per-coordinate error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
/// the floor keeps near-zero entries from dominating under float32 rounding.
/// When `coords` is empty every coordinate is checked.
GradCheckResult finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x,
                                  float eps = 1e-3f, const std::vector<std::size_t>& coords = {},
                                  float floor = 1e-2f);

}  // namespace noisnn
