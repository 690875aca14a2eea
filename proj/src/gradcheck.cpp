#include "noisnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "noisnn/error.hpp"

namespace noisnn {

GradCheckResult finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x,
                                  float eps, const std::vector<std::size_t>& coords,
                                  float floor) {
  if (!(eps > 0.0f)) throw ContractError("finite_diff_check: eps must be > 0");

  auto xv = parameter(x);
  Var loss = f(xv);
  auto grads = backward(loss);
  const Tensor analytic = grads.count(xv.get()) ? grads.at(xv.get()) : Tensor(x.shape());

  std::vector<std::size_t> idx = coords;
  if (idx.empty()) {
    idx.resize(x.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  }

  GradCheckResult result;
  for (std::size_t i : idx) {
    Tensor plus = x, minus = x;
    plus[i] += eps;
    minus[i] -= eps;
    const double fp = f(constant(plus))->value[0];
    const double fm = f(constant(minus))->value[0];
    const float numeric = static_cast<float>((fp - fm) / (2.0 * eps));
    const float a = analytic[i];
    const float denom = std::max({std::fabs(a), std::fabs(numeric), floor});
    const float err = std::fabs(a - numeric) / denom;
    result.analytic.push_back(a);
    result.numeric.push_back(numeric);
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace noisnn
