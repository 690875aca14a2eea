#include "noisnn/ops.hpp"

#include <cmath>
#include <numbers>

#include "noisnn/error.hpp"
#include "noisnn/kernels.hpp"

namespace noisnn {

void SurrogateParams::validate() const {
  if (!(a > 0.0f)) throw ConfigError("surrogate sharpness a must be > 0");
}

float surrogate_grad(float x, const SurrogateParams& p) {
  const float u = std::numbers::pi_v<float> / 2.0f * p.a * (x - p.v_th);
  return p.a / (2.0f * (1.0f + u * u));
}

namespace ops {
namespace {

bool wants(const Var& v) { return v && v->requires_grad; }

Var make_result(Tensor value, const char* op, std::vector<Var> parents,
                std::function<void(Node&)> rule) {
  bool needs_grad = false;
  for (const auto& p : parents) needs_grad = needs_grad || wants(p);
  auto node = std::make_shared<Node>(std::move(value), needs_grad, op);
  if (needs_grad) {
    node->parents = std::move(parents);
    node->backward_rule = std::move(rule);
  }
  return node;
}

}  // namespace

Var fc(const Var& input, const Var& weights, const Var& bias) {
  static const Tensor kNoBias;
  const Tensor& b = bias ? bias->value : kNoBias;
  Tensor out = kernels::fc_forward(input->value, weights->value, b);
  std::vector<Var> parents{input, weights};
  if (bias) parents.push_back(bias);
  return make_result(std::move(out), "fc", std::move(parents),
                     [input, weights, bias](Node& self) {
                       auto g = kernels::fc_backward(self.grad, input->value, weights->value,
                                                     wants(input), wants(bias));
                       if (wants(input)) input->accumulate(std::move(g.input));
                       if (wants(weights)) weights->accumulate(std::move(g.weights));
                       if (wants(bias)) bias->accumulate(std::move(g.bias));
                     });
}

Var conv2d(const Var& input, const Var& kernels, const Var& bias) {
  static const Tensor kNoBias;
  const Tensor& b = bias ? bias->value : kNoBias;
  const bool need_cols = wants(kernels) || wants(input) || wants(bias);
  auto cols = std::make_shared<Tensor>();
  Tensor out = kernels::conv3x3_forward(input->value, kernels->value, b,
                                        need_cols ? cols.get() : nullptr);
  std::vector<Var> parents{input, kernels};
  if (bias) parents.push_back(bias);
  return make_result(std::move(out), "conv2d", std::move(parents),
                     [input, kernels, bias, cols](Node& self) {
                       auto g = kernels::conv3x3_backward(self.grad, *cols, kernels->value,
                                                          input->value.shape(), wants(input),
                                                          wants(bias));
                       if (wants(input)) input->accumulate(std::move(g.input));
                       if (wants(kernels)) kernels->accumulate(std::move(g.kernels));
                       if (wants(bias)) bias->accumulate(std::move(g.bias));
                     });
}

Var avgpool2(const Var& input) {
  return make_result(kernels::avgpool2_forward(input->value), "avgpool2", {input},
                     [input](Node& self) {
                       input->accumulate(
                           kernels::avgpool2_backward(self.grad, input->value.shape()));
                     });
}

Var flatten(const Var& input) {
  const auto& s = input->value.shape();
  if (s.size() < 2) throw DimensionError("flatten: need rank >= 2, got " + shape_str(s));
  const std::size_t batch = s[0];
  Tensor out = input->value.reshaped({batch, input->value.numel() / batch});
  return make_result(std::move(out), "flatten", {input}, [input](Node& self) {
    input->accumulate(self.grad.reshaped(input->value.shape()));
  });
}

Var add_constant(const Var& x, const Tensor& c) {
  require_same_shape(x->value, c, "add_constant");
  Tensor out = x->value;
  out += c;
  return make_result(std::move(out), "add_constant", {x},
                     [x](Node& self) { x->accumulate(self.grad); });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor out = a->value;
  out += b->value;
  return make_result(std::move(out), "add", {a, b}, [a, b](Node& self) {
    if (wants(a)) a->accumulate(self.grad);
    if (wants(b)) b->accumulate(self.grad);
  });
}

Var scale(const Var& x, float s) {
  Tensor out = x->value;
  for (float& v : out.values()) v *= s;
  return make_result(std::move(out), "scale", {x}, [x, s](Node& self) {
    Tensor g = self.grad;
    for (float& v : g.values()) v *= s;
    x->accumulate(std::move(g));
  });
}

Var heaviside(const Var& x, const SurrogateParams& p) {
  Tensor out(x->value.shape());
  const auto in = x->value.values();
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > p.v_th ? 1.0f : 0.0f;
  return make_result(std::move(out), "heaviside", {x}, [x, p](Node& self) {
    Tensor g = self.grad;
    const auto in = x->value.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= surrogate_grad(in[i], p);
    x->accumulate(std::move(g));
  });
}

Var lif_reset(const Var& h, const Var& spikes, float v_reset) {
  require_same_shape(h->value, spikes->value, "lif_reset");
  Tensor out(h->value.shape());
  const auto hv = h->value.values();
  const auto sv = spikes->value.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = hv[i] * (1.0f - sv[i]) + v_reset * sv[i];
  return make_result(std::move(out), "lif_reset", {h}, [h, spikes](Node& self) {
    Tensor g = self.grad;
    const auto sv = spikes->value.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= 1.0f - sv[i];
    h->accumulate(std::move(g));
  });
}

Var mean_of(const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("mean_of: no inputs");
  Tensor out(xs.front()->value.shape());
  for (const auto& x : xs) {
    require_same_shape(out, x->value, "mean_of");
    out += x->value;
  }
  const float inv = 1.0f / static_cast<float>(xs.size());
  for (float& v : out.values()) v *= inv;
  return make_result(std::move(out), "mean_of", xs, [xs, inv](Node& self) {
    Tensor g = self.grad;
    for (float& v : g.values()) v *= inv;
    for (const auto& x : xs) {
      if (wants(x)) x->accumulate(g);
    }
  });
}

Var mse_loss(const Var& pred, const Tensor& target) {
  require_same_shape(pred->value, target, "mse_loss");
  const auto p = pred->value.values();
  const auto t = target.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - t[i];
    acc += d * d;
  }
  const float count = static_cast<float>(p.size());
  Tensor out = Tensor::scalar(static_cast<float>(acc / p.size()));
  return make_result(std::move(out), "mse_loss", {pred}, [pred, target, count](Node& self) {
    const float upstream = self.grad[0];
    Tensor g(pred->value.shape());
    const auto p = pred->value.values();
    const auto t = target.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = upstream * 2.0f * (p[i] - t[i]) / count;
    pred->accumulate(std::move(g));
  });
}

Var dot_constant(const Var& x, const Tensor& w) {
  require_same_shape(x->value, w, "dot_constant");
  double acc = 0.0;
  const auto xv = x->value.values();
  for (std::size_t i = 0; i < xv.size(); ++i) acc += static_cast<double>(xv[i]) * w[i];
  return make_result(Tensor::scalar(static_cast<float>(acc)), "dot_constant", {x},
                     [x, w](Node& self) {
                       Tensor g = w;
                       for (float& v : g.values()) v *= self.grad[0];
                       x->accumulate(std::move(g));
                     });
}

}  // namespace ops
}  // namespace noisnn
