#pragma once

// Define-by-run reverse-mode autodiff. Every op call allocates a Node that
// owns its forward value and a closure computing the vector-Jacobian product
// into its parents. Graphs are rebuilt on every forward pass.

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "noisnn/tensor.hpp"

namespace noisnn {

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Node(Tensor v, bool trainable, std::string op_name)
      : value(std::move(v)), requires_grad(trainable), op(std::move(op_name)) {}

  Tensor value;
  /// Accumulated dLoss/dvalue. Empty until the first contribution arrives.
  Tensor grad;
  bool requires_grad;
  std::string op;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_rule;

  bool is_leaf() const noexcept { return parents.empty(); }
  void zero_grad() { grad = Tensor(); }

  /// Adds `g` into grad, allocating on first use.
  void accumulate(Tensor g);
};

/// Trainable leaf.
Var parameter(Tensor value);
/// Leaf that never receives a gradient.
Var constant(Tensor value);

using GradMap = std::unordered_map<const Node*, Tensor>;

/// Reverse pass from a scalar loss. Interior gradients are recomputed from
/// scratch on each call; gradients of trainable leaves accumulate across calls
/// until zero_grad(). Returns a snapshot of every reachable trainable leaf.
GradMap backward(const Var& loss);

/// Nodes reachable from `root`, parents before children.
std::vector<Node*> topological_order(const Var& root);

}  // namespace noisnn
