#include "noisnn/autograd.hpp"

#include <unordered_set>

#include "noisnn/error.hpp"

namespace noisnn {

void Node::accumulate(Tensor g) {
  if (g.shape() != value.shape()) {
    throw DimensionError("gradient " + shape_str(g.shape()) + " does not match value " +
                         shape_str(value.shape()) + " of node '" + op + "'");
  }
  if (grad.empty()) {
    grad = std::move(g);
  } else {
    grad += g;
  }
}

Var parameter(Tensor value) { return std::make_shared<Node>(std::move(value), true, "param"); }

Var constant(Tensor value) { return std::make_shared<Node>(std::move(value), false, "const"); }

std::vector<Node*> topological_order(const Var& root) {
  std::vector<Node*> order;
  std::unordered_set<const Node*> visited;
  // Iterative post-order DFS; deep unrolled graphs would overflow recursion.
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

GradMap backward(const Var& loss) {
  if (!loss) throw ContractError("backward: null loss node");
  if (loss->value.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss->value.shape()));
  }
  GradMap grads;
  if (!loss->requires_grad) return grads;

  auto order = topological_order(loss);
  for (Node* n : order) {
    if (!n->is_leaf()) n->zero_grad();
  }
  loss->accumulate(Tensor(loss->value.shape(), 1.0f));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf() || !n->requires_grad || n->grad.empty()) continue;
    n->backward_rule(*n);
  }
  for (Node* n : order) {
    if (n->is_leaf() && n->requires_grad) {
      grads.emplace(n, n->grad.empty() ? Tensor(n->value.shape()) : n->grad);
    }
  }
  return grads;
}

}  // namespace noisnn
