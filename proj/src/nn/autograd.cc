#include "maskmotion/nn/autograd.h"

#include <unordered_set>

#include "maskmotion/error.h"

namespace maskmotion::nn {

Tensor& Node::EnsureGrad() {
  if (!grad.defined() || grad.numel() != value.numel()) {
    grad = Tensor(value.shape(), 0.0f);
  }
  return grad;
}

Var Constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var Leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

Var MakeResult(Tensor value, std::vector<Var> inputs,
               std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in && in->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return node;
}

void Backward(const Var& root, float seed) {
  if (!root->requires_grad) return;
  if (root->value.numel() != 1) {
    throw Error(ErrorCategory::kInvalidArgument,
                "Backward needs a scalar root, got " + root->value.ShapeString());
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->EnsureGrad()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.defined()) node->backward(*node);
  }
  // Interior gradients are not needed after the sweep.
  for (Node* node : order) {
    if (node->backward) node->grad = Tensor();
  }
}

void SetTrainable(std::vector<Parameter>& params, bool trainable) {
  for (auto& p : params) p.var->requires_grad = trainable;
}

void ZeroGrad(std::vector<Parameter>& params) {
  for (auto& p : params) p.var->grad = Tensor();
}

}  // namespace maskmotion::nn
