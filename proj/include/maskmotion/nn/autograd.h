#ifndef MASKMOTION_NN_AUTOGRAD_H_
#define MASKMOTION_NN_AUTOGRAD_H_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "maskmotion/nn/tensor.h"

namespace maskmotion::nn {

// One value in a dynamically recorded computation graph. Gradients are
// accumulated into `grad` by Backward(); leaves keep them until ZeroGrad.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs that require grad.
  std::function<void(Node&)> backward;

  Tensor& EnsureGrad();
};

using Var = std::shared_ptr<Node>;

Var Constant(Tensor value);
Var Leaf(Tensor value, bool requires_grad);

// Builds a result node. The backward closure is dropped when no input
// requires a gradient, so inference graphs carry no tape.
Var MakeResult(Tensor value, std::vector<Var> inputs,
               std::function<void(Node&)> backward);

// Reverse-mode sweep from a scalar root seeded with `seed`.
void Backward(const Var& root, float seed = 1.0f);

// A learnable tensor with a stable name; `var->requires_grad` doubles as the
// trainable flag.
struct Parameter {
  std::string name;
  Var var;
};

void SetTrainable(std::vector<Parameter>& params, bool trainable);
void ZeroGrad(std::vector<Parameter>& params);

}  // namespace maskmotion::nn

#endif  // MASKMOTION_NN_AUTOGRAD_H_
