#include "maskmotion/nn/adam.h"

#include <cmath>

namespace maskmotion::nn {

void Adam::Step(std::vector<Parameter>& params) {
  for (auto& p : params) {
    Node* node = p.var.get();
    if (!node->requires_grad || !node->grad.defined()) continue;
    Moments& s = state_[node];
    if (!s.m.defined()) {
      s.m = Tensor(node->value.shape(), 0.0f);
      s.v = Tensor(node->value.shape(), 0.0f);
    }
    ++s.t;
    const float b1 = options_.beta1;
    const float b2 = options_.beta2;
    const float correction1 = 1.0f - std::pow(b1, static_cast<float>(s.t));
    const float correction2 = 1.0f - std::pow(b2, static_cast<float>(s.t));
    const float step = options_.learning_rate / correction1;
    const float sqrt_c2 = std::sqrt(correction2);
    float* w = node->value.data();
    const float* g = node->grad.data();
    float* m = s.m.data();
    float* v = s.v.data();
    for (int64_t i = 0; i < node->value.numel(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i]) / sqrt_c2 + options_.epsilon);
    }
  }
}

}  // namespace maskmotion::nn
