#ifndef MASKMOTION_NN_ADAM_H_
#define MASKMOTION_NN_ADAM_H_

#include <unordered_map>
#include <vector>

#include "maskmotion/nn/autograd.h"

namespace maskmotion::nn {

struct AdamOptions {
  float learning_rate = 5e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

// Adam with per-parameter step counts. Step() touches only parameters whose
// var requires a gradient and holds one, so frozen tensors stay bitwise
// unchanged.
class Adam {
 public:
  explicit Adam(AdamOptions options) : options_(options) {}

  void Step(std::vector<Parameter>& params);
  const AdamOptions& options() const { return options_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
    int64_t t = 0;
  };

  AdamOptions options_;
  std::unordered_map<const Node*, Moments> state_;
};

}  // namespace maskmotion::nn

#endif  // MASKMOTION_NN_ADAM_H_
