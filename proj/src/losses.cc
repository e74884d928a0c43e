#include "maskmotion/losses.h"

#include <string>
#include <vector>

#include "maskmotion/error.h"

namespace maskmotion {
namespace {

void CheckShapes(int64_t pred_cells, const FrameMask& target, int ph, int pw) {
  if (pred_cells != target.size() ||
      (ph > 0 && (ph != target.height() || pw != target.width()))) {
    throw Error(ErrorCategory::kShapeMismatch,
                "loss: prediction " + std::to_string(ph) + "x" +
                    std::to_string(pw) + " vs target " +
                    std::to_string(target.height()) + "x" +
                    std::to_string(target.width()));
  }
}

std::vector<double> ToDouble(std::span<const float> v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace

void LossWeights::Validate() const {
  if (lambda_focal < 0 || lambda_dice < 0 || focal_gamma < 0 ||
      focal_alpha < 0 || focal_alpha > 1) {
    throw Error(ErrorCategory::kConfig,
                "loss weights must be non-negative and alpha in [0, 1]");
  }
}

double DiceLoss(const ProbMask& pred, const FrameMask& target) {
  CheckShapes(pred.size(), target, pred.height(), pred.width());
  const auto p = ToDouble(pred.probs());
  return loss_math::Dice<double>(p, target.bits());
}

double FocalLoss(const ProbMask& pred, const FrameMask& target, double gamma,
                 double alpha) {
  CheckShapes(pred.size(), target, pred.height(), pred.width());
  const auto p = ToDouble(pred.probs());
  return loss_math::Focal<double>(p, target.bits(), gamma, alpha);
}

double MaskLoss(const ProbMask& pred, const FrameMask& target,
                const LossWeights& weights) {
  weights.Validate();
  return weights.lambda_focal *
             FocalLoss(pred, target, weights.focal_gamma, weights.focal_alpha) +
         weights.lambda_dice * DiceLoss(pred, target);
}

nn::Var MaskLossOp(const nn::Var& probs, const FrameMask& target,
                   const LossWeights& weights, LossBreakdown* breakdown) {
  weights.Validate();
  CheckShapes(probs->value.numel(), target, 0, 0);
  auto p = std::make_shared<std::vector<double>>(ToDouble(probs->value.values()));
  const double dice = loss_math::Dice<double>(*p, target.bits());
  const double focal = loss_math::Focal<double>(
      *p, target.bits(), weights.focal_gamma, weights.focal_alpha);
  const double total = weights.lambda_focal * focal + weights.lambda_dice * dice;
  if (!std::isfinite(total)) {
    throw Error(ErrorCategory::kNumeric, "mask loss is not finite");
  }
  if (breakdown) *breakdown = {total, dice, focal};
  nn::Tensor y({1}, std::vector<float>{static_cast<float>(total)});
  return nn::MakeResult(std::move(y), {probs},
                        [p, target, weights](nn::Node& self) {
    const double seed = self.grad[0];
    std::vector<double> g(p->size(), 0.0);
    loss_math::Dice<double>(*p, target.bits(), g, seed * weights.lambda_dice);
    loss_math::Focal<double>(*p, target.bits(), weights.focal_gamma,
                             weights.focal_alpha, g,
                             seed * weights.lambda_focal);
    nn::Tensor& dp = self.inputs[0]->EnsureGrad();
    for (size_t i = 0; i < g.size(); ++i) dp[i] += static_cast<float>(g[i]);
  });
}

}  // namespace maskmotion
