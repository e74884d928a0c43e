#ifndef MASKMOTION_LOSSES_H_
#define MASKMOTION_LOSSES_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>

#include "maskmotion/mask.h"
#include "maskmotion/nn/autograd.h"

namespace maskmotion {

struct LossWeights {
  double lambda_focal = 1.0;
  double lambda_dice = 5.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;

  void Validate() const;
};

inline constexpr double kDiceSmoothing = 1.0;
inline constexpr double kProbClamp = 1e-7;

namespace loss_math {

// Soft dice with additive smoothing. When `grad` is non-empty it receives
// scale * dL/dp (accumulated).
template <typename T>
T Dice(std::span<const T> p, std::span<const uint8_t> t, std::span<T> grad = {},
       T scale = T{1}) {
  T inter = 0, sum_p = 0, sum_t = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * t[i];
    sum_p += p[i];
    sum_t += t[i];
  }
  const T eps = static_cast<T>(kDiceSmoothing);
  const T num = 2 * inter + eps;
  const T den = sum_p + sum_t + eps;
  if (!grad.empty()) {
    for (size_t i = 0; i < p.size(); ++i) {
      grad[i] += scale * -(2 * t[i] * den - num) / (den * den);
    }
  }
  return 1 - num / den;
}

// Mean over pixels of -alpha_t (1 - p_t)^gamma log(p_t), with p clamped to
// [1e-7, 1 - 1e-7]. Clamped pixels get zero gradient.
template <typename T>
T Focal(std::span<const T> p, std::span<const uint8_t> t, T gamma, T alpha,
        std::span<T> grad = {}, T scale = T{1}) {
  const T lo = static_cast<T>(kProbClamp);
  const T hi = 1 - lo;
  const T n = static_cast<T>(p.size());
  T total = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    const T pc = std::clamp(p[i], lo, hi);
    const bool fg = t[i] != 0;
    const T pt = fg ? pc : 1 - pc;
    const T at = fg ? alpha : 1 - alpha;
    const T one_minus = 1 - pt;
    const T log_pt = std::log(pt);
    const T mod = gamma == 0 ? T{1} : std::pow(one_minus, gamma);
    total += -at * mod * log_pt;
    if (!grad.empty() && p[i] > lo && p[i] < hi) {
      const T dmod = gamma == 0 ? T{0} : gamma * std::pow(one_minus, gamma - 1);
      const T d_pt = at * (dmod * log_pt - mod / pt);
      grad[i] += scale * (fg ? d_pt : -d_pt) / n;
    }
  }
  return total / n;
}

}  // namespace loss_math

double DiceLoss(const ProbMask& pred, const FrameMask& target);
double FocalLoss(const ProbMask& pred, const FrameMask& target,
                 double gamma = 2.0, double alpha = 0.25);
double MaskLoss(const ProbMask& pred, const FrameMask& target,
                const LossWeights& weights);

struct LossBreakdown {
  double total = 0.0;
  double dice = 0.0;
  double focal = 0.0;
};

// Autograd op on a [1,H,W] (or any H*W-element) probability tensor.
nn::Var MaskLossOp(const nn::Var& probs, const FrameMask& target,
                   const LossWeights& weights, LossBreakdown* breakdown);

}  // namespace maskmotion

#endif  // MASKMOTION_LOSSES_H_
