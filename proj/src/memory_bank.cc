#include "maskmotion/memory_bank.h"

#include <glog/logging.h>

#include <cmath>
#include <random>

#include "maskmotion/error.h"
#include "maskmotion/memory_math.h"

namespace maskmotion {
namespace {

void CheckSizes(int c, int l) {
  if (c < 1 || l < 1) {
    throw Error(ErrorCategory::kInvalidArgument,
                "memory bank needs c >= 1 and l >= 1, got c=" +
                    std::to_string(c) + " l=" + std::to_string(l));
  }
}

std::vector<double> ToDouble(std::span<const float> v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace

MemoryBank::MemoryBank(int size_c, int length_l, uint64_t seed)
    : size_c_(size_c), length_l_(length_l) {
  CheckSizes(size_c, length_l);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> entries(static_cast<size_t>(size_c) * length_l);
  for (int i = 0; i < size_c; ++i) {
    float* row = entries.data() + static_cast<size_t>(i) * length_l;
    double norm = 0.0;
    do {
      norm = 0.0;
      for (int k = 0; k < length_l; ++k) {
        row[k] = normal(rng);
        norm += static_cast<double>(row[k]) * row[k];
      }
    } while (norm == 0.0);
    const float inv = static_cast<float>(1.0 / std::sqrt(norm));
    for (int k = 0; k < length_l; ++k) row[k] *= inv;
  }
  param_.push_back(
      {"memory.entries",
       nn::Leaf(nn::Tensor({size_c, length_l}, std::move(entries)), true)});
}

MemoryBank::MemoryBank(int size_c, int length_l, std::vector<float> entries)
    : size_c_(size_c), length_l_(length_l) {
  CheckSizes(size_c, length_l);
  nn::Tensor t({size_c, length_l}, std::move(entries));
  for (int i = 0; i < size_c; ++i) {
    bool nonzero = false;
    for (int k = 0; k < length_l; ++k) nonzero |= t[i * length_l + k] != 0.0f;
    if (!nonzero) {
      throw Error(ErrorCategory::kInvalidArgument,
                  "memory row " + std::to_string(i) + " is all zero");
    }
  }
  param_.push_back({"memory.entries", nn::Leaf(std::move(t), true)});
}

void MemoryBank::SetFrozen(bool frozen) {
  frozen_ = frozen;
  param_[0].var->requires_grad = !frozen;
}

AttentionWeights MemoryBank::Address(std::span<const float> z) const {
  const auto entries = ToDouble(this->entries());
  const auto zd = ToDouble(z);
  AttentionWeights w;
  w.weights.resize(size_c_);
  memory_math::Address<double>(entries, size_c_, length_l_, zd, w.weights);
  return w;
}

MotionLatent MemoryBank::Retrieve(const AttentionWeights& w) const {
  const auto entries = ToDouble(this->entries());
  std::vector<double> out(length_l_);
  memory_math::Readout<double, double>(entries, size_c_, length_l_,
                                       w.weights, out);
  return {std::vector<float>(out.begin(), out.end())};
}

int MemoryBank::GuardRows() {
  nn::Tensor& t = param_[0].var->value;
  int touched = 0;
  for (int i = 0; i < size_c_; ++i) {
    float* row = t.data() + static_cast<size_t>(i) * length_l_;
    double norm = 0.0;
    for (int k = 0; k < length_l_; ++k) norm += static_cast<double>(row[k]) * row[k];
    norm = std::sqrt(norm);
    if (norm >= 1e-8) continue;
    ++touched;
    if (norm > 0.0) {
      for (int k = 0; k < length_l_; ++k) {
        row[k] = static_cast<float>(row[k] / norm);
      }
    } else {
      std::fill(row, row + length_l_, 0.0f);
      row[i % length_l_] = 1.0f;
    }
    LOG(WARNING) << "memory row " << i << " collapsed (norm " << norm
                 << "), re-normalized";
  }
  return touched;
}

nn::Var MemoryReadout(const nn::Var& z, const MemoryBank& bank) {
  const int c = bank.size_c();
  const int l = bank.length_l();
  const nn::Var& entries_var = bank.entries_var();
  auto entries = std::make_shared<std::vector<double>>(ToDouble(bank.entries()));
  auto zd = std::make_shared<std::vector<double>>(ToDouble(z->value.values()));
  auto weights = std::make_shared<std::vector<double>>(c);
  memory_math::Address<double>(*entries, c, l, *zd, *weights);
  std::vector<double> out(l);
  memory_math::Readout<double, double>(*entries, c, l, *weights, out);
  nn::Tensor y({l}, std::vector<float>(out.begin(), out.end()));
  return nn::MakeResult(std::move(y), {z, entries_var},
                        [c, l, entries, zd, weights](nn::Node& self) {
    const nn::Var& z = self.inputs[0];
    const nn::Var& ev = self.inputs[1];
    const auto d_out = ToDouble(self.grad.values());
    std::vector<double> d_z(z->requires_grad ? l : 0, 0.0);
    std::vector<double> d_e(ev->requires_grad ? static_cast<size_t>(c) * l : 0,
                            0.0);
    memory_math::AddressReadoutBackward<double>(*entries, c, l, *zd, *weights,
                                                d_out, d_z, d_e);
    if (z->requires_grad) {
      nn::Tensor& g = z->EnsureGrad();
      for (int k = 0; k < l; ++k) g[k] += static_cast<float>(d_z[k]);
    }
    if (ev->requires_grad) {
      nn::Tensor& g = ev->EnsureGrad();
      for (size_t k = 0; k < d_e.size(); ++k) g[k] += static_cast<float>(d_e[k]);
    }
  });
}

}  // namespace maskmotion
