#ifndef MASKMOTION_MEMORY_BANK_H_
#define MASKMOTION_MEMORY_BANK_H_

#include <cstdint>
#include <span>
#include <vector>

#include "maskmotion/nn/autograd.h"

namespace maskmotion {

// Non-negative, sums to one.
struct AttentionWeights {
  std::vector<double> weights;
};

struct MotionLatent {
  std::vector<float> values;
};

// Learnable c x l store of motion-pattern prototypes. Addressed by softmax
// over cosine similarities (no temperature) and read out as the
// attention-weighted sum of rows. Updated only through gradients.
//
// Reads are safe from many threads once training has stopped; updates need
// exclusive access.
class MemoryBank {
 public:
  static constexpr int kDefaultSize = 100;
  static constexpr int kDefaultLength = 256;

  // Rows drawn from a standard normal and scaled to unit norm.
  MemoryBank(int size_c, int length_l, uint64_t seed);
  // Explicit entries, row-major. Throws if any row is all zero.
  MemoryBank(int size_c, int length_l, std::vector<float> entries);

  int size_c() const { return size_c_; }
  int length_l() const { return length_l_; }
  std::span<const float> entries() const { return param_[0].var->value.values(); }
  const nn::Var& entries_var() const { return param_[0].var; }
  std::vector<nn::Parameter>& parameters() { return param_; }

  // A frozen bank rejects optimizer updates; gradients still flow through
  // it to whatever produced the latent.
  bool frozen() const { return frozen_; }
  void SetFrozen(bool frozen);

  AttentionWeights Address(std::span<const float> z) const;
  MotionLatent Retrieve(const AttentionWeights& w) const;

  // Re-normalizes rows whose norm fell below 1e-8 (an exactly zero row
  // becomes a basis vector). Returns the number of rows touched.
  int GuardRows();

 private:
  int size_c_;
  int length_l_;
  bool frozen_ = false;
  std::vector<nn::Parameter> param_;
};

// Autograd op: z [l] -> retrieve(bank, address(bank, z)) [l]. The bank's
// entries receive a gradient only while the bank is not frozen.
nn::Var MemoryReadout(const nn::Var& z, const MemoryBank& bank);

}  // namespace maskmotion

#endif  // MASKMOTION_MEMORY_BANK_H_
