#ifndef MASKMOTION_MEMORY_MATH_H_
#define MASKMOTION_MEMORY_MATH_H_

// Cosine-softmax addressing and convex readout over a row-major c x l
// memory matrix, plus the exact reverse-mode derivative of the composite.
// Templated so tests can run the same code in double precision.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "maskmotion/error.h"

namespace maskmotion::memory_math {

template <typename T>
T Norm(std::span<const T> v) {
  T s = 0;
  for (T x : v) s += x * x;
  return std::sqrt(s);
}

// weights[i] = exp(cos(z, row_i)) / sum_j exp(cos(z, row_j)).
template <typename T>
void Address(std::span<const T> entries, int c, int l, std::span<const T> z,
             std::span<T> weights) {
  if (static_cast<int>(z.size()) != l || static_cast<int>(weights.size()) != c ||
      static_cast<int64_t>(entries.size()) != static_cast<int64_t>(c) * l) {
    throw Error(ErrorCategory::kShapeMismatch,
                "address: latent length " + std::to_string(z.size()) +
                    " vs memory " + std::to_string(c) + "x" + std::to_string(l));
  }
  const T zn = Norm(z);
  if (!(zn > 0)) {
    throw Error(ErrorCategory::kNumeric,
                "address: zero-norm latent has no cosine similarity");
  }
  T max_s = -2;
  for (int i = 0; i < c; ++i) {
    auto row = entries.subspan(static_cast<size_t>(i) * l, l);
    const T rn = Norm(row);
    if (!(rn > 0)) {
      throw Error(ErrorCategory::kNumeric,
                  "address: memory row " + std::to_string(i) + " has zero norm");
    }
    T dot = 0;
    for (int k = 0; k < l; ++k) dot += z[k] * row[k];
    weights[i] = dot / (zn * rn);
    max_s = std::max(max_s, weights[i]);
  }
  T total = 0;
  for (int i = 0; i < c; ++i) {
    weights[i] = std::exp(weights[i] - max_s);
    total += weights[i];
  }
  for (int i = 0; i < c; ++i) weights[i] /= total;
}

// out = sum_i weights[i] * row_i.
template <typename T, typename U>
void Readout(std::span<const T> entries, int c, int l,
             std::span<const U> weights, std::span<T> out) {
  if (static_cast<int>(weights.size()) != c || static_cast<int>(out.size()) != l) {
    throw Error(ErrorCategory::kShapeMismatch,
                "retrieve: " + std::to_string(weights.size()) +
                    " weights for " + std::to_string(c) + " memory rows");
  }
  std::fill(out.begin(), out.end(), T{0});
  for (int i = 0; i < c; ++i) {
    const T w = static_cast<T>(weights[i]);
    const T* row = entries.data() + static_cast<size_t>(i) * l;
    for (int k = 0; k < l; ++k) out[k] += w * row[k];
  }
}

// Given d(loss)/d(out) for out = Readout(Address(z)), accumulates into
// d_z and d_entries. Either output span may be empty to skip it.
template <typename T>
void AddressReadoutBackward(std::span<const T> entries, int c, int l,
                            std::span<const T> z, std::span<const T> weights,
                            std::span<const T> d_out, std::span<T> d_z,
                            std::span<T> d_entries) {
  const T zn = Norm(z);
  std::vector<T> d_w(c);
  T weighted = 0;
  for (int i = 0; i < c; ++i) {
    const T* row = entries.data() + static_cast<size_t>(i) * l;
    T s = 0;
    for (int k = 0; k < l; ++k) s += d_out[k] * row[k];
    d_w[i] = s;
    weighted += weights[i] * s;
  }
  for (int i = 0; i < c; ++i) {
    auto row = entries.subspan(static_cast<size_t>(i) * l, l);
    const T rn = Norm(row);
    T dot = 0;
    for (int k = 0; k < l; ++k) dot += z[k] * row[k];
    const T cos = dot / (zn * rn);
    const T d_s = weights[i] * (d_w[i] - weighted);
    const T inv = T{1} / (zn * rn);
    if (!d_z.empty()) {
      for (int k = 0; k < l; ++k) {
        d_z[k] += d_s * (row[k] * inv - cos * z[k] / (zn * zn));
      }
    }
    if (!d_entries.empty()) {
      T* d_row = d_entries.data() + static_cast<size_t>(i) * l;
      for (int k = 0; k < l; ++k) {
        d_row[k] += weights[i] * d_out[k] +
                    d_s * (z[k] * inv - cos * row[k] / (rn * rn));
      }
    }
  }
}

}  // namespace maskmotion::memory_math

#endif  // MASKMOTION_MEMORY_MATH_H_
