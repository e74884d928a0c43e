#include "maskmotion/nn/tensor.h"

#include <algorithm>
#include <sstream>

#include "maskmotion/error.h"

namespace maskmotion::nn {

int64_t NumElements(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) {
      throw Error(ErrorCategory::kInvalidArgument, "negative tensor dimension");
    }
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, float fill)
    : shape_(std::move(shape)),
      data_(static_cast<size_t>(NumElements(shape_)), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (static_cast<int64_t>(data_.size()) != NumElements(shape_)) {
    throw Error(ErrorCategory::kShapeMismatch,
                "tensor payload of " + std::to_string(data_.size()) +
                    " values does not match shape " + ShapeString());
  }
}

void Tensor::Fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::AddInPlace(const Tensor& other) {
  if (other.numel() != numel()) {
    throw Error(ErrorCategory::kShapeMismatch,
                "cannot add " + other.ShapeString() + " into " + ShapeString());
  }
  const float* src = other.data();
  float* dst = data();
  for (int64_t i = 0; i < numel(); ++i) dst[i] += src[i];
}

std::string Tensor::ShapeString() const {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ',';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace maskmotion::nn
