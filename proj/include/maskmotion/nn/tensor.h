#ifndef MASKMOTION_NN_TENSOR_H_
#define MASKMOTION_NN_TENSOR_H_

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace maskmotion::nn {

// Dense float32 tensor, row-major, no batch dimension. Activations are laid
// out channel-first: [C, H, W] or [C, D, H, W].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f);
  Tensor(std::vector<int> shape, std::vector<float> values);

  const std::vector<int>& shape() const { return shape_; }
  int dim(int axis) const { return shape_[axis]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool defined() const { return !shape_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float& operator[](int64_t i) { return data_[i]; }
  float operator[](int64_t i) const { return data_[i]; }

  void Fill(float v);
  // this += other (same numel).
  void AddInPlace(const Tensor& other);

  std::string ShapeString() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

int64_t NumElements(const std::vector<int>& shape);

}  // namespace maskmotion::nn

#endif  // MASKMOTION_NN_TENSOR_H_
