#ifndef MASKMOTION_MASK_H_
#define MASKMOTION_MASK_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace maskmotion {

// Binary occupancy grid for one instance in one frame, row-major.
class FrameMask {
 public:
  FrameMask() = default;
  // All-zero mask. Throws unless height >= 1 and width >= 1.
  FrameMask(int height, int width);
  // Takes ownership of `bits`; every value must be 0 or 1.
  FrameMask(int height, int width, std::vector<uint8_t> bits);

  int height() const { return height_; }
  int width() const { return width_; }
  int64_t size() const { return static_cast<int64_t>(bits_.size()); }
  std::span<const uint8_t> bits() const { return bits_; }

  uint8_t at(int row, int col) const { return bits_[row * width_ + col]; }
  void set(int row, int col, bool on) { bits_[row * width_ + col] = on; }

  int64_t Area() const;
  bool Empty() const { return Area() == 0; }
  bool SameShape(const FrameMask& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const FrameMask&, const FrameMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<uint8_t> bits_;
};

// Per-pixel foreground probabilities in [0, 1], row-major.
class ProbMask {
 public:
  ProbMask() = default;
  ProbMask(int height, int width, float fill = 0.0f);
  ProbMask(int height, int width, std::vector<float> probs);

  int height() const { return height_; }
  int width() const { return width_; }
  int64_t size() const { return static_cast<int64_t>(probs_.size()); }
  std::span<const float> probs() const { return probs_; }
  float at(int row, int col) const { return probs_[row * width_ + col]; }

  friend bool operator==(const ProbMask&, const ProbMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> probs_;
};

// Ordered masks of one instance over consecutive sampled frames.
struct MaskSequence {
  std::string instance_id;
  std::vector<FrameMask> frames;
  std::vector<int64_t> frame_indices;

  int height() const { return frames.empty() ? 0 : frames.front().height(); }
  int width() const { return frames.empty() ? 0 : frames.front().width(); }
  int length() const { return static_cast<int>(frames.size()); }

  // Throws kInvalidArgument describing the first violated invariant:
  // at least two frames, one shared shape, strictly increasing indices and an
  // instance id without whitespace.
  void Validate() const;

  friend bool operator==(const MaskSequence&, const MaskSequence&) = default;
};

// |a AND b| / |a OR b|. Two empty masks have IoU 1.
double MaskIou(const FrameMask& a, const FrameMask& b);

// cell = 1 iff prob >= threshold. threshold must lie in (0, 1).
FrameMask Binarize(const ProbMask& probs, float threshold = 0.5f);

// Boundary F-measure: precision and recall of boundary pixels (foreground
// cells with a 4-neighbour outside the mask) matched within a disk of radius
// `tolerance` pixels. A negative tolerance selects ceil(0.008 * diagonal),
// at least 1. Both boundaries empty gives 1, exactly one empty gives 0.
double BoundaryFScore(const FrameMask& pred, const FrameMask& truth,
                      double tolerance = -1.0);

// Mask centroid in pixel-center coordinates (x = col + 0.5, y = row + 0.5).
// Returns false for an empty mask.
bool MaskCentroid(const FrameMask& mask, double* x, double* y);

// Placement of an original-size grid inside a padded square.
struct PaddingTransform {
  int original_height = 0;
  int original_width = 0;
  int side = 0;
  double scale = 1.0;
  int content_height = 0;
  int content_width = 0;
  int offset_row = 0;
  int offset_col = 0;
};

PaddingTransform ComputePaddingTransform(int height, int width, int side);

// Nearest-neighbour source cell when `src_len` cells are stretched over
// `dst_len` cells.
int NearestSourceIndex(int dst, int dst_len, int src_len);

struct PaddedMask {
  FrameMask mask;
  PaddingTransform transform;
};

// Isotropic nearest-neighbour rescale to fit inside side x side, centred,
// zero padding elsewhere.
PaddedMask ResizeWithPadding(const FrameMask& mask, int side);

// Inverse of ResizeWithPadding: crops the content band and resamples back to
// the original size.
FrameMask UnpadMask(const FrameMask& padded, const PaddingTransform& transform);
ProbMask UnpadProbs(const ProbMask& padded, const PaddingTransform& transform);

}  // namespace maskmotion

#endif  // MASKMOTION_MASK_H_
