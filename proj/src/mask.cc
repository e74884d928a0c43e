#include "maskmotion/mask.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "maskmotion/error.h"

namespace maskmotion {
namespace {

void CheckDims(int height, int width) {
  if (height < 1 || width < 1) {
    std::ostringstream os;
    os << "mask dimensions must be >= 1, got " << height << "x" << width;
    throw Error(ErrorCategory::kInvalidArgument, os.str());
  }
}

std::string ShapeString(int h, int w) {
  return std::to_string(h) + "x" + std::to_string(w);
}

template <typename T>
std::vector<T> PadGrid(std::span<const T> src, const PaddingTransform& t) {
  std::vector<T> out(static_cast<size_t>(t.side) * t.side, T{0});
  for (int r = 0; r < t.content_height; ++r) {
    const int sr = NearestSourceIndex(r, t.content_height, t.original_height);
    for (int c = 0; c < t.content_width; ++c) {
      const int sc = NearestSourceIndex(c, t.content_width, t.original_width);
      out[(r + t.offset_row) * t.side + (c + t.offset_col)] =
          src[sr * t.original_width + sc];
    }
  }
  return out;
}

template <typename T>
std::vector<T> UnpadGrid(std::span<const T> padded, const PaddingTransform& t) {
  std::vector<T> out(
      static_cast<size_t>(t.original_height) * t.original_width, T{0});
  for (int r = 0; r < t.original_height; ++r) {
    const int pr =
        t.offset_row + NearestSourceIndex(r, t.original_height, t.content_height);
    for (int c = 0; c < t.original_width; ++c) {
      const int pc =
          t.offset_col + NearestSourceIndex(c, t.original_width, t.content_width);
      out[r * t.original_width + c] = padded[pr * t.side + pc];
    }
  }
  return out;
}

void CheckPaddedShape(int h, int w, const PaddingTransform& t) {
  if (h != t.side || w != t.side) {
    throw Error(ErrorCategory::kShapeMismatch,
                "padded grid is " + ShapeString(h, w) + ", transform expects " +
                    ShapeString(t.side, t.side));
  }
}

}  // namespace

int NearestSourceIndex(int dst, int dst_len, int src_len) {
  const int src = static_cast<int>(std::floor((dst + 0.5) * src_len / dst_len));
  return std::clamp(src, 0, src_len - 1);
}

FrameMask::FrameMask(int height, int width) : height_(height), width_(width) {
  CheckDims(height, width);
  bits_.assign(static_cast<size_t>(height) * width, 0);
}

FrameMask::FrameMask(int height, int width, std::vector<uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  CheckDims(height, width);
  if (bits_.size() != static_cast<size_t>(height) * width) {
    throw Error(ErrorCategory::kInvalidArgument,
                "mask payload has " + std::to_string(bits_.size()) +
                    " cells, expected " + ShapeString(height, width));
  }
  for (uint8_t b : bits_) {
    if (b > 1) {
      throw Error(ErrorCategory::kInvalidArgument,
                  "mask cell value " + std::to_string(b) + " is not 0 or 1");
    }
  }
}

int64_t FrameMask::Area() const {
  int64_t area = 0;
  for (uint8_t b : bits_) area += b;
  return area;
}

ProbMask::ProbMask(int height, int width, float fill)
    : ProbMask(height, width,
               std::vector<float>(static_cast<size_t>(std::max(height, 0)) *
                                      static_cast<size_t>(std::max(width, 0)),
                                  fill)) {}

ProbMask::ProbMask(int height, int width, std::vector<float> probs)
    : height_(height), width_(width), probs_(std::move(probs)) {
  CheckDims(height, width);
  if (probs_.size() != static_cast<size_t>(height) * width) {
    throw Error(ErrorCategory::kInvalidArgument,
                "probability payload has " + std::to_string(probs_.size()) +
                    " cells, expected " + ShapeString(height, width));
  }
  for (float p : probs_) {
    if (!(p >= 0.0f && p <= 1.0f)) {
      throw Error(ErrorCategory::kInvalidArgument,
                  "probability " + std::to_string(p) + " outside [0, 1]");
    }
  }
}

void MaskSequence::Validate() const {
  if (frames.size() < 2) {
    throw Error(ErrorCategory::kInvalidArgument,
                "mask sequence needs at least 2 frames, got " +
                    std::to_string(frames.size()));
  }
  if (frame_indices.size() != frames.size()) {
    throw Error(ErrorCategory::kInvalidArgument,
                "mask sequence has " + std::to_string(frames.size()) +
                    " frames but " + std::to_string(frame_indices.size()) +
                    " frame indices");
  }
  if (instance_id.empty() ||
      std::any_of(instance_id.begin(), instance_id.end(),
                  [](unsigned char ch) { return std::isspace(ch); })) {
    throw Error(ErrorCategory::kInvalidArgument,
                "instance id must be non-empty and free of whitespace");
  }
  for (size_t i = 1; i < frames.size(); ++i) {
    if (!frames[i].SameShape(frames[0])) {
      throw Error(ErrorCategory::kShapeMismatch,
                  "frame " + std::to_string(i) + " is " +
                      ShapeString(frames[i].height(), frames[i].width()) +
                      ", sequence is " +
                      ShapeString(frames[0].height(), frames[0].width()));
    }
    if (frame_indices[i] <= frame_indices[i - 1]) {
      throw Error(ErrorCategory::kInvalidArgument,
                  "frame indices must be strictly increasing at position " +
                      std::to_string(i));
    }
  }
}

double MaskIou(const FrameMask& a, const FrameMask& b) {
  if (!a.SameShape(b)) {
    throw Error(ErrorCategory::kShapeMismatch,
                "mask_iou shape mismatch: " +
                    ShapeString(a.height(), a.width()) + " vs " +
                    ShapeString(b.height(), b.width()));
  }
  int64_t inter = 0;
  int64_t uni = 0;
  const auto ab = a.bits();
  const auto bb = b.bits();
  for (size_t i = 0; i < ab.size(); ++i) {
    inter += ab[i] & bb[i];
    uni += ab[i] | bb[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

FrameMask Binarize(const ProbMask& probs, float threshold) {
  if (!(threshold > 0.0f && threshold < 1.0f)) {
    throw Error(ErrorCategory::kInvalidArgument,
                "binarize threshold must lie in (0, 1), got " +
                    std::to_string(threshold));
  }
  std::vector<uint8_t> bits(probs.probs().size());
  std::transform(probs.probs().begin(), probs.probs().end(), bits.begin(),
                 [threshold](float p) { return p >= threshold ? 1 : 0; });
  return FrameMask(probs.height(), probs.width(), std::move(bits));
}

namespace {

std::vector<std::pair<int, int>> BoundaryPixels(const FrameMask& m) {
  std::vector<std::pair<int, int>> out;
  const int h = m.height(), w = m.width();
  auto off = [&](int r, int c) {
    return r < 0 || r >= h || c < 0 || c >= w || !m.at(r, c);
  };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (m.at(r, c) && (off(r - 1, c) || off(r + 1, c) || off(r, c - 1) ||
                         off(r, c + 1))) {
        out.emplace_back(r, c);
      }
    }
  return out;
}

// Fraction of `from` pixels that have a `to` boundary pixel within radius.
double MatchedFraction(const std::vector<std::pair<int, int>>& from,
                       const FrameMask& to_map, double radius) {
  const int reach = static_cast<int>(std::floor(radius));
  int matched = 0;
  for (auto [r, c] : from) {
    bool hit = false;
    for (int dr = -reach; dr <= reach && !hit; ++dr)
      for (int dc = -reach; dc <= reach && !hit; ++dc) {
        const int rr = r + dr, cc = c + dc;
        if (rr < 0 || rr >= to_map.height() || cc < 0 || cc >= to_map.width())
          continue;
        if (dr * dr + dc * dc <= radius * radius && to_map.at(rr, cc)) hit = true;
      }
    matched += hit;
  }
  return static_cast<double>(matched) / from.size();
}

}  // namespace

double BoundaryFScore(const FrameMask& pred, const FrameMask& truth,
                      double tolerance) {
  if (!pred.SameShape(truth)) {
    throw Error(ErrorCategory::kShapeMismatch,
                "boundary_f shape mismatch: " +
                    ShapeString(pred.height(), pred.width()) + " vs " +
                    ShapeString(truth.height(), truth.width()));
  }
  if (tolerance < 0) {
    const double diag = std::hypot(pred.height(), pred.width());
    tolerance = std::max(1.0, std::ceil(0.008 * diag));
  }
  const auto pb = BoundaryPixels(pred);
  const auto tb = BoundaryPixels(truth);
  if (pb.empty() && tb.empty()) return 1.0;
  if (pb.empty() || tb.empty()) return 0.0;
  FrameMask pmap(pred.height(), pred.width()), tmap(truth.height(), truth.width());
  for (auto [r, c] : pb) pmap.set(r, c, true);
  for (auto [r, c] : tb) tmap.set(r, c, true);
  const double precision = MatchedFraction(pb, tmap, tolerance);
  const double recall = MatchedFraction(tb, pmap, tolerance);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

bool MaskCentroid(const FrameMask& mask, double* x, double* y) {
  double sx = 0.0;
  double sy = 0.0;
  int64_t count = 0;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (mask.at(r, c)) {
        sx += c + 0.5;
        sy += r + 0.5;
        ++count;
      }
    }
  }
  if (count == 0) return false;
  *x = sx / count;
  *y = sy / count;
  return true;
}

PaddingTransform ComputePaddingTransform(int height, int width, int side) {
  CheckDims(height, width);
  if (side < 1) {
    throw Error(ErrorCategory::kInvalidArgument,
                "padding side must be >= 1, got " + std::to_string(side));
  }
  PaddingTransform t;
  t.original_height = height;
  t.original_width = width;
  t.side = side;
  t.scale = static_cast<double>(side) / std::max(height, width);
  t.content_height = std::clamp(
      static_cast<int>(std::lround(height * t.scale)), 1, side);
  t.content_width =
      std::clamp(static_cast<int>(std::lround(width * t.scale)), 1, side);
  t.offset_row = (side - t.content_height) / 2;
  t.offset_col = (side - t.content_width) / 2;
  return t;
}

PaddedMask ResizeWithPadding(const FrameMask& mask, int side) {
  PaddingTransform t = ComputePaddingTransform(mask.height(), mask.width(), side);
  return {FrameMask(side, side, PadGrid<uint8_t>(mask.bits(), t)), t};
}

FrameMask UnpadMask(const FrameMask& padded, const PaddingTransform& t) {
  CheckPaddedShape(padded.height(), padded.width(), t);
  return FrameMask(t.original_height, t.original_width,
                   UnpadGrid<uint8_t>(padded.bits(), t));
}

ProbMask UnpadProbs(const ProbMask& padded, const PaddingTransform& t) {
  CheckPaddedShape(padded.height(), padded.width(), t);
  return ProbMask(t.original_height, t.original_width,
                  UnpadGrid<float>(padded.probs(), t));
}

}  // namespace maskmotion
