#ifndef MASKMOTION_IMAGE_H_
#define MASKMOTION_IMAGE_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "maskmotion/mask.h"

namespace maskmotion {

// RGB image, values in [0, 1], stored row-major with interleaved channels.
class ImageFrame {
 public:
  ImageFrame() = default;
  ImageFrame(int height, int width, float fill = 0.0f);
  ImageFrame(int height, int width, std::vector<float> rgb);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return rgb_.empty(); }
  const std::vector<float>& rgb() const { return rgb_; }

  float at(int row, int col, int channel) const {
    return rgb_[(static_cast<size_t>(row) * width_ + col) * 3 + channel];
  }
  void set(int row, int col, int channel, float v) {
    rgb_[(static_cast<size_t>(row) * width_ + col) * 3 + channel] = v;
  }

  friend bool operator==(const ImageFrame&, const ImageFrame&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> rgb_;
};

// Rounds every value to the nearest multiple of 1/255, the precision a PPM
// file can hold.
ImageFrame Quantize(const ImageFrame& image);

// Binary PPM (P6, maxval 255).
std::string EncodePpm(const ImageFrame& image);
ImageFrame DecodePpm(std::string_view bytes);
void WritePpm(const std::filesystem::path& path, const ImageFrame& image);
ImageFrame ReadPpm(const std::filesystem::path& path);

// Nearest-neighbour counterpart of ResizeWithPadding for images; padding is
// black.
ImageFrame ResizeImageWithPadding(const ImageFrame& image, int side);

// Paints `mask` over `image` in `color` with the given opacity.
ImageFrame Overlay(const ImageFrame& image, const FrameMask& mask,
                   const float color[3], float opacity);

}  // namespace maskmotion

#endif  // MASKMOTION_IMAGE_H_
