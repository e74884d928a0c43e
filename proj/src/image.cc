#include "maskmotion/image.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "maskmotion/error.h"
#include "maskmotion/mask_io.h"

namespace maskmotion {
namespace {

void CheckImageDims(int height, int width) {
  if (height < 1 || width < 1) {
    throw Error(ErrorCategory::kInvalidArgument,
                "image dimensions must be >= 1, got " + std::to_string(height) +
                    "x" + std::to_string(width));
  }
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string NextToken(std::string_view bytes, size_t* pos) {
  while (*pos < bytes.size()) {
    const char c = bytes[*pos];
    if (c == '#') {
      while (*pos < bytes.size() && bytes[*pos] != '\n') ++*pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++*pos;
    } else {
      break;
    }
  }
  std::string token;
  while (*pos < bytes.size() &&
         !std::isspace(static_cast<unsigned char>(bytes[*pos]))) {
    token += bytes[(*pos)++];
  }
  return token;
}

int ParseHeaderInt(const std::string& token, const char* what) {
  if (token.empty() ||
      !std::all_of(token.begin(), token.end(),
                   [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
      token.size() > 9) {
    throw Error(ErrorCategory::kFormat,
                std::string("ppm: bad ") + what + " '" + token + "'");
  }
  return std::stoi(token);
}

}  // namespace

ImageFrame::ImageFrame(int height, int width, float fill)
    : height_(height), width_(width) {
  CheckImageDims(height, width);
  rgb_.assign(static_cast<size_t>(height) * width * 3, fill);
}

ImageFrame::ImageFrame(int height, int width, std::vector<float> rgb)
    : height_(height), width_(width), rgb_(std::move(rgb)) {
  CheckImageDims(height, width);
  if (rgb_.size() != static_cast<size_t>(height) * width * 3) {
    throw Error(ErrorCategory::kShapeMismatch,
                "image data has " + std::to_string(rgb_.size()) +
                    " values, expected " +
                    std::to_string(static_cast<size_t>(height) * width * 3));
  }
  for (float v : rgb_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCategory::kInvalidArgument,
                  "image values must lie in [0, 1]");
    }
  }
}

ImageFrame Quantize(const ImageFrame& image) {
  std::vector<float> rgb(image.rgb().size());
  for (size_t i = 0; i < rgb.size(); ++i) {
    rgb[i] = std::lround(image.rgb()[i] * 255.0f) / 255.0f;
  }
  return ImageFrame(image.height(), image.width(), std::move(rgb));
}

std::string EncodePpm(const ImageFrame& image) {
  std::string out = "P6\n" + std::to_string(image.width()) + " " +
                    std::to_string(image.height()) + "\n255\n";
  const size_t header = out.size();
  out.resize(header + image.rgb().size());
  for (size_t i = 0; i < image.rgb().size(); ++i) {
    out[header + i] = static_cast<char>(
        static_cast<uint8_t>(std::lround(image.rgb()[i] * 255.0f)));
  }
  return out;
}

ImageFrame DecodePpm(std::string_view bytes) {
  size_t pos = 0;
  if (NextToken(bytes, &pos) != "P6") {
    throw Error(ErrorCategory::kFormat, "ppm: missing P6 magic");
  }
  const int width = ParseHeaderInt(NextToken(bytes, &pos), "width");
  const int height = ParseHeaderInt(NextToken(bytes, &pos), "height");
  const int maxval = ParseHeaderInt(NextToken(bytes, &pos), "maxval");
  if (maxval != 255) {
    throw Error(ErrorCategory::kFormat, "ppm: only maxval 255 is supported");
  }
  if (width < 1 || height < 1) {
    throw Error(ErrorCategory::kFormat, "ppm: empty image");
  }
  ++pos;  // single whitespace byte after maxval
  const size_t n = static_cast<size_t>(width) * height * 3;
  if (pos > bytes.size() || bytes.size() - pos != n) {
    throw Error(ErrorCategory::kFormat,
                "ppm: expected " + std::to_string(n) + " pixel bytes, found " +
                    std::to_string(pos > bytes.size() ? 0 : bytes.size() - pos));
  }
  std::vector<float> rgb(n);
  for (size_t i = 0; i < n; ++i) {
    rgb[i] = static_cast<uint8_t>(bytes[pos + i]) / 255.0f;
  }
  return ImageFrame(height, width, std::move(rgb));
}

void WritePpm(const std::filesystem::path& path, const ImageFrame& image) {
  WriteFileBytes(path, EncodePpm(image));
}

ImageFrame ReadPpm(const std::filesystem::path& path) {
  const std::string bytes = ReadFileBytes(path);
  try {
    return DecodePpm(bytes);
  } catch (const Error& e) {
    throw Error(e.category(), path.string() + ": " + e.what());
  }
}

ImageFrame ResizeImageWithPadding(const ImageFrame& image, int side) {
  const PaddingTransform t =
      ComputePaddingTransform(image.height(), image.width(), side);
  ImageFrame out(side, side);
  for (int r = 0; r < t.content_height; ++r) {
    const int sr = NearestSourceIndex(r, t.content_height, t.original_height);
    for (int c = 0; c < t.content_width; ++c) {
      const int sc = NearestSourceIndex(c, t.content_width, t.original_width);
      for (int ch = 0; ch < 3; ++ch) {
        out.set(r + t.offset_row, c + t.offset_col, ch, image.at(sr, sc, ch));
      }
    }
  }
  return out;
}

ImageFrame Overlay(const ImageFrame& image, const FrameMask& mask,
                   const float color[3], float opacity) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw Error(ErrorCategory::kShapeMismatch, "overlay: image and mask differ in size");
  }
  ImageFrame out = image;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      for (int ch = 0; ch < 3; ++ch) {
        out.set(r, c, ch,
                (1.0f - opacity) * image.at(r, c, ch) + opacity * color[ch]);
      }
    }
  return out;
}

}  // namespace maskmotion
