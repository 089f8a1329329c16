#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace macnet {

// Channels-first RGB image with values in [0,1].
struct Image {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<float> data;  // 3 * height * width, planes R,G,B

  float& at(int channel, std::int64_t y, std::int64_t x) {
    return data[static_cast<std::size_t>((channel * height + y) * width + x)];
  }
  float at(int channel, std::int64_t y, std::int64_t x) const {
    return data[static_cast<std::size_t>((channel * height + y) * width + x)];
  }

  static Image make(std::int64_t height, std::int64_t width) {
    Image img;
    img.height = height;
    img.width = width;
    img.data.assign(static_cast<std::size_t>(3 * height * width), 0.0f);
    return img;
  }
};

// Decodes a binary portable pixmap (P6, 8-bit) into [0,1] floats.
// Errors: IoError (missing file), UnsupportedImageError (not P6 or not
// 8-bit), MalformedImageError (corrupt header or truncated body).
Image load_image(const std::filesystem::path& path);

// Writes an image as binary P6; values are quantized with round(v*255)
// clamped to [0,255].
void write_image_ppm(const Image& image, const std::filesystem::path& path);

}  // namespace macnet
