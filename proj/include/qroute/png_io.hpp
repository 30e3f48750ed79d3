// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qroute {

/// 8-bit RGB image, rows top to bottom, 3 bytes per pixel.
struct ImageRgb8 {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<unsigned char> pixels;  // height * width * 3

  unsigned char& at(std::int64_t y, std::int64_t x, int channel) {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + channel)];
  }
  unsigned char at(std::int64_t y, std::int64_t x, int channel) const {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + channel)];
  }
};

/// Writes an 8-bit RGB PNG; throws ConfigError on any I/O or encoding
/// failure, naming the path.
void write_png_rgb8(const std::string& path, const ImageRgb8& image);

/// Reads an 8-bit RGB PNG written by write_png_rgb8; rejects other
/// formats. Throws ConfigError naming the path on failure.
ImageRgb8 read_png_rgb8(const std::string& path);

}  // namespace qroute
