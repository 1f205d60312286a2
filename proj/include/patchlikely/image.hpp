#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace patchlikely {

// 8-bit RGB image, row-major, channels interleaved.
struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  Image8() = default;
  Image8(int w, int h, uint8_t fill = 0);

  uint8_t& at(int x, int y, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  uint8_t at(int x, int y, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }

  Image8 crop(int x, int y, int w, int h) const;
  friend bool operator==(const Image8&, const Image8&) = default;
};

// PNG (8-bit gray/RGB/RGBA/palette) and binary PPM (P6, maxval 255).
// Gray inputs are expanded to RGB; alpha is dropped with a warning.
Image8 load_image(const std::filesystem::path& path);
// Format chosen by extension: .png or .ppm.
void save_image(const Image8& image, const std::filesystem::path& path);

// Single-channel 8-bit PNG, used for heatmap renderings.
void save_gray_png(const std::vector<uint8_t>& values, int width, int height, const std::filesystem::path& path);

struct Hsv {
  double h;  // degrees in [0, 360)
  double s;  // [0, 1]
  double v;  // [0, 1]
};

struct Rgb8 {
  uint8_t r, g, b;
  friend bool operator==(const Rgb8&, const Rgb8&) = default;
};

Hsv rgb_to_hsv(Rgb8 p);
Rgb8 hsv_to_rgb(const Hsv& hsv);

// Recursively lists .png/.ppm files (case-insensitive), sorted by path.
std::vector<std::filesystem::path> scan_corpus(const std::filesystem::path& dir);

}  // namespace patchlikely
