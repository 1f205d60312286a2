#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "patchlikely/flow.hpp"
#include "patchlikely/image.hpp"

namespace patchlikely {

// Binary target mask. Target pixels are never modified by generation.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> target;  // 1 = target

  Mask() = default;
  Mask(int w, int h, bool fill = false);

  bool at(int x, int y) const { return target[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { target[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  int64_t target_count() const;
};

// Any nonzero channel marks a target pixel.
Mask mask_from_image(const Image8& image);
Mask load_mask(const std::filesystem::path& path);

struct GridPatch {
  int x = 0;
  int y = 0;
  bool excluded = false;  // touches the target mask
};

struct PatchGrid {
  int width = 0;
  int height = 0;
  int patch_size = 16;
  int stride = 8;
  std::vector<GridPatch> patches;  // row-major over top-left corners
  std::vector<int> coverage;       // kept patches covering each pixel
  int64_t uncovered_context = 0;   // non-target pixels no kept patch reaches

  size_t kept_count() const;
};

// Stride-spaced corners plus a final flush position on each axis so the grid
// reaches the right and bottom edges.
std::vector<int> grid_positions(int extent, int patch_size, int stride);
PatchGrid extract_patches(const Mask& mask, int patch_size, int stride);

// Elementwise z + eta * (-z * exp(-z^2 / 2)).
double latent_step(double z, double eta);
Tensor latent_step(const Tensor& z, float eta);

// Forward, latent step, inverse, clamp; x is N x P x P x 3.
Tensor manipulate_patches(const Tensor& x, const FlowParams& params, float eta);

// Averages the manipulated kept patches (ordered as in grid.patches, skipping
// excluded ones) over their overlap and quantizes with round-half-up. Pixels
// no kept patch covers, including every target pixel, keep their values.
Image8 recompose(const PatchGrid& grid, const std::vector<Tensor>& kept_patches, const Image8& original);

struct GenerationConfig {
  float eta = 0.6f;
  int stride = 8;
};

struct GenerationResult {
  Image8 image;
  PatchGrid grid;
};

GenerationResult generate_illusion(const Image8& image, const Mask& mask, const FlowParams& params,
                                   const GenerationConfig& config);

}  // namespace patchlikely
