#include "patchlikely/generation.hpp"

#include <algorithm>
#include <cmath>

#include "patchlikely/patch.hpp"

namespace patchlikely {

namespace {
constexpr size_t kBlock = 256;
}

Mask::Mask(int w, int h, bool fill) : width(w), height(h), target(static_cast<size_t>(w) * h, fill ? 1 : 0) {
  if (w < 0 || h < 0) throw Error(ErrorKind::kInvalidArgument, "mask extents must be non-negative");
}

int64_t Mask::target_count() const {
  return std::count(target.begin(), target.end(), uint8_t{1});
}

Mask mask_from_image(const Image8& image) {
  Mask m(image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      m.set(x, y, image.at(x, y, 0) || image.at(x, y, 1) || image.at(x, y, 2));
  return m;
}

Mask load_mask(const std::filesystem::path& path) { return mask_from_image(load_image(path)); }

size_t PatchGrid::kept_count() const {
  return static_cast<size_t>(std::count_if(patches.begin(), patches.end(), [](const GridPatch& p) { return !p.excluded; }));
}

std::vector<int> grid_positions(int extent, int patch_size, int stride) {
  if (stride < 1) throw Error(ErrorKind::kInvalidArgument, "stride must be positive");
  if (extent < patch_size) {
    throw Error(ErrorKind::kInvalidArgument, "extent " + std::to_string(extent) + " is smaller than the patch size " +
                                                 std::to_string(patch_size));
  }
  std::vector<int> out;
  for (int p = 0; p + patch_size <= extent; p += stride) out.push_back(p);
  if (out.back() != extent - patch_size) out.push_back(extent - patch_size);
  return out;
}

PatchGrid extract_patches(const Mask& mask, int patch_size, int stride) {
  PatchGrid g;
  g.width = mask.width;
  g.height = mask.height;
  g.patch_size = patch_size;
  g.stride = stride;
  g.coverage.assign(static_cast<size_t>(mask.width) * mask.height, 0);

  // Summed-area table for O(1) "does this patch touch the mask" queries.
  const int w1 = mask.width + 1;
  std::vector<int64_t> sat(static_cast<size_t>(w1) * (mask.height + 1), 0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      sat[static_cast<size_t>(y + 1) * w1 + x + 1] = mask.at(x, y) + sat[static_cast<size_t>(y) * w1 + x + 1] +
                                                     sat[static_cast<size_t>(y + 1) * w1 + x] -
                                                     sat[static_cast<size_t>(y) * w1 + x];
  auto box = [&](int x0, int y0, int x1, int y1) {
    return sat[static_cast<size_t>(y1) * w1 + x1] - sat[static_cast<size_t>(y0) * w1 + x1] -
           sat[static_cast<size_t>(y1) * w1 + x0] + sat[static_cast<size_t>(y0) * w1 + x0];
  };

  for (int y : grid_positions(mask.height, patch_size, stride)) {
    for (int x : grid_positions(mask.width, patch_size, stride)) {
      const bool excluded = box(x, y, x + patch_size, y + patch_size) > 0;
      g.patches.push_back({x, y, excluded});
      if (excluded) continue;
      for (int yy = y; yy < y + patch_size; ++yy)
        for (int xx = x; xx < x + patch_size; ++xx) ++g.coverage[static_cast<size_t>(yy) * mask.width + xx];
    }
  }
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (!mask.at(x, y) && g.coverage[static_cast<size_t>(y) * mask.width + x] == 0) ++g.uncovered_context;
  return g;
}

double latent_step(double z, double eta) { return z + eta * (-z * std::exp(-0.5 * z * z)); }

Tensor latent_step(const Tensor& z, float eta) {
  Tensor out = z;
  for (float& v : out.data()) v = static_cast<float>(latent_step(static_cast<double>(v), static_cast<double>(eta)));
  return out;
}

Tensor manipulate_patches(const Tensor& x, const FlowParams& params, float eta) {
  if (!std::isfinite(eta)) throw Error(ErrorKind::kInvalidArgument, "eta must be finite");
  const Tensor z = flow_forward(x, params).y;
  return clamp_to_input_range(flow_inverse(latent_step(z, eta), params));
}

Image8 recompose(const PatchGrid& grid, const std::vector<Tensor>& kept_patches, const Image8& original) {
  if (original.width != grid.width || original.height != grid.height) {
    throw Error(ErrorKind::kShape, "original image does not match the patch grid");
  }
  if (kept_patches.size() != grid.kept_count()) {
    throw Error(ErrorKind::kShape, "expected " + std::to_string(grid.kept_count()) + " kept patches, got " +
                                       std::to_string(kept_patches.size()));
  }
  const int p = grid.patch_size;
  std::vector<double> sum(original.pixels.size(), 0.0);
  size_t k = 0;
  for (const GridPatch& gp : grid.patches) {
    if (gp.excluded) continue;
    const Tensor& t = kept_patches[k++];
    if (t.shape() != std::vector<int64_t>{p, p, 3}) {
      throw Error(ErrorKind::kShape, "kept patch has shape " + shape_to_string(t.shape()));
    }
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x)
        for (int c = 0; c < 3; ++c)
          sum[(static_cast<size_t>(gp.y + y) * grid.width + gp.x + x) * 3 + c] += t.data()[(static_cast<size_t>(y) * p + x) * 3 + c];
  }
  Image8 out = original;
  for (size_t i = 0; i < grid.coverage.size(); ++i) {
    const int n = grid.coverage[i];
    if (n == 0) continue;
    for (int c = 0; c < 3; ++c) {
      const double mean = sum[i * 3 + c] / n;
      // Level (x + 0.5) * 256 - 0.5 rounded half up.
      const double level = std::floor((mean + 0.5) * 256.0);
      out.pixels[i * 3 + c] = static_cast<uint8_t>(std::clamp(level, 0.0, 255.0));
    }
  }
  return out;
}

GenerationResult generate_illusion(const Image8& image, const Mask& mask, const FlowParams& params,
                                   const GenerationConfig& config) {
  if (mask.width != image.width || mask.height != image.height) {
    throw Error(ErrorKind::kShape, "mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                                       " but the image is " + std::to_string(image.width) + "x" +
                                       std::to_string(image.height));
  }
  const int p = params.config.patch_size;
  GenerationResult res;
  res.grid = extract_patches(mask, p, config.stride);
  if (res.grid.uncovered_context > 0) {
    warn(std::to_string(res.grid.uncovered_context) + " context pixels are not covered by any patch clear of the mask");
  }
  std::vector<const GridPatch*> kept;
  for (const GridPatch& gp : res.grid.patches)
    if (!gp.excluded) kept.push_back(&gp);

  std::vector<Tensor> manipulated;
  manipulated.reserve(kept.size());
  for (size_t begin = 0; begin < kept.size(); begin += kBlock) {
    const size_t end = std::min(kept.size(), begin + kBlock);
    std::vector<Tensor> block;
    for (size_t i = begin; i < end; ++i) block.push_back(dequantize_fixed(image.crop(kept[i]->x, kept[i]->y, p, p)));
    const Tensor out = manipulate_patches(stack(block), params, config.eta);
    for (size_t i = 0; i < block.size(); ++i) manipulated.push_back(unstack(out, static_cast<int64_t>(i)));
  }
  res.image = recompose(res.grid, manipulated, image);
  return res;
}

}  // namespace patchlikely
