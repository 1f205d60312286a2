#include "patchlikely/patch.hpp"

#include <algorithm>
#include <cmath>

namespace patchlikely {

float dequantize_value(int v, double u) {
  float x = static_cast<float>((v + u) / kLevels - 0.5);
  // Rounding to float can carry x into the next bin. Pull it back below the edge;
  // edge - 2^-24 is exact in float and quantizes to v for every bin.
  if (x >= kInputMax || quantize_value(x) > v) x = static_cast<float>((v + 1.0) / kLevels - 0.5 - 0x1.0p-24);
  return x;
}

uint8_t quantize_value(float x) {
  const double level = std::floor((static_cast<double>(x) + 0.5) * kLevels);
  return static_cast<uint8_t>(std::clamp(level, 0.0, 255.0));
}

Tensor dequantize(const Image8& patch, Rng& rng) {
  Tensor out(Shape{patch.height, patch.width, 3});
  for (size_t i = 0; i < patch.pixels.size(); ++i) out[static_cast<int64_t>(i)] = dequantize_value(patch.pixels[i], rng.uniform());
  return out;
}

Tensor dequantize_fixed(const Image8& patch, double u) {
  if (!(u >= 0.0 && u < 1.0)) throw Error(ErrorKind::kInvalidArgument, "dequantization dither must lie in [0, 1)");
  Tensor out(Shape{patch.height, patch.width, 3});
  for (size_t i = 0; i < patch.pixels.size(); ++i) out[static_cast<int64_t>(i)] = dequantize_value(patch.pixels[i], u);
  return out;
}

Image8 quantize(const Tensor& patch) {
  if (patch.rank() != 3 || patch.dim(2) != 3) {
    throw Error(ErrorKind::kShape, "quantize expects H x W x 3, got " + shape_to_string(patch.shape()));
  }
  Image8 out(static_cast<int>(patch.dim(1)), static_cast<int>(patch.dim(0)));
  for (int64_t i = 0; i < patch.size(); ++i) out.pixels[static_cast<size_t>(i)] = quantize_value(patch[i]);
  return out;
}

Tensor clamp_to_input_range(Tensor x) {
  const float hi = std::nextafter(kInputMax, kInputMin);
  for (float& v : x.data()) v = std::isnan(v) ? 0.0f : std::clamp(v, kInputMin, hi);
  return x;
}

Tensor stack(const std::vector<Tensor>& patches) {
  if (patches.empty()) throw Error(ErrorKind::kInvalidArgument, "cannot stack an empty patch list");
  Shape s = patches.front().shape();
  const int64_t per = patches.front().size();
  std::vector<float> data;
  data.reserve(static_cast<size_t>(per) * patches.size());
  for (const Tensor& p : patches) {
    require_same_shape(p.shape(), s, "stack");
    data.insert(data.end(), p.storage().begin(), p.storage().end());
  }
  s.insert(s.begin(), static_cast<int64_t>(patches.size()));
  return Tensor(s, std::move(data));
}

Tensor unstack(const Tensor& batch, int64_t n) {
  if (batch.rank() < 1 || n < 0 || n >= batch.dim(0)) {
    throw Error(ErrorKind::kShape, "unstack: index " + std::to_string(n) + " outside batch " +
                                       shape_to_string(batch.shape()));
  }
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  const int64_t per = shape_volume(s);
  std::vector<float> d(batch.storage().begin() + n * per, batch.storage().begin() + (n + 1) * per);
  return Tensor(s, std::move(d));
}

}  // namespace patchlikely
