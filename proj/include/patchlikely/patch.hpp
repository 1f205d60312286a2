#pragma once

#include <vector>

#include "patchlikely/image.hpp"
#include "patchlikely/rng.hpp"
#include "patchlikely/tensor.hpp"

namespace patchlikely {

// Model input range: 8-bit value v with dither u in [0, 1) maps to
// (v + u) / 256 - 0.5, so inputs lie in [-0.5, 0.5).
constexpr float kInputMin = -0.5f;
constexpr float kInputMax = 0.5f;  // exclusive
constexpr int kLevels = 256;

// Uniform dequantization with u ~ U[0, 1). Output H x W x 3.
Tensor dequantize(const Image8& patch, Rng& rng);
// Fixed dither u for every value; analysis and generation use u = 0.5.
Tensor dequantize_fixed(const Image8& patch, double u = 0.5);

float dequantize_value(int v, double u);
// Inverse of dequantize: floor((x + 0.5) * 256), clamped to [0, 255].
uint8_t quantize_value(float x);
Image8 quantize(const Tensor& patch);

Tensor clamp_to_input_range(Tensor x);

// Stacks H x W x 3 tensors into N x H x W x 3.
Tensor stack(const std::vector<Tensor>& patches);
// Element n of an N x H x W x C batch.
Tensor unstack(const Tensor& batch, int64_t n);

}  // namespace patchlikely
