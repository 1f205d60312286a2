#pragma once

#include <cstdint>
#include <vector>

#include "patchlikely/rng.hpp"
#include "patchlikely/tensor.hpp"

namespace patchlikely {

enum class Direction { kForward, kInverse };

struct FlowConfig {
  int patch_size = 16;
  int channels = 3;  // input channels; the flow runs on 4x that after squeezing
  int steps = 32;
  int hidden_width = 128;

  int latent_size() const { return patch_size / 2; }
  int latent_channels() const { return channels * 4; }
  // Total dimensionality D of a patch (and of its latent code).
  int64_t dim() const { return static_cast<int64_t>(patch_size) * patch_size * channels; }
  Shape patch_shape() const { return {patch_size, patch_size, channels}; }
  Shape latent_shape() const { return {latent_size(), latent_size(), latent_channels()}; }

  void validate() const;
  friend bool operator==(const FlowConfig&, const FlowConfig&) = default;
};

// Scale is stored as its logarithm so it stays strictly positive under any
// gradient update.
struct ActNormParams {
  Tensor log_scale;  // [C]
  Tensor bias;       // [C]

  static ActNormParams identity(int channels);
  // Throws when any scale is not strictly positive.
  static ActNormParams from_scale(const Tensor& scale, const Tensor& bias);
  Tensor scale() const;
};

struct InvConvParams {
  Tensor weight;  // [C, C]
};

// conv3x3(C/2 -> hidden) -> tanh -> conv3x3(hidden -> hidden) -> tanh ->
// conv3x3(hidden -> C). The first C/2 outputs are raw log-scales, the rest
// shifts.
struct CouplingParams {
  Tensor w1, b1, w2, b2, w3, b3;
};

struct FlowStep {
  ActNormParams actnorm;
  InvConvParams invconv;
  CouplingParams coupling;
};

struct FlowParams {
  FlowConfig config;
  std::vector<FlowStep> steps;

  // Every parameter tensor in the canonical order used by checkpoints and
  // the optimizer: per step log_scale, bias, W, w1, b1, w2, b2, w3, b3.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  int64_t parameter_count() const;
};

constexpr int kTensorsPerStep = 9;

// Random orthogonal 1x1 convolutions, small Gaussian coupling weights with
// a zero final layer, identity actnorm.
FlowParams init_flow(const FlowConfig& config, Rng& rng);
// Every step is the identity: unit scale, zero bias, W = I, and a coupling
// whose scale saturates to exactly 1 in float with zero shift.
FlowParams identity_flow(const FlowConfig& config);

// Space-to-depth by 2x2 blocks. Accepts H x W x C or N x H x W x C.
template <typename T>
BasicTensor<T> squeeze(const BasicTensor<T>& x, Direction direction);

template <typename T>
struct LayerOutput {
  BasicTensor<T> y;
  std::vector<double> logdet;  // one entry per batch element
};

template <typename T>
LayerOutput<T> actnorm_apply(const BasicTensor<T>& x, const ActNormParams& p, Direction direction);
template <typename T>
LayerOutput<T> invconv_apply(const BasicTensor<T>& x, const InvConvParams& p, Direction direction);
template <typename T>
LayerOutput<T> coupling_apply(const BasicTensor<T>& x, const CouplingParams& p, Direction direction);

// x: patches (P x P x C or N x P x P x C) -> latent codes in squeezed layout.
template <typename T>
LayerOutput<T> flow_forward(const BasicTensor<T>& x, const FlowParams& params);
template <typename T>
BasicTensor<T> flow_inverse(const BasicTensor<T>& z, const FlowParams& params);

// Standard-normal log-density of each latent code in the batch.
template <typename T>
std::vector<double> gaussian_log_density(const BasicTensor<T>& z);

// log p(x) in nats, one value per patch.
template <typename T>
std::vector<double> log_likelihood(const BasicTensor<T>& x, const FlowParams& params);

double bits_per_dim(double nll_nats, int64_t dim, int levels = 256);

// x = inverse(temperature * eps), clamped to the model input range.
Tensor sample_patch(const FlowParams& params, Rng& rng, float temperature);

// Sets each step's actnorm so that the batch, propagated through the steps
// before it, leaves that actnorm with zero mean and unit variance per channel.
void actnorm_initialize(const Tensor& batch, FlowParams& params);

// Throws kNumerical when any 1x1 convolution is singular to working precision.
void check_invertible(const FlowParams& params);

// Lower bound on |det W| below which a 1x1 convolution counts as singular.
constexpr double kMinAbsDet = 1e-12;

}  // namespace patchlikely
