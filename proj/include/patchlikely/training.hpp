#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "patchlikely/autodiff.hpp"
#include "patchlikely/flow.hpp"
#include "patchlikely/image.hpp"
#include "patchlikely/rng.hpp"

namespace patchlikely {

// Source images for patch sampling: a whole corpus, or a single image for
// internal-statistics models.
class PatchDataset {
 public:
  static PatchDataset from_corpus(const std::filesystem::path& dir, int patch_size);
  static PatchDataset from_image(const std::filesystem::path& path, int patch_size);
  // Images smaller than the patch are skipped with a warning. Throws when
  // nothing usable remains.
  static PatchDataset from_images(std::vector<Image8> images, int patch_size, const std::string& origin);

  int patch_size() const { return patch_size_; }
  const std::vector<Image8>& images() const { return images_; }
  const std::string& origin() const { return origin_; }

 private:
  std::vector<Image8> images_;
  int patch_size_ = 0;
  std::string origin_;
};

// Uniform image choice, then a uniform top-left corner over every position
// that keeps the patch inside the image.
std::vector<Image8> sample_patches(const PatchDataset& dataset, int count, Rng& rng);

// Dequantized N x P x P x 3 batch.
Tensor make_batch(const std::vector<Image8>& patches, Rng& rng);
Tensor make_batch_fixed(const std::vector<Image8>& patches, double u = 0.5);

// Mean negative log-likelihood in nats. Throws kNumerical naming the first
// non-finite term.
template <typename T>
double nll_loss(const BasicTensor<T>& batch, const FlowParams& params);

// The same loss recorded on an autodiff tape; `params` are leaves in
// FlowParams::tensors() order.
template <typename T>
struct NllGraph {
  ad::Var<T> loss;
  std::vector<ad::Var<T>> params;
};

template <typename T>
NllGraph<T> record_nll(ad::Tape<T>& tape, const FlowParams& params, const BasicTensor<T>& batch);

struct LossAndGradient {
  double loss;
  std::vector<Tensor> gradients;  // FlowParams::tensors() order
};

LossAndGradient nll_gradient(const FlowParams& params, const Tensor& batch);

struct TrainConfig {
  FlowConfig model;
  int batch_size = 256;
  int64_t steps = 2000;
  double learning_rate = 1e-4;
  int64_t warmup_steps = 500;
  int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  uint64_t seed = 0;
  double grad_clip = 50.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState zeros_like(const FlowParams& params);
};

struct Checkpoint {
  FlowParams params;
  AdamState optimizer;
  uint64_t step = 0;  // completed optimizer steps
  uint64_t seed = 0;
};

struct StepMetrics {
  uint64_t step = 0;  // index of the step just taken
  double nll = 0.0;   // mean nats on the training batch before the update
  double bits_per_dim = 0.0;
  double grad_norm = 0.0;
  double learning_rate = 0.0;
  bool skipped = false;
};

// One Adam update with linear warmup and global-norm clipping. Steps with a
// non-finite gradient, or that would make a 1x1 convolution singular, leave
// params and optimizer state untouched and report skipped.
StepMetrics train_step(FlowParams& params, AdamState& optimizer, const Tensor& batch, const TrainConfig& config,
                       uint64_t step);

// Deterministic per-step batch: a pure function of (seed, step).
Tensor training_batch(const PatchDataset& dataset, const TrainConfig& config, uint64_t step);

// Initialized (actnorm data-dependent) model and zeroed optimizer at step 0.
Checkpoint initialize_training(const TrainConfig& config, const PatchDataset& dataset);

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::filesystem::path checkpoint_path;  // used when checkpoint_every > 0
};

// Runs from `start` (use initialize_training for a fresh run) until
// config.steps optimizer steps have completed.
Checkpoint train(const TrainConfig& config, const PatchDataset& dataset, Checkpoint start,
                 const TrainHooks& hooks = {});
Checkpoint train(const TrainConfig& config, const PatchDataset& dataset, const TrainHooks& hooks = {});

}  // namespace patchlikely
