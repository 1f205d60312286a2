#include "patchlikely/training.hpp"

#include <cmath>
#include <numbers>

#include "patchlikely/checkpoint.hpp"
#include "patchlikely/patch.hpp"

namespace patchlikely {

namespace {

// Independent RNG streams derived from the run seed.
constexpr uint64_t kParamStream = 1;
constexpr uint64_t kInitBatchStream = 2;
constexpr uint64_t kBatchStream = 3;

}  // namespace

PatchDataset PatchDataset::from_corpus(const std::filesystem::path& dir, int patch_size) {
  const auto paths = scan_corpus(dir);
  if (paths.empty()) throw Error(ErrorKind::kInvalidArgument, dir.string() + ": corpus contains no PNG/PPM images");
  std::vector<Image8> images;
  images.reserve(paths.size());
  for (const auto& p : paths) images.push_back(load_image(p));
  return from_images(std::move(images), patch_size, dir.string());
}

PatchDataset PatchDataset::from_image(const std::filesystem::path& path, int patch_size) {
  std::vector<Image8> images;
  images.push_back(load_image(path));
  return from_images(std::move(images), patch_size, path.string());
}

PatchDataset PatchDataset::from_images(std::vector<Image8> images, int patch_size, const std::string& origin) {
  if (patch_size < 1) throw Error(ErrorKind::kInvalidArgument, "patch size must be positive");
  PatchDataset ds;
  ds.patch_size_ = patch_size;
  ds.origin_ = origin;
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].width < patch_size || images[i].height < patch_size) {
      warn(origin + ": image " + std::to_string(i) + " (" + std::to_string(images[i].width) + "x" +
           std::to_string(images[i].height) + ") is smaller than the patch size; skipped");
      continue;
    }
    ds.images_.push_back(std::move(images[i]));
  }
  if (ds.images_.empty()) throw Error(ErrorKind::kInvalidArgument, origin + ": no image is large enough to sample patches from");
  return ds;
}

std::vector<Image8> sample_patches(const PatchDataset& dataset, int count, Rng& rng) {
  if (count < 1) throw Error(ErrorKind::kInvalidArgument, "sample_patches: count must be positive");
  const int p = dataset.patch_size();
  std::vector<Image8> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const Image8& img = dataset.images()[rng.below(dataset.images().size())];
    const int x = static_cast<int>(rng.below(static_cast<uint64_t>(img.width - p + 1)));
    const int y = static_cast<int>(rng.below(static_cast<uint64_t>(img.height - p + 1)));
    out.push_back(img.crop(x, y, p, p));
  }
  return out;
}

Tensor make_batch(const std::vector<Image8>& patches, Rng& rng) {
  std::vector<Tensor> parts;
  parts.reserve(patches.size());
  for (const Image8& p : patches) parts.push_back(dequantize(p, rng));
  return stack(parts);
}

Tensor make_batch_fixed(const std::vector<Image8>& patches, double u) {
  std::vector<Tensor> parts;
  parts.reserve(patches.size());
  for (const Image8& p : patches) parts.push_back(dequantize_fixed(p, u));
  return stack(parts);
}

template <typename T>
double nll_loss(const BasicTensor<T>& batch, const FlowParams& params) {
  if (batch.rank() != 4 || batch.dim(0) < 1) {
    throw Error(ErrorKind::kInvalidArgument, "nll_loss needs a non-empty N x P x P x C batch, got " +
                                                 shape_to_string(batch.shape()));
  }
  const std::vector<double> ll = log_likelihood(batch, params);
  double total = 0.0;
  for (size_t i = 0; i < ll.size(); ++i) {
    if (!std::isfinite(ll[i])) {
      throw Error(ErrorKind::kNumerical, "nll_loss: non-finite log-likelihood for batch element " + std::to_string(i));
    }
    total -= ll[i];
  }
  return total / static_cast<double>(ll.size());
}

template <typename T>
NllGraph<T> record_nll(ad::Tape<T>& tape, const FlowParams& params, const BasicTensor<T>& batch) {
  const FlowConfig& cfg = params.config;
  if (batch.rank() != 4 || batch.dim(1) != cfg.patch_size || batch.dim(2) != cfg.patch_size ||
      batch.dim(3) != cfg.channels) {
    throw Error(ErrorKind::kShape, "record_nll: batch " + shape_to_string(batch.shape()) +
                                       " does not match model patch " + shape_to_string(cfg.patch_shape()));
  }
  const int64_t n = batch.dim(0);
  const int64_t side = cfg.latent_size(), c = cfg.latent_channels(), half = c / 2;
  const double pixels = static_cast<double>(side * side);

  NllGraph<T> graph;
  for (const Tensor* t : params.tensors()) graph.params.push_back(tape.variable(t->template cast<T>()));

  ad::Var<T> h = tape.constant(squeeze(batch, Direction::kForward));
  ad::Var<T> per_sample_logdet{};  // actnorm and 1x1 conv terms, identical for every patch
  ad::Var<T> coupling_logdet{};    // summed over the whole batch
  auto accumulate = [](ad::Var<T>& acc, ad::Var<T> term) { acc = acc.valid() ? ad::add(acc, term) : term; };

  for (size_t k = 0; k < params.steps.size(); ++k) {
    const ad::Var<T>* p = &graph.params[k * kTensorsPerStep];
    const ad::Var<T> log_scale = p[0], bias = p[1], weight = p[2];

    h = ad::mul(ad::add(h, bias), ad::exp(log_scale));
    accumulate(per_sample_logdet, ad::scale(ad::sum(log_scale), pixels));

    h = ad::reshape(ad::matmul(ad::reshape(h, {n * side * side, c}), weight, true), {n, side, side, c});
    accumulate(per_sample_logdet, ad::scale(ad::log_abs_det(weight), pixels));

    const ad::Var<T> x1 = ad::slice_channels(h, 0, half);
    const ad::Var<T> x2 = ad::slice_channels(h, half, c);
    ad::Var<T> a = ad::tanh(ad::conv2d(x1, p[3], p[4]));
    a = ad::tanh(ad::conv2d(a, p[5], p[6]));
    const ad::Var<T> out = ad::conv2d(a, p[7], p[8]);
    const ad::Var<T> s = ad::sigmoid(ad::add_scalar(ad::slice_channels(out, 0, half), 2.0));
    const ad::Var<T> y2 = ad::add(ad::mul(x2, s), ad::slice_channels(out, half, c));
    h = ad::concat_channels(x1, y2);
    accumulate(coupling_logdet, ad::sum(ad::log(s)));
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  ad::Var<T> loss = ad::scale(ad::sum(ad::mul(h, h)), 0.5 * inv_n);
  loss = ad::add(loss, ad::scale(coupling_logdet, -inv_n));
  loss = ad::add(loss, ad::scale(per_sample_logdet, -1.0));
  graph.loss = ad::add_scalar(loss, 0.5 * static_cast<double>(cfg.dim()) * std::log(2.0 * std::numbers::pi));
  return graph;
}

LossAndGradient nll_gradient(const FlowParams& params, const Tensor& batch) {
  ad::Tape<float> tape;
  NllGraph<float> graph = record_nll(tape, params, batch);
  LossAndGradient out;
  out.loss = graph.loss.value().item();
  out.gradients = tape.gradient(graph.loss, graph.params);
  return out;
}

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 2) throw Error(ErrorKind::kInvalidArgument, "batch_size must be at least 2");
  if (steps < 0) throw Error(ErrorKind::kInvalidArgument, "steps must be non-negative");
  if (!(learning_rate >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "learning_rate must be non-negative");
  if (warmup_steps < 0) throw Error(ErrorKind::kInvalidArgument, "warmup_steps must be non-negative");
  if (checkpoint_every < 0) throw Error(ErrorKind::kInvalidArgument, "checkpoint_every must be non-negative");
  if (!(grad_clip > 0.0)) throw Error(ErrorKind::kInvalidArgument, "grad_clip must be positive");
}

AdamState AdamState::zeros_like(const FlowParams& params) {
  AdamState s;
  for (const Tensor* t : params.tensors()) {
    s.m.emplace_back(t->shape());
    s.v.emplace_back(t->shape());
  }
  return s;
}

StepMetrics train_step(FlowParams& params, AdamState& optimizer, const Tensor& batch, const TrainConfig& config,
                       uint64_t step) {
  StepMetrics metrics;
  metrics.step = step;
  LossAndGradient lg = nll_gradient(params, batch);
  metrics.nll = lg.loss;
  metrics.bits_per_dim = bits_per_dim(lg.loss, config.model.dim());

  double sq = 0.0;
  for (const Tensor& g : lg.gradients)
    for (float v : g.data()) sq += static_cast<double>(v) * v;
  metrics.grad_norm = std::sqrt(sq);
  const double warm = config.warmup_steps > 0
                          ? std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(config.warmup_steps))
                          : 1.0;
  metrics.learning_rate = config.learning_rate * warm;
  if (!std::isfinite(metrics.grad_norm) || !std::isfinite(lg.loss)) {
    metrics.skipped = true;
    return metrics;
  }
  const double clip = metrics.grad_norm > config.grad_clip ? config.grad_clip / metrics.grad_norm : 1.0;

  std::vector<Tensor*> tensors = params.tensors();
  if (optimizer.m.size() != tensors.size() || optimizer.v.size() != tensors.size()) {
    throw Error(ErrorKind::kInvalidArgument, "optimizer state does not match the model");
  }
  const FlowParams before = params;
  const AdamState optimizer_before = optimizer;
  const double t = static_cast<double>(step + 1);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (size_t k = 0; k < tensors.size(); ++k) {
    Tensor& p = *tensors[k];
    Tensor& m = optimizer.m[k];
    Tensor& v = optimizer.v[k];
    const Tensor& g = lg.gradients[k];
    for (int64_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]) * clip;
      const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = (mi / correction1) / (std::sqrt(vi / correction2) + config.adam_eps);
      p[i] = static_cast<float>(p[i] - metrics.learning_rate * update);
    }
  }
  try {
    check_invertible(params);
  } catch (const Error&) {
    params = before;
    optimizer = optimizer_before;
    metrics.skipped = true;
  }
  return metrics;
}

Tensor training_batch(const PatchDataset& dataset, const TrainConfig& config, uint64_t step) {
  Rng rng = Rng(config.seed, kBatchStream).derive(step);
  return make_batch(sample_patches(dataset, config.batch_size, rng), rng);
}

Checkpoint initialize_training(const TrainConfig& config, const PatchDataset& dataset) {
  config.validate();
  if (dataset.patch_size() != config.model.patch_size) {
    throw Error(ErrorKind::kInvalidArgument, "dataset patch size " + std::to_string(dataset.patch_size()) +
                                                 " differs from model patch size " +
                                                 std::to_string(config.model.patch_size));
  }
  Checkpoint ckpt;
  Rng param_rng(config.seed, kParamStream);
  ckpt.params = init_flow(config.model, param_rng);
  Rng init_rng(config.seed, kInitBatchStream);
  actnorm_initialize(make_batch(sample_patches(dataset, config.batch_size, init_rng), init_rng), ckpt.params);
  ckpt.optimizer = AdamState::zeros_like(ckpt.params);
  ckpt.step = 0;
  ckpt.seed = config.seed;
  return ckpt;
}

Checkpoint train(const TrainConfig& config, const PatchDataset& dataset, Checkpoint state, const TrainHooks& hooks) {
  config.validate();
  if (!(state.params.config == config.model)) {
    throw Error(ErrorKind::kInvalidArgument, "checkpoint model configuration differs from the training configuration");
  }
  if (state.seed != config.seed) {
    throw Error(ErrorKind::kInvalidArgument, "checkpoint seed " + std::to_string(state.seed) +
                                                 " differs from the configured seed " + std::to_string(config.seed));
  }
  int64_t skipped = 0;
  while (static_cast<int64_t>(state.step) < config.steps) {
    const Tensor batch = training_batch(dataset, config, state.step);
    const StepMetrics m = train_step(state.params, state.optimizer, batch, config, state.step);
    if (m.skipped) {
      ++skipped;
      warn("step " + std::to_string(m.step) + " skipped (" + std::to_string(skipped) + " so far)");
    }
    ++state.step;
    if (hooks.on_step) hooks.on_step(m);
    if (config.checkpoint_every > 0 && !hooks.checkpoint_path.empty() &&
        state.step % static_cast<uint64_t>(config.checkpoint_every) == 0) {
      save_checkpoint(state, hooks.checkpoint_path);
    }
  }
  return state;
}

Checkpoint train(const TrainConfig& config, const PatchDataset& dataset, const TrainHooks& hooks) {
  return train(config, dataset, initialize_training(config, dataset), hooks);
}

template double nll_loss(const BasicTensor<float>&, const FlowParams&);
template double nll_loss(const BasicTensor<double>&, const FlowParams&);
template NllGraph<float> record_nll(ad::Tape<float>&, const FlowParams&, const BasicTensor<float>&);
template NllGraph<double> record_nll(ad::Tape<double>&, const FlowParams&, const BasicTensor<double>&);

}  // namespace patchlikely
