#include "patchlikely/flow.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "patchlikely/kernels.hpp"
#include "patchlikely/parallel.hpp"
#include "patchlikely/patch.hpp"

namespace patchlikely {

namespace {

constexpr int64_t kChunk = 128;
constexpr float kCouplingScaleOffset = 2.0f;

template <typename T>
BasicTensor<T> param(const Tensor& t) {
  return t.template cast<T>();
}

// Views H x W x C as a batch of one.
template <typename T>
BasicTensor<T> as_batch(const BasicTensor<T>& x, const char* context) {
  if (x.rank() == 4) return x;
  if (x.rank() == 3) {
    Shape s = x.shape();
    s.insert(s.begin(), 1);
    return x.reshaped(s);
  }
  throw Error(ErrorKind::kShape, std::string(context) + ": expected H x W x C or N x H x W x C, got " +
                                     shape_to_string(x.shape()));
}

template <typename T>
void check_channels(const BasicTensor<T>& x, int64_t channels, const char* context) {
  if (x.dim(-1) != channels) {
    throw Error(ErrorKind::kShape, std::string(context) + ": input " + shape_to_string(x.shape()) + " has " +
                                       std::to_string(x.dim(-1)) + " channels, parameters expect " +
                                       std::to_string(channels));
  }
}

template <typename T>
T stable_sigmoid(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

// log(sigmoid(v)) given s = sigmoid(v) already rounded to T.
template <typename T>
double log_sigmoid(T v, T s) {
  if (s > T(1e-6)) return std::log(static_cast<double>(s));
  return static_cast<double>(v) - std::log1p(std::exp(static_cast<double>(v)));
}

template <typename T>
void tanh_inplace(BasicTensor<T>& t) {
  kernels::tanh_inplace(t.data());
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& x) {
  const int64_t c = x.dim(-1), half = c / 2, rows = x.size() / c;
  Shape s = x.shape();
  s.back() = half;
  BasicTensor<T> a(s), b(s);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t i = 0; i < half; ++i) {
      a[r * half + i] = x[r * c + i];
      b[r * half + i] = x[r * c + half + i];
    }
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
BasicTensor<T> join_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const int64_t half = a.dim(-1), rows = a.size() / half;
  Shape s = a.shape();
  s.back() = half * 2;
  BasicTensor<T> out(s);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t i = 0; i < half; ++i) {
      out[r * 2 * half + i] = a[r * half + i];
      out[r * 2 * half + half + i] = b[r * half + i];
    }
  }
  return out;
}

// Coupling network output: raw log-scales and shifts, each C/2 channels.
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> coupling_net(const BasicTensor<T>& x1, const CouplingParams& p) {
  BasicTensor<T> h = kernels::conv2d(x1, param<T>(p.w1), param<T>(p.b1));
  tanh_inplace(h);
  h = kernels::conv2d(h, param<T>(p.w2), param<T>(p.b2));
  tanh_inplace(h);
  BasicTensor<T> out = kernels::conv2d(h, param<T>(p.w3), param<T>(p.b3));
  return split_channels(out);
}

double checked_log_abs_det(const Tensor& w) {
  const double lad = kernels::log_abs_det(w);
  if (!(lad > std::log(kMinAbsDet))) {
    throw Error(ErrorKind::kNumerical, "1x1 convolution is singular: log|det W| = " + std::to_string(lad));
  }
  return lad;
}

template <typename T>
LayerOutput<T> flow_forward_batch(const BasicTensor<T>& x, const FlowParams& params) {
  LayerOutput<T> state{squeeze(x, Direction::kForward), std::vector<double>(static_cast<size_t>(x.dim(0)), 0.0)};
  for (const FlowStep& step : params.steps) {
    for (int layer = 0; layer < 3; ++layer) {
      LayerOutput<T> out = layer == 0   ? actnorm_apply(state.y, step.actnorm, Direction::kForward)
                           : layer == 1 ? invconv_apply(state.y, step.invconv, Direction::kForward)
                                        : coupling_apply(state.y, step.coupling, Direction::kForward);
      state.y = std::move(out.y);
      for (size_t n = 0; n < state.logdet.size(); ++n) state.logdet[n] += out.logdet[n];
    }
  }
  return state;
}

template <typename T>
BasicTensor<T> flow_inverse_batch(const BasicTensor<T>& z, const FlowParams& params) {
  BasicTensor<T> h = z;
  for (auto it = params.steps.rbegin(); it != params.steps.rend(); ++it) {
    h = coupling_apply(h, it->coupling, Direction::kInverse).y;
    h = invconv_apply(h, it->invconv, Direction::kInverse).y;
    h = actnorm_apply(h, it->actnorm, Direction::kInverse).y;
  }
  return squeeze(h, Direction::kInverse);
}

template <typename T>
BasicTensor<T> slice_batch(const BasicTensor<T>& x, int64_t begin, int64_t end) {
  Shape s = x.shape();
  const int64_t per = x.size() / s[0];
  s[0] = end - begin;
  std::vector<T> d(x.storage().begin() + begin * per, x.storage().begin() + end * per);
  return BasicTensor<T>(s, std::move(d));
}

template <typename T>
void check_patch_shape(const BasicTensor<T>& x, const FlowConfig& cfg, const char* context) {
  if (x.dim(1) != cfg.patch_size || x.dim(2) != cfg.patch_size || x.dim(3) != cfg.channels) {
    throw Error(ErrorKind::kShape, std::string(context) + ": patch batch " + shape_to_string(x.shape()) +
                                       " does not match model patch " + shape_to_string(cfg.patch_shape()));
  }
}

}  // namespace

void FlowConfig::validate() const {
  if (patch_size < 2 || patch_size % 2 != 0) {
    throw Error(ErrorKind::kInvalidArgument, "patch_size must be a positive even number, got " +
                                                 std::to_string(patch_size));
  }
  if (channels < 1) throw Error(ErrorKind::kInvalidArgument, "channels must be positive");
  if (steps < 1) throw Error(ErrorKind::kInvalidArgument, "flow needs K >= 1 steps, got " + std::to_string(steps));
  if (hidden_width < 1) throw Error(ErrorKind::kInvalidArgument, "hidden_width must be positive");
}

ActNormParams ActNormParams::identity(int channels) {
  return {Tensor(Shape{channels}, 0.0f), Tensor(Shape{channels}, 0.0f)};
}

ActNormParams ActNormParams::from_scale(const Tensor& scale, const Tensor& bias) {
  require_same_shape(scale.shape(), bias.shape(), "actnorm parameters");
  Tensor log_scale(scale.shape());
  for (int64_t i = 0; i < scale.size(); ++i) {
    if (!(scale[i] > 0.0f)) {
      throw Error(ErrorKind::kInvalidArgument,
                  "actnorm scale must be strictly positive, channel " + std::to_string(i) + " has " +
                      std::to_string(scale[i]));
    }
    log_scale[i] = std::log(scale[i]);
  }
  return {std::move(log_scale), bias};
}

Tensor ActNormParams::scale() const {
  Tensor s(log_scale.shape());
  for (int64_t i = 0; i < s.size(); ++i) s[i] = std::exp(log_scale[i]);
  return s;
}

std::vector<Tensor*> FlowParams::tensors() {
  std::vector<Tensor*> out;
  for (FlowStep& s : steps) {
    out.insert(out.end(), {&s.actnorm.log_scale, &s.actnorm.bias, &s.invconv.weight, &s.coupling.w1, &s.coupling.b1,
                           &s.coupling.w2, &s.coupling.b2, &s.coupling.w3, &s.coupling.b3});
  }
  return out;
}

std::vector<const Tensor*> FlowParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const Tensor* t : const_cast<FlowParams*>(this)->tensors()) out.push_back(t);
  return out;
}

int64_t FlowParams::parameter_count() const {
  int64_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

FlowParams init_flow(const FlowConfig& config, Rng& rng) {
  config.validate();
  const int c = config.latent_channels(), half = c / 2, h = config.hidden_width;
  FlowParams params{config, {}};
  for (int k = 0; k < config.steps; ++k) {
    FlowStep step;
    step.actnorm = ActNormParams::identity(c);

    Tensor g = gaussian_sample(rng, Shape{c, c});
    Eigen::MatrixXd m(c, c);
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = g[i * c + j];
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
    step.invconv.weight = Tensor(Shape{c, c});
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) step.invconv.weight[i * c + j] = static_cast<float>(q(i, j));

    auto small = [&](Shape s) {
      Tensor t = gaussian_sample(rng, s);
      for (float& v : t.data()) v *= 0.05f;
      return t;
    };
    step.coupling.w1 = small({3, 3, half, h});
    step.coupling.b1 = Tensor(Shape{h});
    step.coupling.w2 = small({3, 3, h, h});
    step.coupling.b2 = Tensor(Shape{h});
    step.coupling.w3 = Tensor(Shape{3, 3, h, c});
    step.coupling.b3 = Tensor(Shape{c});
    params.steps.push_back(std::move(step));
  }
  return params;
}

FlowParams identity_flow(const FlowConfig& config) {
  config.validate();
  const int c = config.latent_channels(), half = c / 2, h = config.hidden_width;
  FlowParams params{config, {}};
  for (int k = 0; k < config.steps; ++k) {
    FlowStep step;
    step.actnorm = ActNormParams::identity(c);
    step.invconv.weight = Tensor(Shape{c, c});
    for (int i = 0; i < c; ++i) step.invconv.weight[i * c + i] = 1.0f;
    step.coupling.w1 = Tensor(Shape{3, 3, half, h});
    step.coupling.b1 = Tensor(Shape{h});
    step.coupling.w2 = Tensor(Shape{3, 3, h, h});
    step.coupling.b2 = Tensor(Shape{h});
    step.coupling.w3 = Tensor(Shape{3, 3, h, c});
    step.coupling.b3 = Tensor(Shape{c});
    // sigmoid(40 + 2) rounds to exactly 1 in float and double.
    for (int i = 0; i < half; ++i) step.coupling.b3[i] = 40.0f;
    params.steps.push_back(std::move(step));
  }
  return params;
}

template <typename T>
BasicTensor<T> squeeze(const BasicTensor<T>& x_in, Direction direction) {
  const bool single = x_in.rank() == 3;
  const BasicTensor<T> x = as_batch(x_in, "squeeze");
  const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (direction == Direction::kForward) {
    if (h % 2 != 0 || w % 2 != 0) {
      throw Error(ErrorKind::kShape, "squeeze: spatial extents must be even, got " + shape_to_string(x_in.shape()));
    }
    BasicTensor<T> out(Shape{n, h / 2, w / 2, 4 * c});
    for (int64_t b = 0; b < n; ++b)
      for (int64_t i = 0; i < h / 2; ++i)
        for (int64_t j = 0; j < w / 2; ++j)
          for (int64_t dy = 0; dy < 2; ++dy)
            for (int64_t dx = 0; dx < 2; ++dx)
              for (int64_t ch = 0; ch < c; ++ch)
                out.at(b, i, j, (dy * 2 + dx) * c + ch) = x.at(b, 2 * i + dy, 2 * j + dx, ch);
    return single ? out.reshaped({h / 2, w / 2, 4 * c}) : out;
  }
  if (c % 4 != 0) {
    throw Error(ErrorKind::kShape, "unsqueeze: channel count must be a multiple of 4, got " +
                                       shape_to_string(x_in.shape()));
  }
  const int64_t oc = c / 4;
  BasicTensor<T> out(Shape{n, h * 2, w * 2, oc});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j)
        for (int64_t dy = 0; dy < 2; ++dy)
          for (int64_t dx = 0; dx < 2; ++dx)
            for (int64_t ch = 0; ch < oc; ++ch)
              out.at(b, 2 * i + dy, 2 * j + dx, ch) = x.at(b, i, j, (dy * 2 + dx) * oc + ch);
  return single ? out.reshaped({h * 2, w * 2, oc}) : out;
}

template <typename T>
LayerOutput<T> actnorm_apply(const BasicTensor<T>& x_in, const ActNormParams& p, Direction direction) {
  const bool single = x_in.rank() == 3;
  const BasicTensor<T> x = as_batch(x_in, "actnorm");
  const int64_t c = p.log_scale.size();
  check_channels(x, c, "actnorm");
  require_same_shape(p.bias.shape(), p.log_scale.shape(), "actnorm parameters");
  double log_scale_sum = 0.0;
  std::vector<T> scale(static_cast<size_t>(c)), bias(static_cast<size_t>(c));
  for (int64_t i = 0; i < c; ++i) {
    if (!std::isfinite(p.log_scale[i])) throw Error(ErrorKind::kNumerical, "actnorm scale is not finite");
    log_scale_sum += static_cast<double>(p.log_scale[i]);
    scale[static_cast<size_t>(i)] = std::exp(static_cast<T>(p.log_scale[i]));
    bias[static_cast<size_t>(i)] = static_cast<T>(p.bias[i]);
  }
  const bool fwd = direction == Direction::kForward;
  BasicTensor<T> y(x.shape());
  const int64_t rows = x.size() / c;
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t i = 0; i < c; ++i) {
      const size_t k = static_cast<size_t>(i);
      const T v = x[r * c + i];
      y[r * c + i] = fwd ? scale[k] * (v + bias[k]) : v / scale[k] - bias[k];
    }
  }
  const double ld = static_cast<double>(x.dim(1) * x.dim(2)) * log_scale_sum * (fwd ? 1.0 : -1.0);
  LayerOutput<T> out{single ? y.reshaped(x_in.shape()) : std::move(y),
                     std::vector<double>(static_cast<size_t>(x.dim(0)), ld)};
  return out;
}

template <typename T>
LayerOutput<T> invconv_apply(const BasicTensor<T>& x_in, const InvConvParams& p, Direction direction) {
  const bool single = x_in.rank() == 3;
  const BasicTensor<T> x = as_batch(x_in, "invconv");
  const Tensor& w = p.weight;
  if (w.rank() != 2 || w.dim(0) != w.dim(1)) {
    throw Error(ErrorKind::kShape, "invconv: weight must be square, got " + shape_to_string(w.shape()));
  }
  const int64_t c = w.dim(0);
  check_channels(x, c, "invconv");
  const double lad = checked_log_abs_det(w);
  const bool fwd = direction == Direction::kForward;
  const BasicTensor<T> mixer = fwd ? param<T>(w) : kernels::inverse(w.template cast<double>()).template cast<T>();
  const BasicTensor<T> flat = x.reshaped({x.size() / c, c});
  // Row-vector form: y_pixel^T = x_pixel^T M^T.
  BasicTensor<T> y = kernels::matmul(flat, mixer, false, true).reshaped(x.shape());
  const double ld = static_cast<double>(x.dim(1) * x.dim(2)) * lad * (fwd ? 1.0 : -1.0);
  return {single ? y.reshaped(x_in.shape()) : std::move(y), std::vector<double>(static_cast<size_t>(x.dim(0)), ld)};
}

template <typename T>
LayerOutput<T> coupling_apply(const BasicTensor<T>& x_in, const CouplingParams& p, Direction direction) {
  const bool single = x_in.rank() == 3;
  const BasicTensor<T> x = as_batch(x_in, "coupling");
  const int64_t c = x.dim(-1);
  if (c % 2 != 0) {
    throw Error(ErrorKind::kShape, "coupling: channel count must be even, got " + shape_to_string(x.shape()));
  }
  if (p.w3.rank() != 4 || p.w3.dim(3) != c || p.w1.rank() != 4 || p.w1.dim(2) != c / 2) {
    throw Error(ErrorKind::kShape, "coupling: network shapes " + shape_to_string(p.w1.shape()) + " / " +
                                       shape_to_string(p.w3.shape()) + " do not fit input " +
                                       shape_to_string(x.shape()));
  }
  auto [x1, x2] = split_channels(x);
  auto [raw, shift] = coupling_net(x1, p);
  const int64_t n = x.dim(0), per = x2.size() / n;
  const bool fwd = direction == Direction::kForward;
  BasicTensor<T> y2(x2.shape());
  std::vector<double> logdet(static_cast<size_t>(n), 0.0);
  for (int64_t b = 0; b < n; ++b) {
    double ld = 0.0;
    for (int64_t i = b * per; i < (b + 1) * per; ++i) {
      const T v = raw[i] + static_cast<T>(kCouplingScaleOffset);
      const T s = stable_sigmoid(v);
      ld += log_sigmoid(v, s);
      y2[i] = fwd ? x2[i] * s + shift[i] : (x2[i] - shift[i]) / s;
    }
    logdet[static_cast<size_t>(b)] = fwd ? ld : -ld;
  }
  BasicTensor<T> y = join_channels(x1, y2);
  return {single ? y.reshaped(x_in.shape()) : std::move(y), std::move(logdet)};
}

template <typename T>
LayerOutput<T> flow_forward(const BasicTensor<T>& x_in, const FlowParams& params) {
  const bool single = x_in.rank() == 3;
  const BasicTensor<T> x = as_batch(x_in, "flow_forward");
  check_patch_shape(x, params.config, "flow_forward");
  const int64_t n = x.dim(0);
  const FlowConfig& cfg = params.config;
  const int64_t latent = cfg.dim();
  LayerOutput<T> out{BasicTensor<T>(Shape{n, cfg.latent_size(), cfg.latent_size(), cfg.latent_channels()}),
                     std::vector<double>(static_cast<size_t>(n))};
  parallel_for(n, kChunk, [&](int64_t begin, int64_t end) {
    LayerOutput<T> part = flow_forward_batch(slice_batch(x, begin, end), params);
    std::copy(part.y.storage().begin(), part.y.storage().end(), out.y.storage().begin() + begin * latent);
    std::copy(part.logdet.begin(), part.logdet.end(), out.logdet.begin() + begin);
  });
  if (single) out.y = std::move(out.y).reshaped(cfg.latent_shape());
  return out;
}

template <typename T>
BasicTensor<T> flow_inverse(const BasicTensor<T>& z_in, const FlowParams& params) {
  const bool single = z_in.rank() == 3;
  const BasicTensor<T> z = as_batch(z_in, "flow_inverse");
  const FlowConfig& cfg = params.config;
  if (z.dim(1) != cfg.latent_size() || z.dim(2) != cfg.latent_size() || z.dim(3) != cfg.latent_channels()) {
    throw Error(ErrorKind::kShape, "flow_inverse: latent " + shape_to_string(z.shape()) +
                                       " does not match model latent " + shape_to_string(cfg.latent_shape()));
  }
  const int64_t n = z.dim(0), dim = cfg.dim();
  BasicTensor<T> out(Shape{n, cfg.patch_size, cfg.patch_size, cfg.channels});
  parallel_for(n, kChunk, [&](int64_t begin, int64_t end) {
    BasicTensor<T> part = flow_inverse_batch(slice_batch(z, begin, end), params);
    std::copy(part.storage().begin(), part.storage().end(), out.storage().begin() + begin * dim);
  });
  if (single) return std::move(out).reshaped(cfg.patch_shape());
  return out;
}

template <typename T>
std::vector<double> gaussian_log_density(const BasicTensor<T>& z_in) {
  const BasicTensor<T> z = z_in.rank() == 3 ? as_batch(z_in, "gaussian_log_density") : z_in;
  const int64_t n = z.dim(0), per = z.size() / n;
  const double norm = -0.5 * static_cast<double>(per) * std::log(2.0 * std::numbers::pi);
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t b = 0; b < n; ++b) {
    double sq = 0.0;
    for (int64_t i = b * per; i < (b + 1) * per; ++i) sq += static_cast<double>(z[i]) * static_cast<double>(z[i]);
    out[static_cast<size_t>(b)] = norm - 0.5 * sq;
  }
  return out;
}

template <typename T>
std::vector<double> log_likelihood(const BasicTensor<T>& x, const FlowParams& params) {
  LayerOutput<T> fw = flow_forward(x, params);
  std::vector<double> out = gaussian_log_density(fw.y.rank() == 3 ? as_batch(fw.y, "log_likelihood") : fw.y);
  for (size_t i = 0; i < out.size(); ++i) out[i] += fw.logdet[i];
  return out;
}

double bits_per_dim(double nll_nats, int64_t dim, int levels) {
  if (dim <= 0) throw Error(ErrorKind::kInvalidArgument, "bits_per_dim: dimension must be positive");
  if (levels < 1) throw Error(ErrorKind::kInvalidArgument, "bits_per_dim: levels must be positive");
  return nll_nats / (static_cast<double>(dim) * std::numbers::ln2) + std::log2(static_cast<double>(levels));
}

Tensor sample_patch(const FlowParams& params, Rng& rng, float temperature) {
  if (!(temperature >= 0.0f)) {
    throw Error(ErrorKind::kInvalidArgument, "sample_patch: temperature must be non-negative");
  }
  Tensor z = gaussian_sample(rng, params.config.latent_shape());
  for (float& v : z.data()) v *= temperature;
  return clamp_to_input_range(flow_inverse(z, params));
}

void actnorm_initialize(const Tensor& batch_in, FlowParams& params) {
  const Tensor batch = as_batch(batch_in, "actnorm_initialize");
  check_patch_shape(batch, params.config, "actnorm_initialize");
  if (batch.dim(0) < 2) {
    throw Error(ErrorKind::kInvalidArgument, "actnorm_initialize needs a batch of at least 2 patches, got " +
                                                 std::to_string(batch.dim(0)));
  }
  Tensor h = squeeze(batch, Direction::kForward);
  const int64_t c = h.dim(-1), rows = h.size() / c;
  for (size_t k = 0; k < params.steps.size(); ++k) {
    FlowStep& step = params.steps[k];
    std::vector<double> mean(static_cast<size_t>(c), 0.0), var(static_cast<size_t>(c), 0.0);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t i = 0; i < c; ++i) mean[static_cast<size_t>(i)] += h[r * c + i];
    for (double& m : mean) m /= static_cast<double>(rows);
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t i = 0; i < c; ++i) {
        const double d = h[r * c + i] - mean[static_cast<size_t>(i)];
        var[static_cast<size_t>(i)] += d * d;
      }
    }
    for (int64_t i = 0; i < c; ++i) {
      const double v = var[static_cast<size_t>(i)] / static_cast<double>(rows);
      step.actnorm.bias[i] = static_cast<float>(-mean[static_cast<size_t>(i)]);
      if (v < 1e-12) {
        warn("actnorm_initialize: step " + std::to_string(k) + " channel " + std::to_string(i) +
             " has zero variance; scale clamped to 1");
        step.actnorm.log_scale[i] = 0.0f;
      } else {
        step.actnorm.log_scale[i] = static_cast<float>(-0.5 * std::log(v));
      }
    }
    h = actnorm_apply(h, step.actnorm, Direction::kForward).y;
    h = invconv_apply(h, step.invconv, Direction::kForward).y;
    h = coupling_apply(h, step.coupling, Direction::kForward).y;
  }
}

void check_invertible(const FlowParams& params) {
  for (const FlowStep& step : params.steps) checked_log_abs_det(step.invconv.weight);
}

#define PATCHLIKELY_INSTANTIATE_FLOW(T)                                                              \
  template BasicTensor<T> squeeze(const BasicTensor<T>&, Direction);                                 \
  template LayerOutput<T> actnorm_apply(const BasicTensor<T>&, const ActNormParams&, Direction);     \
  template LayerOutput<T> invconv_apply(const BasicTensor<T>&, const InvConvParams&, Direction);     \
  template LayerOutput<T> coupling_apply(const BasicTensor<T>&, const CouplingParams&, Direction);   \
  template LayerOutput<T> flow_forward(const BasicTensor<T>&, const FlowParams&);                    \
  template BasicTensor<T> flow_inverse(const BasicTensor<T>&, const FlowParams&);                    \
  template std::vector<double> gaussian_log_density(const BasicTensor<T>&);                          \
  template std::vector<double> log_likelihood(const BasicTensor<T>&, const FlowParams&);

PATCHLIKELY_INSTANTIATE_FLOW(float)
PATCHLIKELY_INSTANTIATE_FLOW(double)

#undef PATCHLIKELY_INSTANTIATE_FLOW

}  // namespace patchlikely
