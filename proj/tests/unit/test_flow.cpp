#include <cmath>

#include "patchlikely/error.hpp"
#include "patchlikely/flow.hpp"
#include "patchlikely/gradcheck.hpp"
#include "patchlikely/kernels.hpp"
#include "patchlikely/patch.hpp"
#include "test_util.hpp"

using namespace patchlikely;
using testutil::random_tensor;

namespace {

const double kLn2 = std::log(2.0);
const double kHalfDLog2Pi = 384.0 * std::log(2.0 * M_PI);  // D = 768

FlowConfig tiny(int patch = 4, int k = 2, int hidden = 4) { return FlowConfig{patch, 3, k, hidden}; }

TensorD random_patch_batch(Rng& rng, int n, int patch) { return random_tensor(rng, {n, patch, patch, 3}, -0.5, 0.5); }

}  // namespace

TEST(FlowConfig, Validation) {
  EXPECT_NO_THROW(FlowConfig{}.validate());
  EXPECT_THROW((FlowConfig{15, 3, 2, 4}.validate()), Error);
  EXPECT_THROW((FlowConfig{16, 3, 0, 4}.validate()), Error);
  EXPECT_EQ(FlowConfig{}.dim(), 768);
}

TEST(Squeeze, ShapeArithmetic) {
  TensorD x(Shape{16, 16, 3});
  EXPECT_EQ(squeeze(x, Direction::kForward).shape(), (Shape{8, 8, 12}));
}

TEST(Squeeze, ConstantStaysConstant) {
  TensorD x(Shape{2, 4, 4, 3}, 0.37);
  const TensorD y = squeeze(x, Direction::kForward);
  for (double v : y.data()) EXPECT_EQ(v, 0.37);
}

TEST(Squeeze, RoundTripAndOddExtent) {
  Rng rng(1);
  TensorD x = random_tensor(rng, {3, 6, 4, 3});
  EXPECT_EQ(squeeze(squeeze(x, Direction::kForward), Direction::kInverse), x);
  EXPECT_THROW(squeeze(TensorD(Shape{5, 4, 3}), Direction::kForward), Error);
}

TEST(Squeeze, ChannelLayout) {
  // Output channel (dy * 2 + dx) * C + c holds input (2y + dy, 2x + dx, c).
  TensorD x(Shape{2, 2, 3});
  for (int i = 0; i < 12; ++i) x[i] = i;
  TensorD y = squeeze(x, Direction::kForward);
  for (int dy = 0; dy < 2; ++dy)
    for (int dx = 0; dx < 2; ++dx)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(y[(dy * 2 + dx) * 3 + c], x[(dy * 2 + dx) * 3 + c]);
}

TEST(ActNorm, IdentityAndScaleTwo) {
  Rng rng(2);
  TensorD x = random_tensor(rng, {8, 8, 12});
  auto id = actnorm_apply(x, ActNormParams::identity(12), Direction::kForward);
  EXPECT_EQ(id.y, x);
  EXPECT_EQ(id.logdet[0], 0.0);

  ActNormParams two = ActNormParams::from_scale(Tensor(Shape{12}, 2.0f), Tensor(Shape{12}, 0.0f));
  auto out = actnorm_apply(x, two, Direction::kForward);
  EXPECT_NEAR(out.logdet[0], 768.0 * kLn2, 1e-3);
  // The scale is stored as a float logarithm, so 2 is reproduced to float precision.
  for (int64_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out.y[i], 2.0 * x[i], 1e-6);
  auto back = actnorm_apply(out.y, two, Direction::kInverse);
  EXPECT_LT(max_abs_diff(back.y, x), 1e-12);
  EXPECT_NEAR(back.logdet[0], -768.0 * kLn2, 1e-3);
}

TEST(ActNorm, NonPositiveScaleRejected) {
  Tensor s(Shape{3}, 1.0f);
  s[1] = 0.0f;
  EXPECT_THROW(ActNormParams::from_scale(s, Tensor(Shape{3}, 0.0f)), Error);
  s[1] = -2.0f;
  EXPECT_THROW(ActNormParams::from_scale(s, Tensor(Shape{3}, 0.0f)), Error);
}

TEST(InvConv, IdentityAndTwoI) {
  Rng rng(3);
  TensorD x = random_tensor(rng, {8, 8, 12});
  Tensor eye(Shape{12, 12}, 0.0f);
  for (int i = 0; i < 12; ++i) eye[i * 12 + i] = 1.0f;
  auto id = invconv_apply(x, InvConvParams{eye}, Direction::kForward);
  EXPECT_EQ(id.y, x);
  EXPECT_EQ(id.logdet[0], 0.0);
  Tensor two = eye;
  for (float& v : two.data()) v *= 2.0f;
  auto out = invconv_apply(x, InvConvParams{two}, Direction::kForward);
  EXPECT_NEAR(out.logdet[0], 64.0 * 12.0 * kLn2, 1e-6);
}

TEST(InvConv, RandomOrthogonal) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed, 4);
    FlowParams p = init_flow(tiny(16, 1, 8), rng);
    TensorD x = random_tensor(rng, {2, 8, 8, 12});
    auto out = invconv_apply(x, p.steps[0].invconv, Direction::kForward);
    EXPECT_NEAR(out.logdet[0], 0.0, 1e-4);
    auto back = invconv_apply(out.y, p.steps[0].invconv, Direction::kInverse);
    EXPECT_LT(max_abs_diff(back.y, x), 1e-5);
  }
}

TEST(InvConv, NearSingularRejected) {
  Tensor w(Shape{4, 4}, 0.0f);
  w[0] = 1.0f;
  w[5] = 1.0f;
  w[10] = 1.0f;
  w[15] = 1e-14f;
  TensorD x(Shape{2, 2, 4}, 0.1);
  EXPECT_THROW(invconv_apply(x, InvConvParams{w}, Direction::kForward), Error);
  EXPECT_THROW(invconv_apply(x, InvConvParams{w}, Direction::kInverse), Error);
}

TEST(Coupling, ZeroFinalLayerScalesBySigmoidTwo) {
  Rng rng(5);
  FlowParams p = init_flow(tiny(16, 1, 8), rng);
  TensorD x = random_tensor(rng, {8, 8, 12});
  auto out = coupling_apply(x, p.steps[0].coupling, Direction::kForward);
  const double s = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(s, 0.8808, 1e-4);
  for (int64_t i = 0; i < 64; ++i)
    for (int c = 0; c < 12; ++c) {
      const double expect = c < 6 ? x[i * 12 + c] : s * x[i * 12 + c];
      EXPECT_NEAR(out.y[i * 12 + c], expect, 1e-12);
    }
  EXPECT_NEAR(out.logdet[0], 64.0 * 6.0 * std::log(s), 1e-9);
  auto back = coupling_apply(out.y, p.steps[0].coupling, Direction::kInverse);
  EXPECT_LT(max_abs_diff(back.y, x), 1e-12);
}

TEST(Coupling, OddChannelsRejected) {
  Rng rng(6);
  FlowParams p = init_flow(tiny(16, 1, 8), rng);
  EXPECT_THROW(coupling_apply(TensorD(Shape{4, 4, 5}), p.steps[0].coupling, Direction::kForward), Error);
}

TEST(Flow, IdentityFlowIsSqueeze) {
  FlowParams id = identity_flow(FlowConfig{16, 3, 3, 8});
  Rng rng(7);
  TensorD x = random_patch_batch(rng, 3, 16);
  auto out = flow_forward(x, id);
  EXPECT_EQ(out.y, squeeze(x, Direction::kForward));
  for (double ld : out.logdet) EXPECT_EQ(ld, 0.0);
  EXPECT_EQ(flow_inverse(out.y, id), x);
}

TEST(Flow, LogLikelihoodClosedForms) {
  FlowParams id = identity_flow(FlowConfig{16, 3, 2, 8});
  TensorD zero(Shape{16, 16, 3}, 0.0);
  EXPECT_NEAR(log_likelihood(zero, id)[0], -kHalfDLog2Pi, 1e-6);
  EXPECT_NEAR(log_likelihood(zero, id)[0], -705.75, 0.01);
  TensorD ones(Shape{16, 16, 3}, 1.0);  // ||z||^2 = D
  EXPECT_NEAR(log_likelihood(ones, id)[0], -kHalfDLog2Pi - 384.0, 1e-6);
  EXPECT_NEAR(log_likelihood(ones, id)[0], -1089.75, 0.01);
}

TEST(Flow, ShapeMismatchRejected) {
  FlowParams p = identity_flow(FlowConfig{16, 3, 1, 8});
  EXPECT_THROW(flow_forward(TensorD(Shape{8, 8, 3}), p), Error);
  EXPECT_THROW(flow_inverse(TensorD(Shape{8, 8, 6}), p), Error);
}

TEST(Flow, RandomFlowsInvert) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed, 8);
    FlowParams p = random_flow(FlowConfig{16, 3, 4, 8}, rng);
    TensorD x = random_patch_batch(rng, 4, 16);
    EXPECT_LT(max_abs_diff(flow_inverse(flow_forward(x, p).y, p), x), 1e-10);
    Tensor xf = x.cast<float>();
    EXPECT_LT(max_abs_diff(flow_inverse(flow_forward(xf, p).y, p), xf), 1e-5);
  }
}

TEST(Flow, LogdetMatchesJacobianOracle) {
  for (int draw = 0; draw < 20; ++draw) {
    LogdetCheck c = check_logdet(FlowConfig{2, 3, 2, 4}, 0, draw);
    EXPECT_LT(c.rel_error, 1e-3) << "draw " << draw << " analytic " << c.analytic << " numeric " << c.numeric;
  }
  LogdetCheck c = check_logdet(FlowConfig{4, 3, 2, 4}, 1, 0);
  EXPECT_LT(c.rel_error, 1e-3);
}

TEST(Flow, BatchedAndChunkedScoringAgree) {
  Rng rng(9);
  FlowParams p = random_flow(FlowConfig{4, 3, 2, 4}, rng);
  Tensor x = random_patch_batch(rng, 300, 4).cast<float>();
  std::vector<double> all = log_likelihood(x, p);
  ASSERT_EQ(all.size(), 300u);
  for (int64_t n : {0, 127, 128, 299}) {
    std::vector<double> one = log_likelihood(unstack(x, n), p);
    EXPECT_EQ(one[0], all[static_cast<size_t>(n)]);
  }
}

// p integrates to one: E_q[p(x) / q(x)] with a broad Gaussian proposal q.
TEST(Flow, DensityIntegratesToOne) {
  Rng rng(10, 3);
  FlowParams p = init_flow(FlowConfig{2, 3, 2, 4}, rng);
  for (FlowStep& s : p.steps) {
    for (float& v : s.actnorm.log_scale.data()) v = static_cast<float>(0.2 * rng.normal());
    for (float& v : s.coupling.w3.data()) v = static_cast<float>(0.05 * rng.normal());
  }
  const int n = 200000;
  const double sigma = 1.6;
  TensorD x(Shape{n, 2, 2, 3});
  double log_q_const = -6.0 * std::log(2.0 * M_PI * sigma * sigma);
  std::vector<double> log_q(n);
  for (int i = 0; i < n; ++i) {
    double sq = 0;
    for (int d = 0; d < 12; ++d) {
      const double v = sigma * rng.normal();
      x[i * 12 + d] = v;
      sq += v * v;
    }
    log_q[static_cast<size_t>(i)] = log_q_const - sq / (2 * sigma * sigma);
  }
  std::vector<double> ll = log_likelihood(x, p);
  double acc = 0;
  for (int i = 0; i < n; ++i) acc += std::exp(ll[static_cast<size_t>(i)] - log_q[static_cast<size_t>(i)]);
  EXPECT_NEAR(acc / n, 1.0, 0.05);
}

TEST(BitsPerDim, UnitConversion) {
  EXPECT_NEAR(bits_per_dim(768.0 * kLn2, 768, 1), 1.0, 1e-12);
  EXPECT_NEAR(bits_per_dim(0.0, 768), 8.0, 1e-12);
  EXPECT_NEAR(bits_per_dim(0.0, 768, 1), 0.0, 1e-12);
}

TEST(Sample, TemperatureZeroIsDeterministic) {
  Rng rng(11);
  FlowParams p = random_flow(FlowConfig{4, 3, 2, 4}, rng);
  Rng a(1), b(2);
  Tensor s0 = sample_patch(p, a, 0.0f);
  Tensor expect = clamp_to_input_range(flow_inverse(Tensor(p.config.latent_shape(), 0.0f), p));
  EXPECT_EQ(s0, expect);
  EXPECT_EQ(sample_patch(p, b, 0.0f), s0);
  Rng c(5), d(5);
  EXPECT_EQ(sample_patch(p, c, 0.7f), sample_patch(p, d, 0.7f));
  Rng e(6);
  Tensor s = sample_patch(p, e, 0.7f);
  for (float v : s.data()) {
    EXPECT_GE(v, kInputMin);
    EXPECT_LT(v, kInputMax);
  }
  EXPECT_THROW(sample_patch(p, e, -1.0f), Error);
}

TEST(ActNormInit, StandardizedBatchIsFixedPoint) {
  FlowParams p = identity_flow(FlowConfig{2, 3, 1, 4});
  Tensor batch(Shape{2, 2, 2, 3});
  for (int i = 0; i < 12; ++i) {
    const float v = (i % 3 == 0) ? 1.0f : -1.0f;
    batch[i] = v;
    batch[12 + i] = -v;
  }
  actnorm_initialize(batch, p);
  for (float v : p.steps[0].actnorm.log_scale.data()) EXPECT_EQ(v, 0.0f);
  for (float v : p.steps[0].actnorm.bias.data()) EXPECT_EQ(v, 0.0f);
}

TEST(ActNormInit, NormalizesFirstStep) {
  Rng rng(12);
  FlowParams p = init_flow(FlowConfig{4, 3, 3, 4}, rng);
  Tensor batch = random_patch_batch(rng, 64, 4).cast<float>();
  for (float& v : batch.data()) v = 0.3f * v + 0.1f;
  actnorm_initialize(batch, p);
  Tensor h = actnorm_apply(squeeze(batch, Direction::kForward), p.steps[0].actnorm, Direction::kForward).y;
  const int64_t c = 12, rows = h.size() / c;
  for (int64_t ch = 0; ch < c; ++ch) {
    double m = 0, v = 0;
    for (int64_t r = 0; r < rows; ++r) m += h[r * c + ch];
    m /= rows;
    for (int64_t r = 0; r < rows; ++r) v += (h[r * c + ch] - m) * (h[r * c + ch] - m);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(v / rows, 1.0, 1e-4);
  }
}

TEST(ActNormInit, ConstantBatchClampsWithWarning) {
  FlowParams p = identity_flow(FlowConfig{4, 3, 2, 4});
  Tensor batch(Shape{4, 4, 4, 3}, 0.25f);
  const int64_t before = warning_count();
  set_warnings_enabled(false);
  actnorm_initialize(batch, p);
  set_warnings_enabled(true);
  EXPECT_GT(warning_count(), before);
  for (const FlowStep& s : p.steps) {
    for (float v : s.actnorm.log_scale.data()) EXPECT_EQ(v, 0.0f);
    for (float v : s.actnorm.bias.data()) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_THROW(actnorm_initialize(Tensor(Shape{1, 4, 4, 3}), p), Error);
}
