#include "patchlikely/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "patchlikely/finite_diff.hpp"
#include "patchlikely/kernels.hpp"
#include "patchlikely/training.hpp"

namespace patchlikely {

namespace {

void add_noise(Tensor& t, Rng& rng, double mean, double sd) {
  for (float& v : t.data()) v = static_cast<float>(v + mean + sd * rng.normal());
}

}  // namespace

FlowParams random_flow(const FlowConfig& config, Rng& rng) {
  FlowParams p = init_flow(config, rng);
  for (FlowStep& s : p.steps) {
    add_noise(s.actnorm.log_scale, rng, 0.3, 0.3);
    add_noise(s.actnorm.bias, rng, 0.0, 0.3);
    // Rescale the orthogonal columns so log|det W| is nonzero too.
    const int64_t c = s.invconv.weight.dim(0);
    for (int64_t j = 0; j < c; ++j) {
      const float f = static_cast<float>(std::exp(0.2 * rng.normal()));
      for (int64_t i = 0; i < c; ++i) s.invconv.weight[i * c + j] *= f;
    }
    add_noise(s.coupling.w1, rng, 0.0, 0.3);
    add_noise(s.coupling.w2, rng, 0.0, 0.3);
    add_noise(s.coupling.w3, rng, 0.0, 0.1);
    add_noise(s.coupling.b1, rng, 0.0, 0.1);
    add_noise(s.coupling.b2, rng, 0.0, 0.1);
    add_noise(s.coupling.b3, rng, 0.0, 0.1);
  }
  return p;
}

std::vector<std::string> parameter_names(const FlowConfig& config) {
  static const char* kNames[kTensorsPerStep] = {"actnorm.log_scale", "actnorm.bias", "invconv.weight",
                                                "coupling.w1",       "coupling.b1",  "coupling.w2",
                                                "coupling.b2",       "coupling.w3",  "coupling.b3"};
  std::vector<std::string> out;
  for (int k = 0; k < config.steps; ++k)
    for (const char* n : kNames) out.push_back("step" + std::to_string(k) + "." + n);
  return out;
}

double fd_jacobian_logdet(const FlowParams& params, const TensorD& x, double eps) {
  const int64_t d = x.size();
  TensorD jac(Shape{d, d});
  TensorD xp = x;
  for (int64_t j = 0; j < d; ++j) {
    const double orig = xp[j];
    xp[j] = orig + eps;
    const TensorD hi = flow_forward(xp, params).y;
    xp[j] = orig - eps;
    const TensorD lo = flow_forward(xp, params).y;
    xp[j] = orig;
    for (int64_t i = 0; i < d; ++i) jac[i * d + j] = (hi[i] - lo[i]) / (2.0 * eps);
  }
  return kernels::log_abs_det(jac);
}

LogdetCheck check_logdet(const FlowConfig& config, uint64_t seed, int draw) {
  Rng rng = Rng(seed, 11).derive(static_cast<uint64_t>(draw));
  const FlowParams params = random_flow(config, rng);
  TensorD x(config.patch_shape());
  for (double& v : x.data()) v = rng.uniform() - 0.5;
  LogdetCheck c;
  c.analytic = flow_forward(x, params).logdet.at(0);
  c.numeric = fd_jacobian_logdet(params, x);
  c.rel_error = std::abs(c.analytic - c.numeric) / std::max(std::abs(c.numeric), 1e-300);
  return c;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  options.model.validate();
  Rng rng(options.seed, 12);
  FlowParams params = random_flow(options.model, rng);
  Shape bshape = options.model.patch_shape();
  bshape.insert(bshape.begin(), options.batch);
  TensorD batch(bshape);
  for (double& v : batch.data()) v = rng.uniform() - 0.5;

  ad::Tape<double> tape;
  NllGraph<double> graph = record_nll(tape, params, batch);
  std::vector<TensorD> analytic = tape.gradient(graph.loss, graph.params);
  if (options.inject >= 0) {
    if (static_cast<size_t>(options.inject) >= analytic.size()) {
      throw Error(ErrorKind::kInvalidArgument, "fault injection index " + std::to_string(options.inject) +
                                                   " exceeds the " + std::to_string(analytic.size()) +
                                                   " parameter tensors");
    }
    TensorD& g = analytic[static_cast<size_t>(options.inject)];
    double norm = 0.0;
    for (double v : g.data()) norm += v * v;
    g[0] += 1e-2 * (std::sqrt(norm) + 1.0);
  }

  std::vector<Tensor> leaves;
  for (const Tensor* t : params.tensors()) leaves.push_back(*t);
  const ScalarFunction<float> f = [&](const std::vector<Tensor>& values) {
    FlowParams q = params;
    std::vector<Tensor*> dst = q.tensors();
    for (size_t i = 0; i < dst.size(); ++i) *dst[i] = values[i];
    return nll_loss(batch, q);
  };
  const std::vector<Tensor> numeric = finite_diff_gradient(f, leaves, options.eps);

  GradcheckReport report;
  const std::vector<std::string> names = parameter_names(options.model);
  for (size_t i = 0; i < numeric.size(); ++i) {
    const double err = relative_error(analytic[i], numeric[i].cast<double>());
    report.entries.push_back({names[i], err});
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace patchlikely
