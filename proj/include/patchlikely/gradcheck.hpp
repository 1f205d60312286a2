#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchlikely/flow.hpp"

namespace patchlikely {

// A flow with every parameter moved away from its initial value, so that
// each layer contributes a nonzero, non-linear term. Used by the oracles.
FlowParams random_flow(const FlowConfig& config, Rng& rng);

// "step3.coupling.w2" style names in FlowParams::tensors() order.
std::vector<std::string> parameter_names(const FlowConfig& config);

// log|det J| of flow_forward at x (a single P x P x C patch), with J built by
// central differences in double precision.
double fd_jacobian_logdet(const FlowParams& params, const TensorD& x, double eps = 1e-5);

struct LogdetCheck {
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

// Random parameter draw `draw` of the given seed on a random patch.
LogdetCheck check_logdet(const FlowConfig& config, uint64_t seed, int draw);

struct GradcheckOptions {
  uint64_t seed = 0;
  FlowConfig model{4, 3, 2, 4};
  int batch = 2;
  double eps = 1e-3;
  double tolerance = 1e-4;
  // Index (FlowParams::tensors() order) of an analytic gradient to corrupt;
  // negative disables fault injection.
  int inject = -1;
};

struct GradcheckEntry {
  std::string name;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Tape gradients of the batch NLL against central finite differences of
// the plain forward evaluated in double precision.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace patchlikely
