#include "patchlikely/finite_diff.hpp"

#include <cmath>

namespace patchlikely {

template <typename T>
std::vector<BasicTensor<T>> finite_diff_gradient(const ScalarFunction<T>& f, std::vector<BasicTensor<T>> params,
                                                 double eps) {
  if (!(eps > 0.0)) throw Error(ErrorKind::kInvalidArgument, "finite_diff_gradient: eps must be positive");
  std::vector<BasicTensor<T>> grads;
  grads.reserve(params.size());
  for (auto& p : params) grads.emplace_back(p.shape());
  for (size_t t = 0; t < params.size(); ++t) {
    for (int64_t i = 0; i < params[t].size(); ++i) {
      const T original = params[t][i];
      const T hi = static_cast<T>(original + eps);
      const T lo = static_cast<T>(original - eps);
      params[t][i] = hi;
      const double f_hi = f(params);
      params[t][i] = lo;
      const double f_lo = f(params);
      params[t][i] = original;
      grads[t][i] = static_cast<T>((f_hi - f_lo) / (static_cast<double>(hi) - static_cast<double>(lo)));
    }
  }
  return grads;
}

template <typename T>
double relative_error(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "relative_error");
  double num = 0.0, den = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    num += d * d;
    den += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::sqrt(num);
  return std::sqrt(num / den);
}

template std::vector<BasicTensor<float>> finite_diff_gradient(const ScalarFunction<float>&,
                                                              std::vector<BasicTensor<float>>, double);
template std::vector<BasicTensor<double>> finite_diff_gradient(const ScalarFunction<double>&,
                                                               std::vector<BasicTensor<double>>, double);
template double relative_error(const BasicTensor<float>&, const BasicTensor<float>&);
template double relative_error(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace patchlikely
