#pragma once

#include <functional>
#include <vector>

#include "patchlikely/tensor.hpp"

namespace patchlikely {

template <typename T>
using ScalarFunction = std::function<double(const std::vector<BasicTensor<T>>&)>;

// Central differences, one coordinate at a time. The step actually taken is
// (p + eps) - (p - eps) after rounding to T, which keeps the estimate honest
// for float parameters.
template <typename T>
std::vector<BasicTensor<T>> finite_diff_gradient(const ScalarFunction<T>& f, std::vector<BasicTensor<T>> params,
                                                 double eps);

// ||a - b||_2 / ||b||_2, with 0 when both are zero.
template <typename T>
double relative_error(const BasicTensor<T>& a, const BasicTensor<T>& b);

}  // namespace patchlikely
