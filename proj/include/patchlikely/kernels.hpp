#pragma once

#include <span>

#include "patchlikely/tensor.hpp"

namespace patchlikely::kernels {

// 2-D cross-correlation with stride 1 and "same" zero padding.
// x: N x H x W x Cin, w: kh x kw x Cin x Cout (kh, kw odd), b: Cout.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

template <typename T>
struct Conv2dGrads {
  BasicTensor<T> dx;  // empty unless requested
  BasicTensor<T> dw;
  BasicTensor<T> db;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy,
                               bool need_dx);

// Throws a kShape error unless x, w, b form a valid conv2d call.
void check_conv2d_shapes(const Shape& x, const Shape& w, const Shape& b);

// a: M x K times b: K x N (or N x K when transpose_b).
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_a = false,
                      bool transpose_b = false);

// log|det m| via LU with partial pivoting. Accumulated in double.
template <typename T>
double log_abs_det(const BasicTensor<T>& m);

template <typename T>
BasicTensor<T> inverse(const BasicTensor<T>& m);

// Vectorized elementwise tanh, shared by every path that evaluates the
// coupling network.
template <typename T>
void tanh_inplace(std::span<T> values);

}  // namespace patchlikely::kernels
