#include "patchlikely/kernels.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace patchlikely::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int64_t n, h, w, cin, kh, kw, cout;
  int64_t rows() const { return n * h * w; }
  int64_t cols() const { return kh * kw * cin; }
};

ConvGeometry geometry(const Shape& x, const Shape& w) {
  return {x[0], x[1], x[2], x[3], w[0], w[1], w[3]};
}

// Unfolds every output position's receptive field into one row.
template <typename T>
RowMat<T> im2col(const BasicTensor<T>& x, const ConvGeometry& g) {
  RowMat<T> col = RowMat<T>::Zero(g.rows(), g.cols());
  const int64_t py = g.kh / 2, px = g.kw / 2;
  const T* xd = x.ptr();
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t y = 0; y < g.h; ++y) {
      for (int64_t xx = 0; xx < g.w; ++xx) {
        T* row = col.data() + ((n * g.h + y) * g.w + xx) * g.cols();
        for (int64_t ky = 0; ky < g.kh; ++ky) {
          const int64_t sy = y + ky - py;
          if (sy < 0 || sy >= g.h) continue;
          for (int64_t kx = 0; kx < g.kw; ++kx) {
            const int64_t sx = xx + kx - px;
            if (sx < 0 || sx >= g.w) continue;
            const T* src = xd + ((n * g.h + sy) * g.w + sx) * g.cin;
            T* dst = row + (ky * g.kw + kx) * g.cin;
            for (int64_t c = 0; c < g.cin; ++c) dst[c] = src[c];
          }
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: scatters row gradients back onto the input grid.
template <typename T>
void col2im(const RowMat<T>& dcol, const ConvGeometry& g, BasicTensor<T>& dx) {
  const int64_t py = g.kh / 2, px = g.kw / 2;
  T* dxd = dx.ptr();
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t y = 0; y < g.h; ++y) {
      for (int64_t xx = 0; xx < g.w; ++xx) {
        const T* row = dcol.data() + ((n * g.h + y) * g.w + xx) * g.cols();
        for (int64_t ky = 0; ky < g.kh; ++ky) {
          const int64_t sy = y + ky - py;
          if (sy < 0 || sy >= g.h) continue;
          for (int64_t kx = 0; kx < g.kw; ++kx) {
            const int64_t sx = xx + kx - px;
            if (sx < 0 || sx >= g.w) continue;
            T* dst = dxd + ((n * g.h + sy) * g.w + sx) * g.cin;
            const T* src = row + (ky * g.kw + kx) * g.cin;
            for (int64_t c = 0; c < g.cin; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace

void check_conv2d_shapes(const Shape& x, const Shape& w, const Shape& b) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::kShape, "conv2d: " + why + " (input " + shape_to_string(x) + ", kernel " +
                                       shape_to_string(w) + ", bias " + shape_to_string(b) + ")");
  };
  if (x.size() != 4) fail("input must be N x H x W x C");
  if (w.size() != 4) fail("kernel must be kh x kw x Cin x Cout");
  if (w[0] % 2 == 0 || w[1] % 2 == 0) fail("kernel extents must be odd for same padding");
  if (w[2] != x[3]) fail("kernel input channels do not match input");
  if (b.size() != 1 || b[0] != w[3]) fail("bias must have Cout entries");
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  check_conv2d_shapes(x.shape(), w.shape(), b.shape());
  const ConvGeometry g = geometry(x.shape(), w.shape());
  const RowMat<T> col = im2col(x, g);
  BasicTensor<T> y(Shape{g.n, g.h, g.w, g.cout});
  MapMat<T> ym(y.ptr(), g.rows(), g.cout);
  ConstMapMat<T> wm(w.ptr(), g.cols(), g.cout);
  ym.noalias() = col * wm;
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(b.ptr(), g.cout);
  ym.rowwise() += bv;
  return y;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy,
                               bool need_dx) {
  const ConvGeometry g = geometry(x.shape(), w.shape());
  require_same_shape(dy.shape(), Shape{g.n, g.h, g.w, g.cout}, "conv2d_backward");
  const RowMat<T> col = im2col(x, g);
  ConstMapMat<T> dym(dy.ptr(), g.rows(), g.cout);
  Conv2dGrads<T> grads;
  grads.dw = BasicTensor<T>(w.shape());
  MapMat<T> dwm(grads.dw.ptr(), g.cols(), g.cout);
  dwm.noalias() = col.transpose() * dym;
  grads.db = BasicTensor<T>(Shape{g.cout});
  // Column sums in row order.
  for (int64_t r = 0; r < g.rows(); ++r) {
    const T* row = dy.ptr() + r * g.cout;
    for (int64_t c = 0; c < g.cout; ++c) grads.db[c] += row[c];
  }
  if (need_dx) {
    ConstMapMat<T> wm(w.ptr(), g.cols(), g.cout);
    const RowMat<T> dcol = dym * wm.transpose();
    grads.dx = BasicTensor<T>(x.shape());
    col2im(dcol, g, grads.dx);
  }
  return grads;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_a, bool transpose_b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw Error(ErrorKind::kShape,
                "matmul: operands must be matrices, got " + shape_to_string(a.shape()) + " and " +
                    shape_to_string(b.shape()));
  }
  const int64_t m = transpose_a ? a.dim(1) : a.dim(0);
  const int64_t ka = transpose_a ? a.dim(0) : a.dim(1);
  const int64_t kb = transpose_b ? b.dim(1) : b.dim(0);
  const int64_t n = transpose_b ? b.dim(0) : b.dim(1);
  if (ka != kb) {
    throw Error(ErrorKind::kShape, "matmul: inner extents differ, " + shape_to_string(a.shape()) +
                                       (transpose_a ? "^T" : "") + " x " + shape_to_string(b.shape()) +
                                       (transpose_b ? "^T" : ""));
  }
  BasicTensor<T> out(Shape{m, n});
  MapMat<T> om(out.ptr(), m, n);
  ConstMapMat<T> am(a.ptr(), a.dim(0), a.dim(1));
  ConstMapMat<T> bm(b.ptr(), b.dim(0), b.dim(1));
  if (!transpose_a && !transpose_b) {
    om.noalias() = am * bm;
  } else if (!transpose_a) {
    om.noalias() = am * bm.transpose();
  } else if (!transpose_b) {
    om.noalias() = am.transpose() * bm;
  } else {
    om.noalias() = am.transpose() * bm.transpose();
  }
  return out;
}

template <typename T>
double log_abs_det(const BasicTensor<T>& m) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) {
    throw Error(ErrorKind::kShape, "log_abs_det: matrix must be square, got " + shape_to_string(m.shape()));
  }
  const int64_t n = m.dim(0);
  Eigen::MatrixXd md = ConstMapMat<T>(m.ptr(), n, n).template cast<double>();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(md);
  const Eigen::MatrixXd& packed = lu.matrixLU();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += std::log(std::abs(packed(i, i)));
  return s;
}

template <typename T>
BasicTensor<T> inverse(const BasicTensor<T>& m) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) {
    throw Error(ErrorKind::kShape, "inverse: matrix must be square, got " + shape_to_string(m.shape()));
  }
  const int64_t n = m.dim(0);
  Eigen::MatrixXd md = ConstMapMat<T>(m.ptr(), n, n).template cast<double>();
  Eigen::MatrixXd inv = Eigen::PartialPivLU<Eigen::MatrixXd>(md).inverse();
  BasicTensor<T> out(m.shape());
  MapMat<T>(out.ptr(), n, n) = inv.cast<T>();
  return out;
}

template <typename T>
void tanh_inplace(std::span<T> values) {
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> a(values.data(), static_cast<Eigen::Index>(values.size()));
  a = a.tanh();
}

template void tanh_inplace(std::span<float>);
template void tanh_inplace(std::span<double>);
template BasicTensor<float> conv2d(const BasicTensor<float>&, const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> conv2d(const BasicTensor<double>&, const BasicTensor<double>&,
                                    const BasicTensor<double>&);
template Conv2dGrads<float> conv2d_backward(const BasicTensor<float>&, const BasicTensor<float>&,
                                            const BasicTensor<float>&, bool);
template Conv2dGrads<double> conv2d_backward(const BasicTensor<double>&, const BasicTensor<double>&,
                                             const BasicTensor<double>&, bool);
template BasicTensor<float> matmul(const BasicTensor<float>&, const BasicTensor<float>&, bool, bool);
template BasicTensor<double> matmul(const BasicTensor<double>&, const BasicTensor<double>&, bool, bool);
template double log_abs_det(const BasicTensor<float>&);
template double log_abs_det(const BasicTensor<double>&);
template BasicTensor<float> inverse(const BasicTensor<float>&);
template BasicTensor<double> inverse(const BasicTensor<double>&);

}  // namespace patchlikely::kernels
