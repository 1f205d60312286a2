#include "patchlikely/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace patchlikely {

int64_t shape_volume(const Shape& shape) {
  int64_t v = 1;
  for (int64_t e : shape) {
    if (e < 0) throw Error(ErrorKind::kShape, "negative extent in shape " + shape_to_string(shape));
    v *= e;
  }
  return v;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* context) {
  if (a != b) {
    throw Error(ErrorKind::kShape,
                std::string(context) + ": shape mismatch " + shape_to_string(a) + " vs " + shape_to_string(b));
  }
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_volume(shape_)), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_volume(shape_) != static_cast<int64_t>(data_.size())) {
    throw Error(ErrorKind::kShape, "tensor data length " + std::to_string(data_.size()) +
                                       " does not match shape " + shape_to_string(shape_));
  }
}

template <typename T>
int64_t BasicTensor<T>::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw Error(ErrorKind::kShape, "axis " + std::to_string(axis) + " out of range for " + shape_to_string(shape_));
  }
  return shape_[static_cast<size_t>(axis)];
}

template <typename T>
T& BasicTensor<T>::at(int64_t n, int64_t y, int64_t x, int64_t c) {
  const int64_t h = shape_[1], w = shape_[2], ch = shape_[3];
  return data_[static_cast<size_t>(((n * h + y) * w + x) * ch + c)];
}

template <typename T>
const T& BasicTensor<T>::at(int64_t n, int64_t y, int64_t x, int64_t c) const {
  const int64_t h = shape_[1], w = shape_[2], ch = shape_[3];
  return data_[static_cast<size_t>(((n * h + y) * w + x) * ch + c)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (data_.size() != 1) {
    throw Error(ErrorKind::kShape, "item() requires a single element, shape is " + shape_to_string(shape_));
  }
  return data_[0];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const& {
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) && {
  return BasicTensor(std::move(shape), std::move(data_));
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template double max_abs_diff(const BasicTensor<float>&, const BasicTensor<float>&);
template double max_abs_diff(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace patchlikely
