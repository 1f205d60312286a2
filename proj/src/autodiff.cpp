#include "patchlikely/autodiff.hpp"

#include <array>
#include <cmath>

#include "patchlikely/kernels.hpp"

namespace patchlikely::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConv2d: return "conv2d";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSliceChannels: return "slice_channels";
    case Op::kConcatChannels: return "concat_channels";
    case Op::kLogAbsDet: return "log_abs_det";
    case Op::kReshape: return "reshape";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
  }
  return "unknown";
}

namespace {

int arity(Op op) {
  switch (op) {
    case Op::kLeaf: return 0;
    case Op::kConv2d: return 3;
    case Op::kMatmul:
    case Op::kAdd:
    case Op::kMul:
    case Op::kConcatChannels: return 2;
    case Op::kExp:
    case Op::kLog:
    case Op::kTanh:
    case Op::kSigmoid:
    case Op::kSum:
    case Op::kMean:
    case Op::kSliceChannels:
    case Op::kLogAbsDet:
    case Op::kReshape:
    case Op::kScale:
    case Op::kAddScalar: return 1;
  }
  return -1;
}

// Number of times b repeats inside a when b's shape is a suffix of a's.
int64_t broadcast_repeats(const Shape& a, const Shape& b, const char* op) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    throw Error(ErrorKind::kShape, std::string(op) + ": cannot broadcast " + shape_to_string(b) + " onto " +
                                       shape_to_string(a));
  }
  const int64_t inner = shape_volume(b);
  return inner == 0 ? 0 : shape_volume(a) / inner;
}

// Sums g over the leading repeats so it matches b's extent.
template <typename T>
BasicTensor<T> reduce_to(const BasicTensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  BasicTensor<T> out(target);
  const int64_t inner = out.size();
  const int64_t reps = g.size() / inner;
  for (int64_t r = 0; r < reps; ++r) {
    const T* src = g.ptr() + r * inner;
    for (int64_t i = 0; i < inner; ++i) out[i] += src[i];
  }
  return out;
}

template <typename T>
void accumulate(BasicTensor<T>& slot, const BasicTensor<T>& g) {
  if (slot.empty() && slot.shape().empty() && g.size() != 0) {
    slot = g;
    return;
  }
  require_same_shape(slot.shape(), g.shape(), "gradient accumulation");
  for (int64_t i = 0; i < g.size(); ++i) slot[i] += g[i];
}

}  // namespace

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  if (!valid()) throw Error(ErrorKind::kInvalidArgument, "use of an unbound autodiff variable");
  return tape->value(*this);
}

template <typename T>
Var<T> Tape<T>::variable(BasicTensor<T> value) {
  nodes_.push_back(Node{Op::kLeaf, {}, {}, std::move(value), true});
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Tape<T>::constant(BasicTensor<T> value) {
  nodes_.push_back(Node{Op::kLeaf, {}, {}, std::move(value), false});
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
void Tape<T>::check_owned(Var<T> v) const {
  if (v.tape != this || v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size()) {
    throw Error(ErrorKind::kInvalidArgument, "autodiff variable does not belong to this tape");
  }
}

template <typename T>
const BasicTensor<T>& Tape<T>::value(Var<T> v) const {
  check_owned(v);
  return nodes_[static_cast<size_t>(v.id)].value;
}

template <typename T>
Var<T> Tape<T>::apply(Op op, std::span<const Var<T>> inputs, const OpAttrs& attrs) {
  const int expected = arity(op);
  if (expected < 0) {
    throw Error(ErrorKind::kUnsupported,
                "operation code " + std::to_string(static_cast<int>(op)) + " is not in the supported op set");
  }
  if (op == Op::kLeaf) {
    throw Error(ErrorKind::kInvalidArgument, "leaves are created with variable() or constant()");
  }
  if (static_cast<int>(inputs.size()) != expected) {
    throw Error(ErrorKind::kInvalidArgument, std::string(op_name(op)) + " expects " + std::to_string(expected) +
                                                 " inputs, got " + std::to_string(inputs.size()));
  }
  std::vector<const BasicTensor<T>*> in;
  std::vector<int> ids;
  bool requires_grad = false;
  for (const Var<T>& v : inputs) {
    check_owned(v);
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    in.push_back(&n.value);
    ids.push_back(v.id);
    requires_grad = requires_grad || n.requires_grad;
  }
  BasicTensor<T> out = evaluate(op, in, attrs);
  nodes_.push_back(Node{op, std::move(ids), attrs, std::move(out), requires_grad});
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
BasicTensor<T> Tape<T>::evaluate(Op op, const std::vector<const BasicTensor<T>*>& in, const OpAttrs& attrs) const {
  auto unary = [&](auto fn) {
    BasicTensor<T> out(in[0]->shape());
    const T* src = in[0]->ptr();
    for (int64_t i = 0; i < out.size(); ++i) out[i] = fn(src[i]);
    return out;
  };
  switch (op) {
    case Op::kConv2d:
      return kernels::conv2d(*in[0], *in[1], *in[2]);
    case Op::kMatmul:
      return kernels::matmul(*in[0], *in[1], false, attrs.transpose_b);
    case Op::kAdd:
    case Op::kMul: {
      const BasicTensor<T>& a = *in[0];
      const BasicTensor<T>& b = *in[1];
      BasicTensor<T> out(a.shape());
      const bool is_add = op == Op::kAdd;
      if (b.rank() == 0) {
        const T s = b[0];
        for (int64_t i = 0; i < a.size(); ++i) out[i] = is_add ? a[i] + s : a[i] * s;
        return out;
      }
      const int64_t reps = broadcast_repeats(a.shape(), b.shape(), op_name(op));
      const int64_t inner = b.size();
      for (int64_t r = 0; r < reps; ++r) {
        for (int64_t i = 0; i < inner; ++i) {
          const int64_t k = r * inner + i;
          out[k] = is_add ? a[k] + b[i] : a[k] * b[i];
        }
      }
      return out;
    }
    case Op::kExp:
      return unary([](T v) { return std::exp(v); });
    case Op::kLog:
      return unary([](T v) { return std::log(v); });
    case Op::kTanh: {
      BasicTensor<T> out = *in[0];
      kernels::tanh_inplace(out.data());
      return out;
    }
    case Op::kSigmoid:
      return unary([](T v) {
        return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
      });
    case Op::kSum:
    case Op::kMean: {
      // Accumulate in double in index order.
      double s = 0.0;
      for (T v : in[0]->data()) s += static_cast<double>(v);
      if (op == Op::kMean) {
        if (in[0]->size() == 0) throw Error(ErrorKind::kShape, "mean of an empty tensor");
        s /= static_cast<double>(in[0]->size());
      }
      return BasicTensor<T>::scalar(static_cast<T>(s));
    }
    case Op::kSliceChannels: {
      const BasicTensor<T>& x = *in[0];
      if (x.rank() == 0) throw Error(ErrorKind::kShape, "slice_channels on a scalar");
      const int64_t c = x.dim(-1);
      if (attrs.begin < 0 || attrs.end > c || attrs.begin >= attrs.end) {
        throw Error(ErrorKind::kShape, "slice_channels: range [" + std::to_string(attrs.begin) + "," +
                                           std::to_string(attrs.end) + ") invalid for " +
                                           shape_to_string(x.shape()));
      }
      Shape s = x.shape();
      const int64_t width = attrs.end - attrs.begin;
      s.back() = width;
      BasicTensor<T> out(s);
      const int64_t rows = x.size() / c;
      for (int64_t r = 0; r < rows; ++r) {
        const T* src = x.ptr() + r * c + attrs.begin;
        T* dst = out.ptr() + r * width;
        for (int64_t i = 0; i < width; ++i) dst[i] = src[i];
      }
      return out;
    }
    case Op::kConcatChannels: {
      const BasicTensor<T>& a = *in[0];
      const BasicTensor<T>& b = *in[1];
      Shape sa = a.shape(), sb = b.shape();
      if (sa.empty() || sb.empty()) throw Error(ErrorKind::kShape, "concat_channels on a scalar");
      const int64_t ca = sa.back(), cb = sb.back();
      sa.pop_back();
      sb.pop_back();
      if (sa != sb) {
        throw Error(ErrorKind::kShape, "concat_channels: leading extents differ, " + shape_to_string(a.shape()) +
                                           " vs " + shape_to_string(b.shape()));
      }
      sa.push_back(ca + cb);
      BasicTensor<T> out(sa);
      const int64_t rows = shape_volume(sb);
      for (int64_t r = 0; r < rows; ++r) {
        T* dst = out.ptr() + r * (ca + cb);
        for (int64_t i = 0; i < ca; ++i) dst[i] = a[r * ca + i];
        for (int64_t i = 0; i < cb; ++i) dst[ca + i] = b[r * cb + i];
      }
      return out;
    }
    case Op::kLogAbsDet:
      return BasicTensor<T>::scalar(static_cast<T>(kernels::log_abs_det(*in[0])));
    case Op::kReshape:
      if (shape_volume(attrs.shape) != in[0]->size()) {
        throw Error(ErrorKind::kShape,
                    "reshape: cannot view " + shape_to_string(in[0]->shape()) + " as " + shape_to_string(attrs.shape));
      }
      return in[0]->reshaped(attrs.shape);
    case Op::kScale:
      return unary([f = static_cast<T>(attrs.scalar)](T v) { return v * f; });
    case Op::kAddScalar:
      return unary([f = static_cast<T>(attrs.scalar)](T v) { return v + f; });
    case Op::kLeaf:
      break;
  }
  throw Error(ErrorKind::kUnsupported, std::string("cannot evaluate ") + op_name(op));
}

template <typename T>
void Tape<T>::backward(const Node& node, const BasicTensor<T>& g, std::vector<BasicTensor<T>>& grads) const {
  auto needs = [&](size_t k) { return nodes_[static_cast<size_t>(node.inputs[k])].requires_grad; };
  auto input = [&](size_t k) -> const BasicTensor<T>& { return nodes_[static_cast<size_t>(node.inputs[k])].value; };
  auto push = [&](size_t k, const BasicTensor<T>& contribution) {
    accumulate(grads[static_cast<size_t>(node.inputs[k])], contribution);
  };
  auto elementwise = [&](auto dfn) {
    BasicTensor<T> d(g.shape());
    for (int64_t i = 0; i < g.size(); ++i) d[i] = g[i] * dfn(i);
    push(0, d);
  };
  const BasicTensor<T>& y = node.value;

  switch (node.op) {
    case Op::kLeaf:
      return;
    case Op::kConv2d: {
      auto cg = kernels::conv2d_backward(input(0), input(1), g, needs(0));
      if (needs(0)) push(0, cg.dx);
      if (needs(1)) push(1, cg.dw);
      if (needs(2)) push(2, cg.db);
      return;
    }
    case Op::kMatmul: {
      // y = a b (or a b^T).
      if (needs(0)) push(0, kernels::matmul(g, input(1), false, !node.attrs.transpose_b));
      if (needs(1)) {
        push(1, node.attrs.transpose_b ? kernels::matmul(g, input(0), true, false)
                                       : kernels::matmul(input(0), g, true, false));
      }
      return;
    }
    case Op::kAdd: {
      if (needs(0)) push(0, g);
      if (needs(1)) {
        if (input(1).rank() == 0) {
          double s = 0.0;
          for (T v : g.data()) s += v;
          push(1, BasicTensor<T>::scalar(static_cast<T>(s)));
        } else {
          push(1, reduce_to(g, input(1).shape()));
        }
      }
      return;
    }
    case Op::kMul: {
      const BasicTensor<T>& a = input(0);
      const BasicTensor<T>& b = input(1);
      const int64_t inner = b.rank() == 0 ? 1 : b.size();
      if (needs(0)) {
        BasicTensor<T> d(a.shape());
        for (int64_t i = 0; i < a.size(); ++i) d[i] = g[i] * b[b.rank() == 0 ? 0 : i % inner];
        push(0, d);
      }
      if (needs(1)) {
        BasicTensor<T> prod(a.shape());
        for (int64_t i = 0; i < a.size(); ++i) prod[i] = g[i] * a[i];
        if (b.rank() == 0) {
          double s = 0.0;
          for (T v : prod.data()) s += v;
          push(1, BasicTensor<T>::scalar(static_cast<T>(s)));
        } else {
          push(1, reduce_to(prod, b.shape()));
        }
      }
      return;
    }
    case Op::kExp:
      if (needs(0)) elementwise([&](int64_t i) { return y[i]; });
      return;
    case Op::kLog:
      if (needs(0)) elementwise([&](int64_t i) { return T(1) / input(0)[i]; });
      return;
    case Op::kTanh:
      if (needs(0)) elementwise([&](int64_t i) { return T(1) - y[i] * y[i]; });
      return;
    case Op::kSigmoid:
      if (needs(0)) elementwise([&](int64_t i) { return y[i] * (T(1) - y[i]); });
      return;
    case Op::kSum:
    case Op::kMean:
      if (needs(0)) {
        T s = g[0];
        if (node.op == Op::kMean) s /= static_cast<T>(input(0).size());
        push(0, BasicTensor<T>(input(0).shape(), s));
      }
      return;
    case Op::kSliceChannels:
      if (needs(0)) {
        const BasicTensor<T>& x = input(0);
        BasicTensor<T> d(x.shape());
        const int64_t c = x.dim(-1);
        const int64_t width = node.attrs.end - node.attrs.begin;
        const int64_t rows = x.size() / c;
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t i = 0; i < width; ++i) d[r * c + node.attrs.begin + i] = g[r * width + i];
        }
        push(0, d);
      }
      return;
    case Op::kConcatChannels: {
      const int64_t ca = input(0).dim(-1), cb = input(1).dim(-1);
      const int64_t rows = input(0).size() / ca;
      if (needs(0)) {
        BasicTensor<T> d(input(0).shape());
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t i = 0; i < ca; ++i) d[r * ca + i] = g[r * (ca + cb) + i];
        push(0, d);
      }
      if (needs(1)) {
        BasicTensor<T> d(input(1).shape());
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t i = 0; i < cb; ++i) d[r * cb + i] = g[r * (ca + cb) + ca + i];
        push(1, d);
      }
      return;
    }
    case Op::kLogAbsDet:
      if (needs(0)) {
        // d log|det W| / dW = W^{-T}
        BasicTensor<T> inv = kernels::inverse(input(0));
        const int64_t n = inv.dim(0);
        BasicTensor<T> d(inv.shape());
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < n; ++j) d[i * n + j] = g[0] * inv[j * n + i];
        push(0, d);
      }
      return;
    case Op::kReshape:
      if (needs(0)) push(0, g.reshaped(input(0).shape()));
      return;
    case Op::kScale:
      if (needs(0)) elementwise([f = static_cast<T>(node.attrs.scalar)](int64_t) { return f; });
      return;
    case Op::kAddScalar:
      if (needs(0)) push(0, g);
      return;
  }
}

template <typename T>
std::vector<BasicTensor<T>> Tape<T>::gradient(Var<T> loss, std::span<const Var<T>> params) const {
  check_owned(loss);
  const Node& root = nodes_[static_cast<size_t>(loss.id)];
  if (root.value.size() != 1 || root.value.rank() != 0) {
    throw Error(ErrorKind::kShape, "gradient: loss must be a scalar, got shape " + shape_to_string(root.value.shape()));
  }
  for (const Var<T>& p : params) check_owned(p);

  std::vector<BasicTensor<T>> grads(static_cast<size_t>(loss.id) + 1);
  grads[static_cast<size_t>(loss.id)] = BasicTensor<T>::scalar(T(1));
  for (int id = loss.id; id >= 0; --id) {
    const Node& node = nodes_[static_cast<size_t>(id)];
    BasicTensor<T>& g = grads[static_cast<size_t>(id)];
    if (!node.requires_grad || (g.empty() && g.shape().empty())) continue;
    backward(node, g, grads);
    if (node.op != Op::kLeaf) g = BasicTensor<T>();  // release intermediate gradients early
  }

  std::vector<BasicTensor<T>> out;
  out.reserve(params.size());
  for (const Var<T>& p : params) {
    const size_t id = static_cast<size_t>(p.id);
    if (id < grads.size() && !(grads[id].empty() && grads[id].shape().empty())) {
      out.push_back(grads[id]);
    } else {
      out.push_back(BasicTensor<T>(nodes_[id].value.shape()));
    }
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;
template struct Var<float>;
template struct Var<double>;

namespace {
template <typename T, size_t N>
Var<T> record(Op op, const std::array<Var<T>, N>& in, const OpAttrs& attrs = {}) {
  if (in[0].tape == nullptr) throw Error(ErrorKind::kInvalidArgument, "use of an unbound autodiff variable");
  return in[0].tape->apply(op, std::span<const Var<T>>(in.data(), N), attrs);
}
}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b) {
  return record<T, 3>(Op::kConv2d, {x, w, b});
}
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool transpose_b) {
  OpAttrs attrs;
  attrs.transpose_b = transpose_b;
  return record<T, 2>(Op::kMatmul, {a, b}, attrs);
}
template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return record<T, 2>(Op::kAdd, {a, b});
}
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return record<T, 2>(Op::kMul, {a, b});
}
template <typename T>
Var<T> exp(Var<T> x) {
  return record<T, 1>(Op::kExp, {x});
}
template <typename T>
Var<T> log(Var<T> x) {
  return record<T, 1>(Op::kLog, {x});
}
template <typename T>
Var<T> tanh(Var<T> x) {
  return record<T, 1>(Op::kTanh, {x});
}
template <typename T>
Var<T> sigmoid(Var<T> x) {
  return record<T, 1>(Op::kSigmoid, {x});
}
template <typename T>
Var<T> sum(Var<T> x) {
  return record<T, 1>(Op::kSum, {x});
}
template <typename T>
Var<T> mean(Var<T> x) {
  return record<T, 1>(Op::kMean, {x});
}
template <typename T>
Var<T> slice_channels(Var<T> x, int64_t begin, int64_t end) {
  OpAttrs attrs;
  attrs.begin = begin;
  attrs.end = end;
  return record<T, 1>(Op::kSliceChannels, {x}, attrs);
}
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  return record<T, 2>(Op::kConcatChannels, {a, b});
}
template <typename T>
Var<T> log_abs_det(Var<T> m) {
  return record<T, 1>(Op::kLogAbsDet, {m});
}
template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  OpAttrs attrs;
  attrs.shape = std::move(shape);
  return record<T, 1>(Op::kReshape, {x}, attrs);
}
template <typename T>
Var<T> scale(Var<T> x, double factor) {
  OpAttrs attrs;
  attrs.scalar = factor;
  return record<T, 1>(Op::kScale, {x}, attrs);
}
template <typename T>
Var<T> add_scalar(Var<T> x, double offset) {
  OpAttrs attrs;
  attrs.scalar = offset;
  return record<T, 1>(Op::kAddScalar, {x}, attrs);
}

#define PATCHLIKELY_INSTANTIATE_OPS(T)                                  \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>);                       \
  template Var<T> matmul(Var<T>, Var<T>, bool);                         \
  template Var<T> add(Var<T>, Var<T>);                                  \
  template Var<T> mul(Var<T>, Var<T>);                                  \
  template Var<T> exp(Var<T>);                                          \
  template Var<T> log(Var<T>);                                          \
  template Var<T> tanh(Var<T>);                                         \
  template Var<T> sigmoid(Var<T>);                                      \
  template Var<T> sum(Var<T>);                                          \
  template Var<T> mean(Var<T>);                                         \
  template Var<T> slice_channels(Var<T>, int64_t, int64_t);             \
  template Var<T> concat_channels(Var<T>, Var<T>);                      \
  template Var<T> log_abs_det(Var<T>);                                  \
  template Var<T> reshape(Var<T>, Shape);                               \
  template Var<T> scale(Var<T>, double);                                \
  template Var<T> add_scalar(Var<T>, double);

PATCHLIKELY_INSTANTIATE_OPS(float)
PATCHLIKELY_INSTANTIATE_OPS(double)

#undef PATCHLIKELY_INSTANTIATE_OPS

}  // namespace patchlikely::ad
