#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "patchlikely/tensor.hpp"

namespace patchlikely::ad {

// The closed set of differentiable operations. Anything outside it is
// rejected when it is recorded, never at backward time.
enum class Op : int {
  kLeaf = 0,
  kConv2d,
  kMatmul,
  kAdd,
  kMul,
  kExp,
  kLog,
  kTanh,
  kSigmoid,
  kSum,
  kMean,
  kSliceChannels,
  kConcatChannels,
  kLogAbsDet,
  kReshape,
  kScale,
  kAddScalar,
};

const char* op_name(Op op);

struct OpAttrs {
  int64_t begin = 0;  // slice start along the last axis
  int64_t end = 0;    // slice stop (exclusive)
  double scalar = 0.0;
  bool transpose_b = false;
  Shape shape;  // reshape target
};

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const BasicTensor<T>& value() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Records a computation as it is evaluated and replays it backwards. Nodes are
// appended in evaluation order, so reverse insertion order is a valid
// topological order and gradient accumulation order is fixed.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A leaf whose gradient can be requested.
  Var<T> variable(BasicTensor<T> value);
  // A leaf that never receives a gradient.
  Var<T> constant(BasicTensor<T> value);

  Var<T> apply(Op op, std::span<const Var<T>> inputs, const OpAttrs& attrs = {});

  const BasicTensor<T>& value(Var<T> v) const;

  // d loss / d param for each param, in order. loss must be a scalar node.
  std::vector<BasicTensor<T>> gradient(Var<T> loss, std::span<const Var<T>> params) const;

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    std::vector<int> inputs;
    OpAttrs attrs;
    BasicTensor<T> value;
    bool requires_grad;
  };

  void check_owned(Var<T> v) const;
  BasicTensor<T> evaluate(Op op, const std::vector<const BasicTensor<T>*>& in, const OpAttrs& attrs) const;
  void backward(const Node& node, const BasicTensor<T>& g, std::vector<BasicTensor<T>>& grads) const;

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

// Convenience wrappers; each records exactly one node.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b);
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool transpose_b = false);
// b may equal a's shape, be a trailing suffix of it, or be a scalar.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> exp(Var<T> x);
template <typename T>
Var<T> log(Var<T> x);
template <typename T>
Var<T> tanh(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);
template <typename T>
Var<T> slice_channels(Var<T> x, int64_t begin, int64_t end);
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b);
template <typename T>
Var<T> log_abs_det(Var<T> m);
template <typename T>
Var<T> reshape(Var<T> x, Shape shape);
template <typename T>
Var<T> scale(Var<T> x, double factor);
template <typename T>
Var<T> add_scalar(Var<T> x, double offset);

}  // namespace patchlikely::ad
