#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mklstm/tensor.hpp"

namespace mklstm {

// Reverse-mode differentiation over 4-D tensors. A Tape records every
// operation of one forward pass in topological order; backward() replays
// the tape in reverse, accumulating gradients in a fixed order so repeated
// runs are bit-identical. Tapes are confined to one training context and
// rebuilt per batch.

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape; }
};

enum class Pointwise { sigmoid, tanh };

template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on demand during backward
    bool requires_grad = false;
    std::string name;  // leaves only; used in diagnostics
    std::function<void(Tape&)> backward;
  };

  Var<T> leaf(Tensor<T> value, bool requires_grad = false, std::string name = {});

  // Registers an op node. `backward` may be empty for constants.
  Var<T> make_node(Tensor<T> value, bool requires_grad,
                   std::function<void(Tape&)> backward);

  const Tensor<T>& value(int id) const { return nodes_[id].value; }
  Node& node(int id) { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of a node, zero-initialized on first access.
  Tensor<T>& grad_buffer(int id);
  bool has_grad(int id) const { return !nodes_[id].grad.empty(); }

  // Reverse sweep from a scalar (1x1x1x1) root. Rejects non-scalar roots.
  void backward(Var<T> root);

  // nullptr when no gradient reached the node.
  const Tensor<T>* grad_of(Var<T> v) const;

 private:
  std::vector<Node> nodes_;
};

// ---- recorded operations -------------------------------------------------

// Zero same-padding, stride-1 convolution; kernel stored (kh, kw, c_in, c_out)
// with kh, kw odd. Bias is optional (pass an invalid Var to omit).
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel, Var<T> bias = {});

// Fully connected transition on (N,1,1,C) tensors, weights (1,1,c_in,c_out).
// Deliberately a separate scalar-loop path from conv2d.
template <typename T>
Var<T> dense(Var<T> x, Var<T> weights, Var<T> bias = {});

template <typename T>
Var<T> pointwise(Var<T> x, Pointwise fn);
template <typename T>
Var<T> sigmoid(Var<T> x) { return pointwise(x, Pointwise::sigmoid); }
template <typename T>
Var<T> tanh(Var<T> x) { return pointwise(x, Pointwise::tanh); }

template <typename T>
Var<T> add(Var<T> a, Var<T> b);  // same shape, or b (1,1,1,C) / (1,H,W,C)

// Elementwise product; b may broadcast as (1,1,1,C) or (1,H,W,C).
template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> x, T factor);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

template <typename T>
std::vector<Var<T>> split_channels(Var<T> x, const std::vector<int>& sizes);

template <typename T>
Var<T> sum_all(Var<T> x);  // -> (1,1,1,1)

// Sum over every element of -[p*log(q) + (1-p)*log(1-q)] with q clamped to
// [eps, 1-eps]. Targets are data, not differentiated.
template <typename T>
Var<T> sce_sum(Var<T> predictions, Tensor<T> targets, T eps = T(1e-7));

template <typename T>
const Tensor<T>& Var<T>::value() const { return tape->value(id); }

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace mklstm
