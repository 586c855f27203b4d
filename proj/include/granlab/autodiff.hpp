#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

#include "granlab/conv.hpp"
#include "granlab/tensor.hpp"

namespace granlab {

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return graph->value(id); }
  const Shape& shape() const { return graph->value(id).shape(); }
};

/// Define-by-run tape for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node vector is already a
/// topological order; backward() walks it in reverse. A graph is built for
/// one forward pass and thrown away afterwards. Parameters are registered by
/// address, so a tensor used at several points of the pass (the recurrent
/// weights of every unrolled step) maps onto a single leaf and collects the
/// summed gradient.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Var<T> constant(Tensor<T> value);
  Var<T> input(Tensor<T> value);
  Var<T> parameter(const Tensor<T>& param);

  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs,
                BackwardFn backward);

  /// Reverse accumulation from a scalar node. Throws ContractError for a
  /// non-scalar loss. Gradients from an earlier call are cleared first.
  void backward(Var<T> loss);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of the last backward() loss with respect to a node; zeros if
  /// the node is unreachable from it.
  const Tensor<T>& grad(Var<T> v) const;
  /// Gradient with respect to a registered parameter; zeros when the
  /// parameter never entered the graph.
  const Tensor<T>& grad_of(const Tensor<T>& param) const;
  bool has_parameter(const Tensor<T>& param) const {
    return params_.count(&param) != 0;
  }

  // For backward functions: the incoming gradient of `id` and an
  // accumulator for one of its inputs (no-op target when the input does
  // not require a gradient).
  const Tensor<T>& out_grad(std::size_t id) const { return nodes_[id].grad; }
  void accumulate(std::size_t id, const Tensor<T>& g);
  Tensor<T>& grad_slot(std::size_t id);

 private:
  struct Node {
    Tensor<T> value;
    mutable Tensor<T> grad;
    mutable bool zero_filled = false;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, std::size_t> params_;
  mutable std::deque<Tensor<T>> unregistered_zeros_;
};

/// Differentiable operations. Shapes follow the library conventions:
/// feature matrices are [batch, features], images are [batch, channels,
/// spatial...], and per-channel vectors index axis 1.
namespace ag {

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T c);
template <typename T> Var<T> add_scalar(Var<T> a, T c);

// x[N,in] W[out,in]^T + b[out]
template <typename T> Var<T> linear(Var<T> x, Var<T> w, Var<T> b);
// Adds b[C] along axis 1.
template <typename T> Var<T> add_channel_bias(Var<T> x, Var<T> b);

template <typename T> Var<T> conv(Var<T> x, Var<T> kernels, const ConvSpec& spec);
template <typename T>
Var<T> conv_transpose(Var<T> x, Var<T> kernels, const ConvSpec& spec);

template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> leaky_relu(Var<T> x, T alpha);
template <typename T> Var<T> tanh(Var<T> x);
template <typename T> Var<T> sigmoid(Var<T> x);
// log(clamp(x, lo, hi)); the gradient is zero where the clamp is active.
template <typename T> Var<T> log_clamped(Var<T> x, T lo, T hi);

template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);

template <typename T> Var<T> reshape(Var<T> x, Shape shape);
// [N,p] ++ [N,q] -> [N,p+q], a's columns first.
template <typename T> Var<T> concat_cols(Var<T> a, Var<T> b);

// Per-channel standardization with batch statistics (biased variance),
// followed by gamma/beta. Writes the batch mean/variance to the outputs.
template <typename T>
Var<T> batch_norm_train(Var<T> x, Var<T> gamma, Var<T> beta, T eps,
                        Tensor<T>* batch_mean, Tensor<T>* batch_var);
// Same transform with fixed statistics.
template <typename T>
Var<T> batch_norm_eval(Var<T> x, Var<T> gamma, Var<T> beta,
                       const Tensor<T>& mean, const Tensor<T>& var, T eps);

}  // namespace ag

}  // namespace granlab
