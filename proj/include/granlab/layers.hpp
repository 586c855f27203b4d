#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "granlab/autodiff.hpp"

namespace granlab {

enum class ActivationKind { relu, leaky_relu, tanh, sigmoid, linear };

struct Activation {
  ActivationKind kind = ActivationKind::linear;
  double alpha = 0.2;  // LeakyReLU slope, in (0, 1]

  static Activation relu() { return {ActivationKind::relu, 0.2}; }
  static Activation leaky(double alpha = 0.2) {
    return {ActivationKind::leaky_relu, alpha};
  }
  static Activation tanh() { return {ActivationKind::tanh, 0.2}; }
  static Activation sigmoid() { return {ActivationKind::sigmoid, 0.2}; }
  static Activation linear() { return {ActivationKind::linear, 0.2}; }

  friend bool operator==(const Activation&, const Activation&) = default;
};

std::string to_string(const Activation& a);
Activation parse_activation(const std::string& s);

template <typename T>
Var<T> activate(Var<T> x, const Activation& a);

enum class Mode { train, eval };

using Rng = std::mt19937_64;

/// Fully connected layer, batched over the leading axis: act(x W^T + b).
template <typename T>
struct DenseLayer {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]
  Activation activation;

  static DenseLayer init(std::size_t in, std::size_t out, Activation act,
                         Rng& rng, double init_std = 0.02);

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  Var<T> pre_activation(Graph<T>& g, Var<T> x) const;
  Var<T> forward(Graph<T>& g, Var<T> x) const {
    return activate(pre_activation(g, x), activation);
  }
};

/// act(sum over all input maps of conv(map, W) + b), one bias per output map.
template <typename T>
struct ConvLayer {
  Tensor<T> kernels;  // [out_maps, in_maps, kh, kw]
  Tensor<T> bias;     // [out_maps]
  ConvSpec spec;
  Activation activation;

  static ConvLayer init(std::size_t in_maps, std::size_t out_maps,
                        std::size_t kernel, ConvSpec spec, Activation act,
                        Rng& rng, double init_std = 0.02);

  std::size_t in_maps() const { return kernels.dim(1); }
  std::size_t out_maps() const { return kernels.dim(0); }

  Var<T> pre_activation(Graph<T>& g, Var<T> x) const;
  Var<T> forward(Graph<T>& g, Var<T> x) const {
    return activate(pre_activation(g, x), activation);
  }
};

/// act(sum over all input maps of conv_transpose(map, W) + b).
template <typename T>
struct ConvTransposeLayer {
  Tensor<T> kernels;  // [in_maps, out_maps, kh, kw]
  Tensor<T> bias;     // [out_maps]
  ConvSpec spec;
  Activation activation;

  static ConvTransposeLayer init(std::size_t in_maps, std::size_t out_maps,
                                 std::size_t kernel, ConvSpec spec,
                                 Activation act, Rng& rng,
                                 double init_std = 0.02);

  std::size_t in_maps() const { return kernels.dim(0); }
  std::size_t out_maps() const { return kernels.dim(1); }

  Var<T> pre_activation(Graph<T>& g, Var<T> x) const;
  Var<T> forward(Graph<T>& g, Var<T> x) const {
    return activate(pre_activation(g, x), activation);
  }
};

/// Per-channel batch normalization (channels on axis 1).
///
/// Train mode standardizes with the batch mean and biased variance and
/// folds them into the running statistics as
/// running = momentum * running + (1 - momentum) * batch.
/// Eval mode uses the running statistics. Both then apply gamma/beta.
template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.9);
  T eps = T(1e-5);

  static BatchNormLayer init(std::size_t channels);

  // Throws ContractError for a train-mode batch of one.
  Var<T> forward(Graph<T>& g, Var<T> x, Mode mode);
};

// Flattens or unflattens everything behind the batch axis.
struct Reshape {
  Shape sample_shape;
};

template <typename T>
using LayerVariant =
    std::variant<DenseLayer<T>, ConvLayer<T>, ConvTransposeLayer<T>, Reshape>;

/// One layer with optional batch norm between its affine part and its
/// activation (the usual conv -> BN -> nonlinearity ordering).
template <typename T>
struct Stage {
  LayerVariant<T> layer;
  std::optional<BatchNormLayer<T>> norm;
};

template <typename T>
using NamedRef = std::pair<std::string, Tensor<T>*>;

template <typename T>
class Sequential {
 public:
  std::vector<Stage<T>> stages;

  Var<T> forward(Graph<T>& g, Var<T> x, Mode mode);

  // Learnable tensors, in a stable order.
  void collect_parameters(const std::string& prefix,
                          std::vector<NamedRef<T>>& out);
  // Batch-norm running statistics.
  void collect_buffers(const std::string& prefix, std::vector<NamedRef<T>>& out);
};

}  // namespace granlab
