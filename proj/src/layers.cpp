#include "granlab/layers.hpp"

#include <type_traits>

namespace granlab {

std::string to_string(const Activation& a) {
  switch (a.kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::leaky_relu: return "leaky_relu(" + std::to_string(a.alpha) + ")";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::linear: return "linear";
  }
  return "linear";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu();
  if (s == "tanh") return Activation::tanh();
  if (s == "sigmoid") return Activation::sigmoid();
  if (s == "linear") return Activation::linear();
  if (s.rfind("leaky_relu(", 0) == 0 && s.back() == ')') {
    return Activation::leaky(std::stod(s.substr(11, s.size() - 12)));
  }
  throw UsageError("unknown activation '" + s + "'");
}

template <typename T>
Var<T> activate(Var<T> x, const Activation& a) {
  switch (a.kind) {
    case ActivationKind::relu: return ag::relu(x);
    case ActivationKind::leaky_relu:
      if (!(a.alpha > 0.0 && a.alpha <= 1.0)) {
        throw ContractError("LeakyReLU slope must be in (0, 1]");
      }
      return ag::leaky_relu(x, static_cast<T>(a.alpha));
    case ActivationKind::tanh: return ag::tanh(x);
    case ActivationKind::sigmoid: return ag::sigmoid(x);
    case ActivationKind::linear: return x;
  }
  return x;
}

namespace {

template <typename T>
Tensor<T> gaussian(Shape shape, Rng& rng, double std) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace

template <typename T>
DenseLayer<T> DenseLayer<T>::init(std::size_t in, std::size_t out,
                                  Activation act, Rng& rng, double init_std) {
  return {gaussian<T>({out, in}, rng, init_std), Tensor<T>::zeros({out}), act};
}

template <typename T>
Var<T> DenseLayer<T>::pre_activation(Graph<T>& g, Var<T> x) const {
  if (x.shape().size() != 2 || x.shape()[1] != in_features()) {
    throw DimensionError("dense layer: input " + shape_string(x.shape()) +
                         " does not match weights " +
                         shape_string(weight.shape()));
  }
  return ag::linear(x, g.parameter(weight), g.parameter(bias));
}

template <typename T>
ConvLayer<T> ConvLayer<T>::init(std::size_t in_maps, std::size_t out_maps,
                                std::size_t kernel, ConvSpec spec,
                                Activation act, Rng& rng, double init_std) {
  return {gaussian<T>({out_maps, in_maps, kernel, kernel}, rng, init_std),
          Tensor<T>::zeros({out_maps}), spec, act};
}

template <typename T>
Var<T> ConvLayer<T>::pre_activation(Graph<T>& g, Var<T> x) const {
  Var<T> y = ag::conv(x, g.parameter(kernels), spec);
  return ag::add_channel_bias(y, g.parameter(bias));
}

template <typename T>
ConvTransposeLayer<T> ConvTransposeLayer<T>::init(
    std::size_t in_maps, std::size_t out_maps, std::size_t kernel,
    ConvSpec spec, Activation act, Rng& rng, double init_std) {
  return {gaussian<T>({in_maps, out_maps, kernel, kernel}, rng, init_std),
          Tensor<T>::zeros({out_maps}), spec, act};
}

template <typename T>
Var<T> ConvTransposeLayer<T>::pre_activation(Graph<T>& g, Var<T> x) const {
  Var<T> y = ag::conv_transpose(x, g.parameter(kernels), spec);
  return ag::add_channel_bias(y, g.parameter(bias));
}

template <typename T>
BatchNormLayer<T> BatchNormLayer<T>::init(std::size_t channels) {
  BatchNormLayer<T> bn;
  bn.gamma = Tensor<T>::ones({channels});
  bn.beta = Tensor<T>::zeros({channels});
  bn.running_mean = Tensor<T>::zeros({channels});
  bn.running_var = Tensor<T>::ones({channels});
  return bn;
}

template <typename T>
Var<T> BatchNormLayer<T>::forward(Graph<T>& g, Var<T> x, Mode mode) {
  if (mode == Mode::eval) {
    return ag::batch_norm_eval(x, g.parameter(gamma), g.parameter(beta),
                               running_mean, running_var, eps);
  }
  if (x.shape().empty() || x.shape()[0] < 2) {
    throw ContractError("batch norm in train mode needs a batch of at least 2, got " +
                        shape_string(x.shape()));
  }
  Tensor<T> bm, bv;
  Var<T> y = ag::batch_norm_train(x, g.parameter(gamma), g.parameter(beta), eps,
                                  &bm, &bv);
  for (std::size_t c = 0; c < bm.size(); ++c) {
    running_mean[c] = momentum * running_mean[c] + (T{1} - momentum) * bm[c];
    running_var[c] = momentum * running_var[c] + (T{1} - momentum) * bv[c];
  }
  return y;
}

template <typename T>
Var<T> Sequential<T>::forward(Graph<T>& g, Var<T> x, Mode mode) {
  for (auto& stage : stages) {
    x = std::visit(
        [&](auto& layer) -> Var<T> {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, Reshape>) {
            Shape s{x.shape()[0]};
            s.insert(s.end(), layer.sample_shape.begin(), layer.sample_shape.end());
            return ag::reshape(x, s);
          } else {
            Var<T> pre = layer.pre_activation(g, x);
            if (stage.norm) pre = stage.norm->forward(g, pre, mode);
            return activate(pre, layer.activation);
          }
        },
        stage.layer);
  }
  return x;
}

template <typename T>
void Sequential<T>::collect_parameters(const std::string& prefix,
                                       std::vector<NamedRef<T>>& out) {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    std::visit(
        [&](auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, DenseLayer<T>>) {
            out.emplace_back(p + ".weight", &layer.weight);
            out.emplace_back(p + ".bias", &layer.bias);
          } else if constexpr (!std::is_same_v<L, Reshape>) {
            out.emplace_back(p + ".kernels", &layer.kernels);
            out.emplace_back(p + ".bias", &layer.bias);
          }
        },
        stages[i].layer);
    if (stages[i].norm) {
      out.emplace_back(p + ".bn.gamma", &stages[i].norm->gamma);
      out.emplace_back(p + ".bn.beta", &stages[i].norm->beta);
    }
  }
}

template <typename T>
void Sequential<T>::collect_buffers(const std::string& prefix,
                                    std::vector<NamedRef<T>>& out) {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!stages[i].norm) continue;
    const std::string p = prefix + "." + std::to_string(i);
    out.emplace_back(p + ".bn.running_mean", &stages[i].norm->running_mean);
    out.emplace_back(p + ".bn.running_var", &stages[i].norm->running_var);
  }
}

template Var<float> activate(Var<float>, const Activation&);
template Var<double> activate(Var<double>, const Activation&);
template struct DenseLayer<float>;
template struct DenseLayer<double>;
template struct ConvLayer<float>;
template struct ConvLayer<double>;
template struct ConvTransposeLayer<float>;
template struct ConvTransposeLayer<double>;
template struct BatchNormLayer<float>;
template struct BatchNormLayer<double>;
template class Sequential<float>;
template class Sequential<double>;

}  // namespace granlab
