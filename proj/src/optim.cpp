#include "granlab/optim.hpp"

#include <cmath>

namespace granlab {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(std::span<Tensor<T>* const> params) {
  AdamState<T> s;
  for (const Tensor<T>* p : params) {
    s.m.push_back(Tensor<T>::zeros(p->shape()));
    s.v.push_back(Tensor<T>::zeros(p->shape()));
  }
  return s;
}

template <typename T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>* const> params,
               std::span<const Tensor<T>> grads, const AdamConfig& c) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.m.size()) + " moment slots");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(*params[k], grads[k], "adam gradient");
    require_same_shape(*params[k], state.m[k], "adam moment");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T correct1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
  const T correct2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
  const T lr = static_cast<T>(c.lr), eps = static_cast<T>(c.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    Tensor<T>& m = state.m[k];
    Tensor<T>& v = state.v[k];
    const Tensor<T>& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      const T mhat = m[i] / correct1;
      const T vhat = v[i] / correct2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(AdamState<float>&, std::span<Tensor<float>* const>,
                        std::span<const Tensor<float>>, const AdamConfig&);
template void adam_step(AdamState<double>&, std::span<Tensor<double>* const>,
                        std::span<const Tensor<double>>, const AdamConfig&);

}  // namespace granlab
