#include "granlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace granlab {

template <typename T>
double grad_check_params(const std::function<Var<T>(Graph<T>&)>& build,
                         std::span<Tensor<T>* const> wrt, T eps) {
  if (!(eps > T{0})) throw ContractError("grad_check: eps must be positive");
  std::vector<Tensor<T>> analytic;
  {
    Graph<T> g;
    Var<T> loss = build(g);
    g.backward(loss);
    for (Tensor<T>* t : wrt) analytic.push_back(g.grad_of(*t));
  }
  auto evaluate = [&]() {
    Graph<T> g;
    return static_cast<double>(build(g).value().item());
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    Tensor<T>& t = *wrt[k];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const T saved = t[i];
      t[i] = saved + eps;
      const double up = evaluate();
      t[i] = saved - eps;
      const double down = evaluate();
      t[i] = saved;
      const double numeric = (up - down) / (2.0 * static_cast<double>(eps));
      const double a = static_cast<double>(analytic[k][i]);
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

template <typename T>
double grad_check(
    const std::function<Var<T>(Graph<T>&, std::span<const Var<T>>)>& fn,
    std::vector<Tensor<T>> inputs, T eps) {
  std::vector<Tensor<T>*> ptrs;
  for (auto& t : inputs) ptrs.push_back(&t);
  std::function<Var<T>(Graph<T>&)> build = [&](Graph<T>& g) {
    std::vector<Var<T>> vars;
    for (auto* p : ptrs) vars.push_back(g.parameter(*p));
    return fn(g, vars);
  };
  return grad_check_params<T>(build, ptrs, eps);
}

template double grad_check_params<float>(
    const std::function<Var<float>(Graph<float>&)>&,
    std::span<Tensor<float>* const>, float);
template double grad_check_params<double>(
    const std::function<Var<double>(Graph<double>&)>&,
    std::span<Tensor<double>* const>, double);
template double grad_check<float>(
    const std::function<Var<float>(Graph<float>&, std::span<const Var<float>>)>&,
    std::vector<Tensor<float>>, float);
template double grad_check<double>(
    const std::function<Var<double>(Graph<double>&, std::span<const Var<double>>)>&,
    std::vector<Tensor<double>>, double);

}  // namespace granlab
