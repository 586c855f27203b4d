#pragma once

#include <functional>
#include <span>
#include <vector>

#include "granlab/autodiff.hpp"

namespace granlab {

/// Worst disagreement between the reverse-mode gradient and central
/// differences, measured per coordinate as
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
///
/// `build` must construct a scalar-valued graph and register every tensor
/// in `wrt` through Graph::parameter. The tensors are perturbed in place
/// and restored before returning.
template <typename T>
double grad_check_params(const std::function<Var<T>(Graph<T>&)>& build,
                         std::span<Tensor<T>* const> wrt, T eps);

/// Same check for a function of plain inputs: `fn` receives one Var per
/// tensor of `inputs`.
template <typename T>
double grad_check(
    const std::function<Var<T>(Graph<T>&, std::span<const Var<T>>)>& fn,
    std::vector<Tensor<T>> inputs, T eps);

}  // namespace granlab
