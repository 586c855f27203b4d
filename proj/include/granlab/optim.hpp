#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "granlab/tensor.hpp"

namespace granlab {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates, one pair per parameter tensor, and
/// the number of steps taken so far.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(std::span<Tensor<T>* const> params);
};

/// One bias-corrected Adam update:
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2,
///   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
/// Throws DimensionError if the state, parameters and gradients disagree.
template <typename T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>* const> params,
               std::span<const Tensor<T>> grads, const AdamConfig& config);

}  // namespace granlab
