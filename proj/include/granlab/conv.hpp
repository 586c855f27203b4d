#pragma once

#include <cstddef>

#include "granlab/tensor.hpp"

namespace granlab {

/// Stride and zero padding of a convolution, applied identically on every
/// spatial axis. `output_padding` only affects conv_transpose: it appends
/// that many rows/columns to the output so that a transpose can reach sizes
/// a strided convolution maps onto the same input size (e.g. 14 -> 28 with
/// a 5-wide kernel and stride 2).
struct ConvSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding = 0;

  static ConvSpec valid(std::size_t stride = 1) { return {stride, 0, 0}; }
  static ConvSpec padded(std::size_t padding, std::size_t stride = 1,
                         std::size_t output_padding = 0) {
    return {stride, padding, output_padding};
  }

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

// floor((in + 2p - k) / s) + 1; throws DimensionError when it would be < 1.
std::size_t conv_output_size(std::size_t in, std::size_t kernel,
                             const ConvSpec& spec);
// (in - 1) s + k - 2p + output_padding; throws DimensionError when < 1 or
// when output_padding >= stride.
std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel,
                                       const ConvSpec& spec);

// Kernels are laid out [out_maps, in_maps, k] (1D) or [out_maps, in_maps,
// kh, kw] (2D); the kernel rank fixes the number of spatial axes. Inputs
// are [channels, spatial...] or batched [batch, channels, spatial...].
// conv_transpose uses the same kernel tensor as the convolution it
// transposes, so it maps dim(0) channels onto dim(1) channels.

/// Cross-correlation (no kernel flip) summed over all input maps.
template <typename T>
Tensor<T> conv(const Tensor<T>& input, const Tensor<T>& kernels,
               const ConvSpec& spec);

/// Adjoint of conv: equals conv_as_matrix(...)^T applied to the input.
template <typename T>
Tensor<T> conv_transpose(const Tensor<T>& input, const Tensor<T>& kernels,
                         const ConvSpec& spec);

/// Gradient of sum(grad_out * conv(x, kernels)) with respect to x, where x
/// has shape `input_shape`. conv_transpose is this with the minimal (or
/// output-padded) input shape.
template <typename T>
Tensor<T> conv_input_grad(const Tensor<T>& grad_out, const Tensor<T>& kernels,
                          const Shape& input_shape, const ConvSpec& spec);

/// Gradient of sum(grad_out * conv(input, W)) with respect to W.
template <typename T>
Tensor<T> conv_kernel_grad(const Tensor<T>& input, const Tensor<T>& grad_out,
                           const Shape& kernel_shape, const ConvSpec& spec);

/// Dense matrix M with flatten(conv(x)) == M * flatten(x) for an unbatched
/// input of shape `input_shape`. Throws CapacityError past 10^6 entries.
template <typename T>
Tensor<T> conv_as_matrix(const Tensor<T>& kernels, const Shape& input_shape,
                         const ConvSpec& spec);

inline constexpr std::size_t kConvMatrixMaxEntries = 1'000'000;

/// Inserts stride-1 zeros after every element along the trailing
/// `spatial_rank` axes: [1,2,3] with stride 2 becomes [1,0,2,0,3,0].
template <typename T>
Tensor<T> zero_upsample(const Tensor<T>& input, std::size_t stride,
                        std::size_t spatial_rank = 1);

}  // namespace granlab
