#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "granlab/tensor.hpp"

namespace granlab {

// Binary PGM (P5) for [1, H, W] and PPM (P6) for [3, H, W] images. Values
// are clamped to [0, 1], scaled by 255 and rounded to nearest.
template <typename T>
std::vector<std::uint8_t> encode_pnm(const Tensor<T>& image);

// A whole batch [N, C, H, W] written back to back in one file.
template <typename T>
std::vector<std::uint8_t> encode_pnm_stack(const Tensor<T>& batch);

template <typename T>
void write_pnm(const std::string& path, const Tensor<T>& image_or_batch);

/// Reads one or more concatenated P5/P6 images of identical size into
/// [N, C, H, W] scaled to [0, 1]. Header comments are allowed, maxval up to
/// 255. Throws ParseError with the offending byte offset.
template <typename T>
Tensor<T> decode_pnm_stack(const std::vector<std::uint8_t>& bytes);

// A file as above, or a directory whose *.pgm / *.ppm files are read in
// name order and stacked.
template <typename T>
Tensor<T> read_pnm_stack(const std::string& path);

/// Tiles [N, C, H, W] into a single [C, rows, cols] image with `pad` pixels
/// of background between tiles. cols = 0 picks a near-square layout.
template <typename T>
Tensor<T> tile_grid(const Tensor<T>& batch, std::size_t cols = 0, std::size_t pad = 1,
                    T background = T{0});

}  // namespace granlab
