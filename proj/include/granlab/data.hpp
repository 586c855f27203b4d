#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "granlab/tensor.hpp"

namespace granlab {

enum class Split { train, test };

/// Examples stacked along axis 0. `normalized` is set once every value is
/// known to lie in [0, 1].
template <typename T>
struct Dataset {
  Tensor<T> x;
  Split split = Split::train;
  bool normalized = false;

  std::size_t size() const { return x.dim(0); }
  Shape example_shape() const { return Shape(x.shape().begin() + 1, x.shape().end()); }
};

// First `count - test_count` examples become the train split, the rest the
// test split.
template <typename T>
std::pair<Dataset<T>, Dataset<T>> split_dataset(const Dataset<T>& all,
                                                std::size_t test_count);

// Rows [begin, end) of a stacked tensor.
template <typename T>
Tensor<T> take_rows(const Tensor<T>& x, std::size_t begin, std::size_t end);
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows);

/// IDX image file (magic 0x00000803): unsigned bytes scaled by 1/255 into
/// shape [N, 1, H, W]. Throws ParseError with the byte offset of the
/// problem for a bad magic number, truncated header or short payload.
template <typename T>
Dataset<T> load_idx(const std::string& path);
template <typename T>
Dataset<T> parse_idx_images(const std::vector<std::uint8_t>& bytes);

// IDX label file (magic 0x00000801).
std::vector<std::uint8_t> load_idx_labels(const std::string& path);
std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes);

template <typename T>
struct RingData {
  Dataset<T> data;                            // [count, 2] in [0, 1]^2
  std::vector<std::array<double, 2>> means;  // after scaling
  double sigma = 0;                          // after scaling
  std::vector<std::size_t> labels;           // generating mode per point
};

/// Equal-weight mixture of isotropic Gaussians with means at angles
/// 2 pi k / modes on a circle of the given radius. The points are mapped
/// into [0, 1]^2 by one common scale factor (both axes alike, so the
/// modes stay round), centred on the shorter axis.
template <typename T>
RingData<T> gen_gaussian_ring(std::size_t modes, double radius, double sigma,
                              std::size_t count, std::uint64_t seed);

enum class ShapeKind : std::size_t { filled_rect = 0, hollow_rect = 1, cross = 2 };
inline constexpr std::size_t kShapeKinds = 3;

template <typename T>
struct ShapesData {
  Dataset<T> data;  // [count, 1, size, size], values in {0, 1}
  std::vector<ShapeKind> labels;
};

/// Axis-aligned filled rectangles, rectangle outlines and plus-shaped
/// crosses at random positions and extents, one class drawn uniformly per
/// image. Throws ContractError for size < 4.
template <typename T>
ShapesData<T> gen_shapes(std::size_t size, std::size_t count, std::uint64_t seed);

/// Affine map of the global minimum to 0 and maximum to 1. A constant
/// tensor maps to zeros. Applying it twice changes nothing.
template <typename T>
Tensor<T> normalize_minmax(const Tensor<T>& x);

/// Endless stream of shuffled batches. Every epoch draws a fresh
/// permutation from the seeded generator and drops the final partial batch.
template <typename T>
class BatchStream {
 public:
  // Keeps a reference to x, which must outlive the stream. Throws
  // ContractError unless 1 <= batch_size <= examples.
  BatchStream(const Tensor<T>& x, std::size_t batch_size, std::uint64_t seed);

  Tensor<T> next();
  const std::vector<std::size_t>& last_indices() const { return last_; }
  std::size_t batches_per_epoch() const { return n_ / batch_; }
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  const Tensor<T>* x_;
  std::size_t n_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> last_;
};

}  // namespace granlab
