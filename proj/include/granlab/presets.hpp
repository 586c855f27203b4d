#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "granlab/data.hpp"
#include "granlab/gran.hpp"
#include "granlab/trainer.hpp"

namespace granlab {

enum class DatasetKind { mnist, ring, shapes };

// "mnist:DIR", "ring" or "shapes". DIR holds the standard IDX files
// train-images-idx3-ubyte and t10k-images-idx3-ubyte.
struct DatasetSpec {
  DatasetKind kind = DatasetKind::ring;
  std::string path;

  // Throws UsageError for anything else.
  static DatasetSpec parse(const std::string& text);
  std::string to_string() const;
};

// Synthetic data sizes. The data seed is separate from the model seed so
// independently trained models see the same examples.
inline constexpr std::size_t kRingModes = 8;
inline constexpr double kRingRadius = 2.0;
inline constexpr double kRingSigma = 0.2;
inline constexpr std::size_t kRingCount = 12000;
inline constexpr std::size_t kRingTest = 2000;
inline constexpr std::size_t kShapesSize = 8;
inline constexpr std::size_t kShapesCount = 6000;
inline constexpr std::size_t kShapesTest = 1000;
inline constexpr std::uint64_t kDefaultDataSeed = 4242;

template <typename T>
struct DataSplits {
  Dataset<T> train;
  Dataset<T> test;
  // Ring only: scaled mode means and sigma.
  std::vector<std::array<double, 2>> means;
  double sigma = 0;
};

template <typename T>
DataSplits<T> load_dataset(const DatasetSpec& spec, std::uint64_t data_seed);

struct Preset {
  GranConfig gen;
  DiscriminatorConfig disc;
  TrainConfig train;
};

// Model and optimiser settings per dataset. Ring is a dense ladder on 2D
// points; shapes an 8x8 two-layer conv ladder; mnist the 28x28 ladder.
Preset make_preset(DatasetKind kind, std::size_t steps, NoiseMode noise = NoiseMode::shared);

// Initialisation seeds derived from one run seed.
inline std::uint64_t gen_init_seed(std::uint64_t seed) { return 2 * seed + 1; }
inline std::uint64_t disc_init_seed(std::uint64_t seed) { return 2 * seed + 2; }

// Modes with at least `min_fraction` of the points within 3 sigma of the
// mean, plus the per-mode counts.
struct Coverage {
  std::size_t covered = 0;
  std::vector<std::size_t> counts;
};
template <typename T>
Coverage mode_coverage(const Tensor<T>& points, const std::vector<std::array<double, 2>>& means,
                       double sigma, double min_fraction = 0.02);

}  // namespace granlab
