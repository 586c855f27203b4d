#include "granlab/presets.hpp"

#include "granlab/error.hpp"

namespace granlab {

DatasetSpec DatasetSpec::parse(const std::string& text) {
  if (text == "ring") return {DatasetKind::ring, {}};
  if (text == "shapes") return {DatasetKind::shapes, {}};
  if (text.starts_with("mnist:") && text.size() > 6) {
    return {DatasetKind::mnist, text.substr(6)};
  }
  throw UsageError("unknown dataset '" + text + "'; expected mnist:PATH, ring or shapes");
}

std::string DatasetSpec::to_string() const {
  switch (kind) {
    case DatasetKind::ring: return "ring";
    case DatasetKind::shapes: return "shapes";
    case DatasetKind::mnist: return "mnist:" + path;
  }
  return "?";
}

template <typename T>
DataSplits<T> load_dataset(const DatasetSpec& spec, std::uint64_t data_seed) {
  DataSplits<T> out;
  switch (spec.kind) {
    case DatasetKind::ring: {
      auto ring = gen_gaussian_ring<T>(kRingModes, kRingRadius, kRingSigma, kRingCount, data_seed);
      std::tie(out.train, out.test) = split_dataset(ring.data, kRingTest);
      out.means = ring.means;
      out.sigma = ring.sigma;
      break;
    }
    case DatasetKind::shapes:
      std::tie(out.train, out.test) =
          split_dataset(gen_shapes<T>(kShapesSize, kShapesCount, data_seed).data, kShapesTest);
      break;
    case DatasetKind::mnist:
      out.train = load_idx<T>(spec.path + "/train-images-idx3-ubyte");
      out.test = load_idx<T>(spec.path + "/t10k-images-idx3-ubyte");
      out.test.split = Split::test;
      break;
  }
  return out;
}

Preset make_preset(DatasetKind kind, std::size_t steps, NoiseMode noise) {
  Preset p;
  GranConfig& g = p.gen;
  switch (kind) {
    case DatasetKind::ring:
      g.steps = steps;
      g.z_dim = 4;
      g.hz_dim = 16;
      g.hc_dim = 16;
      g.arch = Arch::dense;
      g.canvas = {2};
      g.hidden = {32, 32};
      g.batch_norm = false;
      g.init_std = 0.1;
      p.train.lr_d = 2e-4;
      p.train.lr_g = 2e-4;
      p.train.iterations = 20000;
      break;
    case DatasetKind::shapes:
      g.steps = steps;
      g.z_dim = 16;
      g.hz_dim = 32;
      g.hc_dim = 32;
      g.arch = Arch::conv;
      g.canvas = {1, kShapesSize, kShapesSize};
      g.base = {32, 2, 2};
      g.ladder = {{16, 4, 2, 1, 0}, {1, 4, 2, 1, 0}};
      g.batch_norm = true;
      g.init_std = 0.02;
      p.train.lr_d = 2e-4;
      p.train.lr_g = 1e-3;
      // With "always" the discriminator runs away (real accuracy ~0.95).
      p.train.policy = UpdatePolicy::conditional;
      p.train.iterations = 3000;
      break;
    case DatasetKind::mnist:
      g = mnist_config(steps);
      p.train.iterations = 10000;
      break;
  }
  g.noise_mode = noise;
  p.disc = mirror_discriminator(g);
  p.train.batch_size = 100;
  return p;
}

template <typename T>
Coverage mode_coverage(const Tensor<T>& points, const std::vector<std::array<double, 2>>& means,
                       double sigma, double min_fraction) {
  if (points.rank() != 2 || points.dim(1) != 2) {
    throw DimensionError("mode coverage needs [N, 2] points, got " + shape_string(points.shape()));
  }
  const std::size_t n = points.dim(0);
  Coverage c;
  c.counts.assign(means.size(), 0);
  const double r2 = 9 * sigma * sigma;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < means.size(); ++k) {
      const double dx = static_cast<double>(points[2 * i]) - means[k][0];
      const double dy = static_cast<double>(points[2 * i + 1]) - means[k][1];
      if (dx * dx + dy * dy <= r2) ++c.counts[k];
    }
  }
  for (std::size_t k : c.counts) c.covered += static_cast<double>(k) >= min_fraction * n;
  return c;
}

#define GRANLAB_INSTANTIATE(T)                                                             \
  template DataSplits<T> load_dataset(const DatasetSpec&, std::uint64_t);                  \
  template Coverage mode_coverage(const Tensor<T>&, const std::vector<std::array<double, 2>>&, \
                                  double, double);

GRANLAB_INSTANTIATE(float)
GRANLAB_INSTANTIATE(double)
#undef GRANLAB_INSTANTIATE

}  // namespace granlab
