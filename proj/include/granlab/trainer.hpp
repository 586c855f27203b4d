#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "granlab/gran.hpp"
#include "granlab/optim.hpp"

namespace granlab {

enum class UpdatePolicy { always, conditional };

std::string to_string(UpdatePolicy p);
UpdatePolicy parse_policy(const std::string& s);

struct TrainConfig {
  double lr_d = 2e-4;
  double lr_g = 1e-3;
  std::size_t batch_size = 100;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  UpdatePolicy policy = UpdatePolicy::always;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  // Throws ContractError for non-positive rates or a batch below 2.
  void validate() const;

  AdamConfig adam_d() const { return {lr_d, beta1, beta2, eps}; }
  AdamConfig adam_g() const { return {lr_g, beta1, beta2, eps}; }

  void write(KeyValues& kv, const std::string& prefix = "train.") const;
  static TrainConfig read(const KeyValues& kv, const std::string& prefix = "train.");
};

// Discriminator outputs are clamped to [kProbFloor, 1 - kProbFloor] before
// any logarithm so every loss stays finite.
inline constexpr double kProbFloor = 1e-7;

// Losses on discriminator outputs already on a graph. All three use the
// same two per-batch terms, so value == -d_loss holds bit for bit.
template <typename T>
Var<T> d_loss(Var<T> p_real, Var<T> p_fake);
template <typename T>
Var<T> g_loss(Var<T> p_fake);
template <typename T>
Var<T> minimax_value(Var<T> p_real, Var<T> p_fake);

// The same quantities for a discriminator scored in eval mode.
template <typename T>
double d_loss(Discriminator<T>& disc, const Tensor<T>& x_real, const Tensor<T>& x_fake);
template <typename T>
double g_loss(Discriminator<T>& disc, const Tensor<T>& x_fake);
template <typename T>
double minimax_value(Discriminator<T>& disc, const Tensor<T>& x_real,
                     const Tensor<T>& x_fake);

struct UpdateFlags {
  bool update_d = true;
  bool update_g = true;

  friend bool operator==(const UpdateFlags&, const UpdateFlags&) = default;
};

// Conditional policy, decided per batch by majority: train D while it
// misclassifies most real or most fake samples; train G while D catches
// most fakes.
UpdateFlags update_policy_decide(UpdatePolicy policy, double acc_real, double acc_fake);

struct TrainRow {
  std::size_t iter = 0;
  double d_loss = 0;
  double g_loss = 0;
  double value = 0;
  double acc_real = 0;
  double acc_fake = 0;

  friend bool operator==(const TrainRow&, const TrainRow&) = default;
};

struct TrainTrace {
  std::vector<TrainRow> rows;

  // Header iter,d_loss,g_loss,V,acc_real,acc_fake; reals printed so they
  // read back exactly.
  std::string to_csv() const;
  void save_csv(const std::string& path) const;
};

template <typename T>
struct TrainResult {
  TrainTrace trace;
  AdamState<T> adam_g;
  AdamState<T> adam_d;
};

// Called after every iteration; return false to stop early.
using TrainCallback = std::function<bool(const TrainRow&)>;

/// Alternating adversarial training on examples x_real ([N, canvas...],
/// values in [0, 1]). Each iteration draws one real batch and one noise
/// batch, takes a discriminator step on real vs generated samples and then
/// a generator step that backpropagates through the discriminator and
/// every unrolled generator step. Bit-identical for a fixed seed. Throws
/// TrainingError naming the iteration if a loss becomes non-finite.
template <typename T>
TrainResult<T> train(GranGenerator<T>& gen, Discriminator<T>& disc,
                     const Tensor<T>& x_real, const TrainConfig& config,
                     const TrainCallback& callback = {});

// Fraction of scores at or above 0.5 (real) or below it (fake).
template <typename T>
double fraction_real(const Tensor<T>& scores);

}  // namespace granlab
