#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "granlab/gran.hpp"
#include "granlab/kv.hpp"

namespace granlab {

enum class Truth { real, fake };

// Score >= 0.5 counts as a "real" prediction.
inline constexpr double kDecisionThreshold = 0.5;

template <typename T>
struct ModelPair {
  GranGenerator<T>& gen;
  Discriminator<T>& disc;
  std::string label;
};

// Fraction of scores on the wrong side of the threshold for the given
// truth. Throws ContractError for an empty score set.
template <typename T>
double error_rate(const Tensor<T>& scores, Truth truth);
// Scores `samples` ([N, input...]) in eval mode, in chunks.
template <typename T>
double error_rate(Discriminator<T>& disc, const Tensor<T>& samples, Truth truth);

// n samples from one shared-seed noise draw, in chunks so large n does not
// build one huge graph. Identical to generate(gen, n, seed).canvas.
template <typename T>
Tensor<T> generate_samples(GranGenerator<T>& gen, std::size_t n, std::uint64_t seed);

struct BattleReport {
  std::string label_m1 = "M1";
  std::string label_m2 = "M2";
  double err_d1_train = 0;
  double err_d1_test = 0;
  double err_d1_g2 = 0;  // D1 on samples of G2
  double err_d2_train = 0;
  double err_d2_test = 0;
  double err_d2_g1 = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;

  // The same battle with M1 and M2 exchanged.
  BattleReport swapped() const;
  friend bool operator==(const BattleReport&, const BattleReport&) = default;
};

/// Both generators draw n samples from the same z seed; each discriminator
/// is scored on the train and test reals and on the other generator's
/// samples. Throws ContractError naming the pair when shapes disagree.
template <typename T>
BattleReport battle(ModelPair<T> m1, ModelPair<T> m2, const Tensor<T>& x_train,
                    const Tensor<T>& x_test, std::size_t n, std::uint64_t seed);

// A ratio with a zero denominator.
class UndefinedRatio : public Error {
 public:
  using Error::Error;
};

struct Ratios {
  double r_test = 0;
  double r_sample = 0;
};

// r_test = err_d1_test / err_d2_test, r_sample = err_d1_g2 / err_d2_g1.
// Throws UndefinedRatio when a denominator is zero.
Ratios ratios(const BattleReport& report);

enum class Winner { m1, m2, tie };
std::string to_string(Winner w);

inline constexpr double kDefaultDelta = 0.3;

struct GamVerdict {
  Winner winner = Winner::tie;
  double r_test = 0;
  double r_sample = 0;
  double delta = kDefaultDelta;
  std::string diagnostic;  // set when the ratios were undefined
};

// M1 if r_sample < 1, M2 if r_sample > 1, in both cases only when r_test
// is close to 1: |r_test - 1| <= delta and also 1/r_test <= 1 + delta, so
// the gate does not depend on which model is called M1. Otherwise a tie.
// Throws ContractError for negative or non-finite ratios or a negative
// delta.
GamVerdict verdict(double r_test, double r_sample, double delta = kDefaultDelta);
// From a report; undefined ratios give a tie with a diagnostic.
GamVerdict judge(const BattleReport& report, double delta = kDefaultDelta);

// Flat key=value form of a report and its verdict.
KeyValues report_kv(const BattleReport& report, const GamVerdict& v);

// Samples for cross-model evaluation: a GRN1 container holding a tensor
// named "samples", or a PGM/PPM file or directory. Throws FormatError or
// ParseError for malformed input.
template <typename T>
Tensor<T> load_samples(const std::string& path);
template <typename T>
void save_samples(const std::string& path, const Tensor<T>& samples);

// Fraction of external samples the discriminator fails to flag as fake.
// Throws DimensionError when the samples do not fit its input.
template <typename T>
double cross_model_error(Discriminator<T>& disc, const Tensor<T>& samples);

}  // namespace granlab
