#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace granlab {

// One named check of a self-verification suite. `measure` is the worst
// error observed and passes when it is at most `tolerance`.
struct Check {
  std::string name;
  double measure = 0;
  double tolerance = 0;
  bool passed = false;
};

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;

  bool passed() const;
  std::size_t failures() const;
};

// Transpose convolution against the explicit matrix transpose over every
// small 1D case and a grid of 2D cases, plus the strided-vs-upsampled
// identity. Tolerances scale with the precision.
template <typename T>
SuiteResult verify_convoracle();

// Central-difference gradient checks of every layer type and of the full
// T = 3 generator -> discriminator -> generator-loss composition, over
// `seeds` seeds each.
template <typename T>
SuiteResult verify_gradcheck(std::size_t seeds = 5);

// Winner-rule replay of eight reference battles, label-swap
// antisymmetry on random reports and an exact self-battle.
SuiteResult verify_gam();

SuiteResult run_suite(const std::string& name, bool wide);

std::string format_suite(const SuiteResult& r);

}  // namespace granlab
