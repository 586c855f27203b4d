#include <gtest/gtest.h>

#include <random>

#include "granlab/conv.hpp"
#include "oracles.hpp"

using namespace granlab;

namespace {

Tensor<double> row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>({1, n}, std::move(v));
}

Tensor<double> kernel1d(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>({1, 1, n}, std::move(v));
}

}  // namespace

TEST(Conv, OneDimensionalExampleMatchesNaiveSum) {
  const std::vector<double> expect = oracle::naive_conv1d({1, 2, 3, 4}, {1, 0, -1}, 1, 0);
  ASSERT_EQ(expect, (std::vector<double>{-2, -2}));
  auto out = conv(row({1, 2, 3, 4}), kernel1d({1, 0, -1}), ConvSpec::valid());
  EXPECT_EQ(out.shape(), (Shape{1, 2}));
  EXPECT_EQ(out.values(), expect);
}

TEST(Conv, IdentityAndZeroKernels) {
  std::mt19937_64 rng(7);
  auto x = oracle::random_tensor({1, 9}, rng);
  EXPECT_EQ(conv(x, kernel1d({1}), ConvSpec::valid()), x);
  auto z = conv(x, kernel1d({0, 0, 0}), ConvSpec::valid());
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv, MatchesNaiveOracleOverStridesAndPadding) {
  std::mt19937_64 rng(11);
  for (std::size_t len = 1; len <= 9; ++len)
    for (std::size_t k = 1; k <= 4; ++k)
      for (std::size_t s = 1; s <= 3; ++s)
        for (std::size_t p = 0; p <= 2; ++p) {
          if (len + 2 * p < k) continue;
          auto x = oracle::random_tensor({1, len}, rng);
          auto w = oracle::random_tensor({1, 1, k}, rng);
          auto expect = oracle::naive_conv1d(x.values(), w.values(), s, p);
          auto got = conv(x, w, ConvSpec::padded(p, s));
          ASSERT_EQ(got.size(), expect.size());
          for (std::size_t i = 0; i < expect.size(); ++i) {
            EXPECT_NEAR(got[i], expect[i], 1e-12);
          }
        }
}

TEST(Conv, ShapeMismatchNamesBothShapes) {
  Tensor<double> x({2, 5});
  Tensor<double> w({1, 3, 3});
  try {
    conv(x, w, ConvSpec::valid());
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,5]"), std::string::npos);
    EXPECT_NE(msg.find("[1,3,3]"), std::string::npos);
  }
  EXPECT_THROW(conv(Tensor<double>({1, 2}), kernel1d({1, 1, 1}), ConvSpec::valid()),
               DimensionError);
}

TEST(ConvAsMatrix, FirstDifferenceKernel) {
  auto m = conv_as_matrix(kernel1d({1, 0, -1}), {1, 4}, ConvSpec::valid());
  Tensor<double> expect({2, 4}, std::vector<double>{1, 0, -1, 0, 0, 1, 0, -1});
  EXPECT_EQ(m, expect);
}

TEST(ConvAsMatrix, IdentityKernelGivesIdentity) {
  auto m = conv_as_matrix(kernel1d({1}), {1, 5}, ConvSpec::valid());
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(m.at(r, c), r == c ? 1.0 : 0.0);
}

TEST(ConvAsMatrix, StrideTwoRowsOffsetByTwo) {
  auto w = kernel1d({2, 3, 5});
  auto m = conv_as_matrix(w, {1, 5}, ConvSpec::valid(2));
  auto probed = oracle::probe_matrix(
      [&](const Tensor<double>& x) { return conv(x, w, ConvSpec::valid(2)); }, {1, 5});
  ASSERT_EQ(m.shape(), (Shape{2, 5}));
  EXPECT_EQ(m, probed);
  EXPECT_EQ(m.values(), (std::vector<double>{2, 3, 5, 0, 0, 0, 0, 2, 3, 5}));
}

TEST(ConvAsMatrix, MatchesBasisProbingIn2D) {
  std::mt19937_64 rng(3);
  for (std::size_t s = 1; s <= 3; ++s)
    for (std::size_t p = 0; p <= 1; ++p) {
      auto w = oracle::random_tensor({2, 3, 3, 2}, rng);
      const Shape in{3, 5, 6};
      const ConvSpec spec = ConvSpec::padded(p, s);
      auto m = conv_as_matrix(w, in, spec);
      auto probed = oracle::probe_matrix(
          [&](const Tensor<double>& x) { return conv(x, w, spec); }, in);
      EXPECT_LT(max_abs_diff(m, probed), 1e-15);
    }
}

TEST(ConvAsMatrix, CapacityGuard) {
  Tensor<double> w({1, 1, 3, 3}, 1.0);
  EXPECT_THROW(conv_as_matrix(w, {1, 40, 40}, ConvSpec::valid()), CapacityError);
}

TEST(ZeroUpsample, InterleavesZeros) {
  auto up = zero_upsample(Tensor<double>::vector({1, 2, 3}), 2);
  EXPECT_EQ(up.values(), (std::vector<double>{1, 0, 2, 0, 3, 0}));
  auto single = zero_upsample(Tensor<double>::vector({5}), 3);
  EXPECT_EQ(single.values(), (std::vector<double>{5, 0, 0}));
  std::mt19937_64 rng(1);
  auto x = oracle::random_tensor({2, 3, 4}, rng);
  EXPECT_EQ(zero_upsample(x, 1, 2), x);
}

TEST(ZeroUpsample, TwoSpatialAxes) {
  Tensor<double> x({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  auto up = zero_upsample(x, 2, 2);
  EXPECT_EQ(up.shape(), (Shape{1, 4, 4}));
  EXPECT_EQ(up.values(), (std::vector<double>{1, 0, 2, 0, 0, 0, 0, 0,
                                              3, 0, 4, 0, 0, 0, 0, 0}));
}

TEST(ConvTranspose, UnitInputReproducesKernel) {
  auto out = conv_transpose(row({1}), kernel1d({1, 2, 3}), ConvSpec::valid());
  EXPECT_EQ(out.values(), (std::vector<double>{1, 2, 3}));
}

TEST(ConvTranspose, IdentityKernel) {
  std::mt19937_64 rng(5);
  auto x = oracle::random_tensor({1, 6}, rng);
  EXPECT_EQ(conv_transpose(x, kernel1d({1}), ConvSpec::valid()), x);
}

TEST(ConvTranspose, StrideTwoMatchesMatrixTranspose) {
  const auto w = kernel1d({1, 1, 1});
  const auto m = conv_as_matrix(w, {1, 5}, ConvSpec::valid(2));
  const auto expect = oracle::transpose_apply(m, row({1, 1}));
  ASSERT_EQ(expect, (std::vector<double>{1, 1, 2, 1, 1}));
  auto out = conv_transpose(row({1, 1}), w, ConvSpec::valid(2));
  EXPECT_EQ(out.values(), expect);
}

TEST(ConvTranspose, OutputPaddingReachesEvenSizes) {
  std::mt19937_64 rng(9);
  auto w = oracle::random_tensor({1, 1, 5, 5}, rng);
  const ConvSpec spec = ConvSpec::padded(2, 2, 1);
  auto y = oracle::random_tensor({1, 7, 7}, rng);
  auto out = conv_transpose(y, w, spec);
  EXPECT_EQ(out.shape(), (Shape{1, 14, 14}));
  // Still the adjoint of the forward conv on a 14x14 input.
  auto m = conv_as_matrix(w, {1, 14, 14}, spec);
  auto expect = oracle::transpose_apply(m, y);
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(out[i], expect[i], 1e-12);
  EXPECT_THROW(conv_transpose(y, w, ConvSpec::padded(2, 2, 2)), DimensionError);
}

TEST(ConvTranspose, BatchedEqualsPerSample) {
  std::mt19937_64 rng(2);
  auto w = oracle::random_tensor({3, 2, 3, 3}, rng);
  auto x = oracle::random_tensor({4, 3, 3, 3}, rng);
  const ConvSpec spec = ConvSpec::padded(1, 2);
  auto batched = conv_transpose(x, w, spec);
  for (std::size_t n = 0; n < 4; ++n) {
    Tensor<double> xn({3, 3, 3});
    std::copy_n(x.data().data() + n * 27, 27, xn.data().data());
    auto single = conv_transpose(xn, w, spec);
    for (std::size_t i = 0; i < single.size(); ++i) {
      EXPECT_EQ(batched[n * single.size() + i], single[i]);
    }
  }
}
