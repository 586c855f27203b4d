#include <gtest/gtest.h>

#include "granlab/tensor.hpp"

using namespace granlab;

TEST(Tensor, ShapeProductMatchesElementCount) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_THROW(Tensor<float>({2, 0}), DimensionError);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
}

TEST(Tensor, RowMajorIndexing) {
  Tensor<double> t({2, 3}, std::vector<double>{0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at(1, 2), 5.0);
  EXPECT_EQ(t.at(0, 1), 1.0);
  EXPECT_THROW(t.at(2, 0), DimensionError);
  EXPECT_THROW(t.at(0), DimensionError);
}

TEST(Tensor, ScalarAndItem) {
  auto s = Tensor<float>::scalar(3.5f);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.item(), 3.5f);
  EXPECT_THROW(Tensor<float>({2}).item(), DimensionError);
}

TEST(Tensor, MatmulVariantsAgree) {
  Tensor<double> a({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor<double> b({3, 2}, std::vector<double>{7, 8, 9, 10, 11, 12});
  // [[58, 64], [139, 154]] by hand.
  Tensor<double> expect({2, 2}, std::vector<double>{58, 64, 139, 154});
  EXPECT_EQ(matmul_nn(a, b), expect);
  EXPECT_EQ(matmul_nt(a, transpose2d(b)), expect);
  EXPECT_EQ(matmul_tn(transpose2d(a), b), expect);
  EXPECT_THROW(matmul_nn(a, a), DimensionError);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor<float> t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  auto r = t.reshaped({3, 2});
  EXPECT_EQ(r.at(2, 1), 6.0f);
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}
