#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "granlab/gradcheck.hpp"
#include "granlab/layers.hpp"
#include "oracles.hpp"

using namespace granlab;

using GraphD = Graph<double>;

namespace {

Tensor<double> eval_dense(const DenseLayer<double>& layer, const Tensor<double>& x) {
  GraphD g;
  return layer.forward(g, g.constant(x)).value();
}

Var<double> weighted_sum(GraphD& g, Var<double> y) {
  std::mt19937_64 rng(77);
  auto w = oracle::random_tensor(y.shape(), rng);
  return ag::sum(ag::mul(y, g.constant(std::move(w))));
}

}  // namespace

TEST(Dense, IdentityWeightsPassThrough) {
  DenseLayer<double> layer{Tensor<double>({3, 3}), Tensor<double>::zeros({3}),
                           Activation::linear()};
  for (std::size_t i = 0; i < 3; ++i) layer.weight.at(i, i) = 1.0;
  Tensor<double> x({2, 3}, std::vector<double>{1, -2, 3, 0.5, 0, -4});
  EXPECT_EQ(eval_dense(layer, x), x);
}

TEST(Dense, ZeroWeightsGiveBias) {
  DenseLayer<double> layer{Tensor<double>({2, 3}), Tensor<double>::vector({1.5, -2}),
                           Activation::linear()};
  Tensor<double> x({4, 3}, 7.0);
  auto y = eval_dense(layer, x);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(y.at(i, 0), 1.5);
    EXPECT_EQ(y.at(i, 1), -2.0);
  }
}

TEST(Dense, MatchesNaiveLoop) {
  std::mt19937_64 rng(1);
  DenseLayer<double> layer{oracle::random_tensor({3, 2}, rng), oracle::random_tensor({3}, rng),
                           Activation::tanh()};
  auto x = oracle::random_tensor({5, 2}, rng);
  auto y = eval_dense(layer, x);
  for (std::size_t n = 0; n < 5; ++n)
    for (std::size_t o = 0; o < 3; ++o) {
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < 2; ++i) acc += layer.weight.at(o, i) * x.at(n, i);
      EXPECT_NEAR(y.at(n, o), std::tanh(acc), 1e-15);
    }
  GraphD g;
  EXPECT_THROW(layer.forward(g, g.constant(Tensor<double>({5, 3}))), DimensionError);
}

TEST(ConvLayerTest, IdentityKernelSingleMap) {
  std::mt19937_64 rng(2);
  ConvLayer<double> layer{Tensor<double>({1, 1, 1, 1}, 1.0), Tensor<double>::zeros({1}),
                          ConvSpec::valid(), Activation::linear()};
  auto x = oracle::random_tensor({2, 1, 4, 4}, rng);
  GraphD g;
  EXPECT_EQ(layer.forward(g, g.constant(x)).value(), x);
}

TEST(ConvLayerTest, SumsOverInputMaps) {
  std::mt19937_64 rng(3);
  auto kernels = oracle::random_tensor({1, 2, 3, 3}, rng);
  ConvLayer<double> layer{kernels, Tensor<double>::vector({0.25}), ConvSpec::padded(1),
                          Activation::linear()};
  auto x = oracle::random_tensor({1, 2, 5, 5}, rng);
  GraphD g;
  auto y = layer.forward(g, g.constant(x)).value();
  // Per-map oracle: convolve each map with its own kernel, then add.
  Tensor<double> x1({1, 5, 5}), x2({1, 5, 5}), k1({1, 1, 3, 3}), k2({1, 1, 3, 3});
  std::copy_n(x.data().data(), 25, x1.data().data());
  std::copy_n(x.data().data() + 25, 25, x2.data().data());
  std::copy_n(kernels.data().data(), 9, k1.data().data());
  std::copy_n(kernels.data().data() + 9, 9, k2.data().data());
  auto c1 = conv(x1, k1, ConvSpec::padded(1));
  auto c2 = conv(x2, k2, ConvSpec::padded(1));
  for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(y[i], c1[i] + c2[i] + 0.25, 1e-14);
}

TEST(Activations, LeakyReluDefinition) {
  GraphD g;
  auto y = activate(g.constant(Tensor<double>::vector({-1.0, 2.0})), Activation::leaky(0.2));
  EXPECT_DOUBLE_EQ(y.value()[0], -0.2);
  EXPECT_DOUBLE_EQ(y.value()[1], 2.0);
}

TEST(Activations, LeakyReluLimits) {
  std::mt19937_64 rng(4);
  auto x = oracle::random_tensor({50}, rng, -3, 3);
  GraphD g;
  auto xv = g.constant(x);
  EXPECT_EQ(activate(xv, Activation::leaky(1.0)).value(), x);
  auto tiny = activate(xv, Activation::leaky(1e-12)).value();
  auto relu = activate(xv, Activation::relu()).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(tiny[i], relu[i], 1e-11);
}

TEST(BatchNorm, ConstantBatchNormalizesToZero) {
  auto bn = BatchNormLayer<double>::init(2);
  GraphD g;
  auto y = bn.forward(g, g.constant(Tensor<double>({4, 2}, 3.0)), Mode::train).value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, PlusMinusOneClosedForm) {
  auto bn = BatchNormLayer<double>::init(1);
  GraphD g;
  auto y = bn.forward(g, g.constant(Tensor<double>({2, 1}, std::vector<double>{-1, 1})),
                      Mode::train)
               .value();
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y[0], -expect, 1e-15);
  EXPECT_NEAR(y[1], expect, 1e-15);
}

TEST(BatchNorm, EvalWithUnitStatsIsIdentity) {
  std::mt19937_64 rng(5);
  auto bn = BatchNormLayer<double>::init(3);
  auto x = oracle::random_tensor({5, 3, 2, 2}, rng);
  GraphD g;
  auto y = bn.forward(g, g.constant(x), Mode::eval).value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(y[i], x[i] / std::sqrt(1.0 + 1e-5), 1e-15);
  }
}

TEST(BatchNorm, TrainOutputStandardizedAndRunningStatsUpdated) {
  std::mt19937_64 rng(6);
  auto bn = BatchNormLayer<double>::init(2);
  auto x = oracle::random_tensor({16, 2, 3, 3}, rng, -4, 9);
  GraphD g;
  auto y = bn.forward(g, g.constant(x), Mode::train).value();
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t n = 0; n < 16; ++n)
      for (std::size_t k = 0; k < 9; ++k) {
        const double v = y[(n * 2 + c) * 9 + k];
        s += v;
        s2 += v * v;
      }
    const double mean = s / 144, var = s2 / 144 - mean * mean;
    EXPECT_NEAR(mean, 0.0, 1e-3);
    EXPECT_NEAR(var, 1.0, 1e-3);
    EXPECT_GE(bn.running_var[c], 0.0);
    EXPECT_NE(bn.running_mean[c], 0.0);
  }
}

TEST(BatchNorm, SingleSampleTrainBatchRejected) {
  auto bn = BatchNormLayer<double>::init(2);
  GraphD g;
  EXPECT_THROW(bn.forward(g, g.constant(Tensor<double>({1, 2})), Mode::train), ContractError);
}

TEST(ConvTransposeLayerTest, StrideGrowsSpatialSize) {
  Rng rng(7);
  for (std::size_t k : {2u, 3u, 5u})
    for (std::size_t s : {1u, 2u, 3u}) {
      auto layer = ConvTransposeLayer<double>::init(2, 3, k, ConvSpec::valid(s),
                                                    Activation::relu(), rng);
      GraphD g;
      auto y = layer.forward(g, g.constant(Tensor<double>({1, 2, 4, 4}, 1.0)));
      EXPECT_GT(y.shape()[2], 4u);
      EXPECT_EQ(y.shape()[1], 3u);
    }
}

TEST(LayerGradCheck, AllLayerTypesPassParametersAndInputs) {
  Rng rng(8);
  std::mt19937_64 xr(9);
  auto dense = DenseLayer<double>::init(3, 4, Activation::tanh(), rng, 0.5);
  auto convl = ConvLayer<double>::init(2, 3, 3, ConvSpec::padded(1, 2), Activation::leaky(0.2), rng, 0.5);
  auto convt = ConvTransposeLayer<double>::init(3, 2, 5, ConvSpec::padded(2, 2, 1),
                                                Activation::sigmoid(), rng, 0.5);
  auto bn = BatchNormLayer<double>::init(3);
  bn.gamma = oracle::random_tensor({3}, xr, 0.5, 1.5);
  bn.beta = oracle::random_tensor({3}, xr);
  dense.bias = oracle::random_tensor({4}, xr);
  convl.bias = oracle::random_tensor({3}, xr);
  convt.bias = oracle::random_tensor({2}, xr);

  auto xd = oracle::random_tensor({5, 3}, xr);
  std::vector<Tensor<double>*> wrt{&xd, &dense.weight, &dense.bias};
  EXPECT_LT(grad_check_params<double>(
                [&](GraphD& g) { return weighted_sum(g, dense.forward(g, g.parameter(xd))); }, wrt,
                1e-5),
            1e-5);

  auto xc = oracle::random_tensor({2, 2, 6, 6}, xr);
  wrt = {&xc, &convl.kernels, &convl.bias};
  EXPECT_LT(grad_check_params<double>(
                [&](GraphD& g) { return weighted_sum(g, convl.forward(g, g.parameter(xc))); }, wrt,
                1e-5),
            1e-5);

  auto xt = oracle::random_tensor({2, 3, 3, 3}, xr);
  wrt = {&xt, &convt.kernels, &convt.bias};
  EXPECT_LT(grad_check_params<double>(
                [&](GraphD& g) { return weighted_sum(g, convt.forward(g, g.parameter(xt))); }, wrt,
                1e-5),
            1e-5);

  auto xb = oracle::random_tensor({4, 3, 2, 2}, xr);
  wrt = {&xb, &bn.gamma, &bn.beta};
  for (Mode mode : {Mode::train, Mode::eval}) {
    EXPECT_LT(grad_check_params<double>(
                  [&](GraphD& g) { return weighted_sum(g, bn.forward(g, g.parameter(xb), mode)); },
                  wrt, 1e-5),
              1e-5);
  }
}
