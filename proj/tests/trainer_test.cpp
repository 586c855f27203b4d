#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "granlab/data.hpp"
#include "granlab/gradcheck.hpp"
#include "granlab/trainer.hpp"
#include "oracles.hpp"
#include "test_models.hpp"

using namespace granlab;
using granlab::testing::small_conv_config;
using granlab::testing::small_dense_config;

namespace {

constexpr double kLog2 = std::numbers::ln2;

double d_loss_of(const std::vector<double>& real, const std::vector<double>& fake) {
  Graph<double> g;
  auto r = g.constant(Tensor<double>({real.size(), 1}, real));
  auto f = g.constant(Tensor<double>({fake.size(), 1}, fake));
  return d_loss(r, f).value().item();
}

double value_of(const std::vector<double>& real, const std::vector<double>& fake) {
  Graph<double> g;
  auto r = g.constant(Tensor<double>({real.size(), 1}, real));
  auto f = g.constant(Tensor<double>({fake.size(), 1}, fake));
  return minimax_value(r, f).value().item();
}

double g_loss_of(const std::vector<double>& fake) {
  Graph<double> g;
  return g_loss(g.constant(Tensor<double>({fake.size(), 1}, fake))).value().item();
}

// Straight from the definition, with the same clamp.
double clamped_log(double p) {
  return std::log(std::clamp(p, kProbFloor, 1.0 - kProbFloor));
}

}  // namespace

TEST(Losses, PerfectDiscriminatorCostsNothing) {
  // The clamp leaves -2 log(1 - 1e-7) ~ 2e-7 instead of an exact zero.
  EXPECT_NEAR(d_loss_of({1, 1}, {0, 0}), 0.0, 1e-6);
  EXPECT_NEAR(value_of({1, 1}, {0, 0}), 0.0, 1e-6);
  EXPECT_NEAR(g_loss_of({1, 1, 1}), 0.0, 1e-6);
}

TEST(Losses, UndecidedDiscriminator) {
  EXPECT_NEAR(d_loss_of({0.5, 0.5}, {0.5, 0.5}), 2 * kLog2, 1e-15);
  EXPECT_NEAR(value_of({0.5, 0.5}, {0.5, 0.5}), -2 * kLog2, 1e-15);
  EXPECT_NEAR(g_loss_of({0.5}), kLog2, 1e-15);
}

TEST(Losses, MatchScalarLoops) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> real(7), fake(7);
    for (auto& v : real) v = u(rng);
    for (auto& v : fake) v = u(rng);
    double a = 0, b = 0, c = 0;
    for (double p : real) a += clamped_log(p);
    for (double p : fake) b += clamped_log(1.0 - p);
    for (double p : fake) c += clamped_log(p);
    EXPECT_NEAR(d_loss_of(real, fake), -(a + b) / 7.0, 1e-14);
    EXPECT_NEAR(g_loss_of(fake), -c / 7.0, 1e-14);
  }
}

TEST(Losses, ValueIsExactlyNegatedDiscriminatorLoss) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> real(13), fake(13);
    for (auto& v : real) v = u(rng);
    for (auto& v : fake) v = u(rng);
    EXPECT_EQ(value_of(real, fake), -d_loss_of(real, fake));
  }
  auto disc = Discriminator<float>::init(mirror_discriminator(small_conv_config(1)), 1);
  auto real = gen_shapes<float>(8, 6, 1).data.x;
  auto fake = gen_shapes<float>(8, 6, 2).data.x;
  EXPECT_EQ(minimax_value(disc, real, fake), -d_loss(disc, real, fake));
}

TEST(Losses, FiniteAtProbabilityExtremes) {
  for (double p : {0.0, 1e-300, 0.5, 1.0 - 1e-16, 1.0}) {
    EXPECT_TRUE(std::isfinite(d_loss_of({p}, {p})));
    EXPECT_TRUE(std::isfinite(g_loss_of({p})));
    EXPECT_TRUE(std::isfinite(value_of({p}, {1.0 - p})));
  }
}

TEST(Losses, NonSaturatingGeneratorGradientPointsTheSameWay) {
  // G(theta) = theta, D(x) = sigmoid(a x + b) held fixed.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = u(rng), b = u(rng), theta = u(rng);
    auto d_of = [&](double x) { return oracle::logistic(a * x + b); };
    const double saturating = oracle::central_difference(
        [&](double t) { return std::log(1.0 - d_of(t)); }, theta, 1e-6);
    const double nonsaturating = oracle::central_difference(
        [&](double t) { return -std::log(d_of(t)); }, theta, 1e-6);
    EXPECT_EQ(std::signbit(saturating), std::signbit(nonsaturating));

    // The library's g_loss gradient agrees with the finite difference.
    Tensor<double> th({1, 1}, theta);
    Graph<double> g;
    auto x = g.parameter(th);
    auto p = ag::sigmoid(ag::add_scalar(ag::scale(x, a), b));
    g.backward(g_loss(p));
    EXPECT_NEAR(g.grad_of(th).item(), nonsaturating, 1e-6);
    EXPECT_NE(g.grad_of(th).item(), 0.0);
  }
}

TEST(Losses, GradientsThroughUnrolledGeneratorAndDiscriminator) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto c = small_conv_config(3);
    auto gen = GranGenerator<double>::init(c, seed);
    auto dc = mirror_discriminator(c);
    dc.init_std = 0.3;
    auto disc = Discriminator<double>::init(dc, seed + 50);
    auto z = draw_noise<double>(c, 3, seed);
    auto real = gen_shapes<double>(8, 3, seed).data.x;
    std::mt19937_64 rng(seed);
    std::vector<Tensor<double>*> g_wrt, d_wrt;
    for (auto& [name, t] : gen.parameters()) {
      if (name.ends_with(".bias")) *t = oracle::random_tensor(t->shape(), rng, -0.5, 0.5);
      g_wrt.push_back(t);
    }
    for (auto& [name, t] : disc.parameters()) {
      if (name.ends_with(".bias")) *t = oracle::random_tensor(t->shape(), rng, -0.5, 0.5);
      d_wrt.push_back(t);
    }
    std::function<Var<double>(Graph<double>&)> gen_side = [&](Graph<double>& g) {
      auto out = generate(g, gen, z, Mode::train);
      return g_loss(disc.forward(g, out.canvas, Mode::train));
    };
    EXPECT_LT(grad_check_params<double>(gen_side, g_wrt, 1e-6), 1e-4) << seed;
    std::function<Var<double>(Graph<double>&)> disc_side = [&](Graph<double>& g) {
      auto fake = generate(g, gen, z, Mode::train).canvas;
      return d_loss(disc.forward(g, g.constant(real), Mode::train),
                    disc.forward(g, fake, Mode::train));
    };
    EXPECT_LT(grad_check_params<double>(disc_side, d_wrt, 1e-6), 1e-4) << seed;
  }
}

TEST(Policy, Cases) {
  EXPECT_EQ(update_policy_decide(UpdatePolicy::conditional, 1.0, 1.0),
            (UpdateFlags{false, true}));
  EXPECT_EQ(update_policy_decide(UpdatePolicy::conditional, 0.0, 0.0),
            (UpdateFlags{true, false}));
  EXPECT_EQ(update_policy_decide(UpdatePolicy::conditional, 0.9, 0.2),
            (UpdateFlags{true, false}));
  EXPECT_EQ(update_policy_decide(UpdatePolicy::conditional, 0.2, 0.9),
            (UpdateFlags{true, true}));
  EXPECT_EQ(update_policy_decide(UpdatePolicy::conditional, 0.5, 0.5),
            (UpdateFlags{false, true}));
  for (double a : {0.0, 0.5, 1.0})
    for (double b : {0.0, 0.5, 1.0})
      EXPECT_EQ(update_policy_decide(UpdatePolicy::always, a, b), (UpdateFlags{true, true}));
}

TEST(Adam, ZeroGradientLeavesParametersAlone) {
  std::mt19937_64 rng(1);
  Tensor<double> p = oracle::random_tensor({3, 4}, rng);
  const Tensor<double> before = p;
  std::vector<Tensor<double>*> params{&p};
  auto state = AdamState<double>::zeros_like(params);
  std::vector<Tensor<double>> grads{Tensor<double>({3, 4})};
  adam_step<double>(state, params, grads, AdamConfig{});
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepMovesBySignTimesRate) {
  Tensor<double> p = Tensor<double>::vector({1.0, -2.0, 0.5});
  std::vector<Tensor<double>*> params{&p};
  auto state = AdamState<double>::zeros_like(params);
  std::vector<Tensor<double>> grads{Tensor<double>::vector({0.3, -4.0, 1e-3})};
  AdamConfig c{0.01, 0.5, 0.999, 1e-8};
  adam_step<double>(state, params, grads, c);
  // m_hat = g and v_hat = g^2 after one step, so the move is lr g/(|g|+eps).
  const double expect[] = {1.0 - 0.01 * 0.3 / (0.3 + 1e-8),
                           -2.0 + 0.01 * 4.0 / (4.0 + 1e-8),
                           0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8)};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], expect[i], 1e-15);
}

TEST(Adam, TwoStepsMatchScalarReference) {
  const double g1[] = {0.2, -1.5}, g2[] = {-0.7, -0.1};
  Tensor<double> p = Tensor<double>::vector({0.3, 0.9});
  std::vector<Tensor<double>*> params{&p};
  auto state = AdamState<double>::zeros_like(params);
  AdamConfig c{0.05, 0.9, 0.99, 1e-6};
  adam_step<double>(state, params, std::vector{Tensor<double>::vector({g1[0], g1[1]})}, c);
  adam_step<double>(state, params, std::vector{Tensor<double>::vector({g2[0], g2[1]})}, c);
  for (int i = 0; i < 2; ++i) {
    double x = i == 0 ? 0.3 : 0.9, m = 0, v = 0;
    const double gs[] = {g1[i], g2[i]};
    for (int t = 1; t <= 2; ++t) {
      m = 0.9 * m + 0.1 * gs[t - 1];
      v = 0.99 * v + 0.01 * gs[t - 1] * gs[t - 1];
      x -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.99, t))) + 1e-6);
    }
    EXPECT_NEAR(p[i], x, 1e-15);
  }
}

TEST(Adam, ShapeMismatchRejected) {
  Tensor<double> p({2, 2});
  std::vector<Tensor<double>*> params{&p};
  auto state = AdamState<double>::zeros_like(params);
  EXPECT_THROW(adam_step<double>(state, params, std::vector{Tensor<double>({4})}, AdamConfig{}),
               DimensionError);
  EXPECT_THROW(adam_step<double>(state, params, std::vector<Tensor<double>>{}, AdamConfig{}),
               DimensionError);
}

namespace {

struct Toy {
  GranGenerator<float> gen;
  Discriminator<float> disc;
};

Toy toy(std::uint64_t seed) {
  auto c = small_conv_config(2);
  c.init_std = 0.02;
  return {GranGenerator<float>::init(c, seed), Discriminator<float>::init(mirror_discriminator(c), seed + 1)};
}

std::vector<Tensor<float>> snapshot(std::vector<NamedRef<float>> named) {
  std::vector<Tensor<float>> out;
  for (auto& [n, t] : named) out.push_back(*t);
  return out;
}

}  // namespace

TEST(Train, ZeroIterationsChangesNothing) {
  auto m = toy(1);
  auto x = gen_shapes<float>(8, 20, 3).data.x;
  auto g0 = snapshot(m.gen.parameters());
  auto d0 = snapshot(m.disc.parameters());
  auto b0 = snapshot(m.gen.buffers());
  TrainConfig tc;
  tc.iterations = 0;
  tc.batch_size = 4;
  auto r = train(m.gen, m.disc, x, tc);
  EXPECT_TRUE(r.trace.rows.empty());
  EXPECT_EQ(snapshot(m.gen.parameters()), g0);
  EXPECT_EQ(snapshot(m.disc.parameters()), d0);
  EXPECT_EQ(snapshot(m.gen.buffers()), b0);
}

TEST(Train, FixedSeedIsBitReproducible) {
  auto x = gen_shapes<float>(8, 40, 3).data.x;
  TrainConfig tc;
  tc.iterations = 6;
  tc.batch_size = 8;
  tc.seed = 11;
  auto a = toy(2);
  auto b = toy(2);
  auto ra = train(a.gen, a.disc, x, tc);
  auto rb = train(b.gen, b.disc, x, tc);
  EXPECT_EQ(ra.trace.rows, rb.trace.rows);
  EXPECT_EQ(ra.trace.to_csv(), rb.trace.to_csv());
  EXPECT_EQ(snapshot(a.gen.parameters()), snapshot(b.gen.parameters()));
  EXPECT_EQ(snapshot(a.disc.buffers()), snapshot(b.disc.buffers()));

  auto c = toy(2);
  tc.seed = 12;
  EXPECT_NE(train(c.gen, c.disc, x, tc).trace.rows, ra.trace.rows);
}

TEST(Train, TraceRowsAreConsistent) {
  auto m = toy(3);
  auto x = gen_shapes<float>(8, 40, 3).data.x;
  TrainConfig tc;
  tc.iterations = 5;
  tc.batch_size = 8;
  auto r = train(m.gen, m.disc, x, tc);
  ASSERT_EQ(r.trace.rows.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& row = r.trace.rows[i];
    EXPECT_EQ(row.iter, i + 1);
    EXPECT_EQ(row.value, -row.d_loss);
    EXPECT_GE(row.acc_real, 0.0);
    EXPECT_LE(row.acc_fake, 1.0);
  }
  EXPECT_EQ(r.adam_g.step, 5u);
  EXPECT_EQ(r.adam_d.step, 5u);
  const std::string csv = r.trace.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,d_loss,g_loss,V,acc_real,acc_fake");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(Train, ConditionalPolicySkipsUpdates) {
  auto m = toy(4);
  auto x = gen_shapes<float>(8, 40, 3).data.x;
  TrainConfig tc;
  tc.iterations = 8;
  tc.batch_size = 8;
  tc.policy = UpdatePolicy::conditional;
  auto r = train(m.gen, m.disc, x, tc);
  std::uint64_t d_steps = 0, g_steps = 0;
  for (const auto& row : r.trace.rows) {
    auto f = update_policy_decide(UpdatePolicy::conditional, row.acc_real, row.acc_fake);
    d_steps += f.update_d;
    g_steps += f.update_g;
  }
  EXPECT_EQ(r.adam_d.step, d_steps);
  EXPECT_EQ(r.adam_g.step, g_steps);
}

TEST(Train, NonFiniteLossNamesIteration) {
  auto m = toy(5);
  auto x = gen_shapes<float>(8, 40, 3).data.x;
  m.gen.embed.bias[0] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig tc;
  tc.iterations = 3;
  tc.batch_size = 8;
  try {
    train(m.gen, m.disc, x, tc);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
  }
}

TEST(Train, RejectsBadConfigAndShapes) {
  auto m = toy(6);
  auto x = gen_shapes<float>(8, 40, 3).data.x;
  TrainConfig tc;
  tc.batch_size = 1;
  EXPECT_THROW(train(m.gen, m.disc, x, tc), ContractError);
  tc.batch_size = 4;
  tc.lr_g = 0;
  EXPECT_THROW(train(m.gen, m.disc, x, tc), ContractError);
  tc.lr_g = 1e-3;
  EXPECT_THROW(train(m.gen, m.disc, gen_shapes<float>(6, 40, 3).data.x, tc), DimensionError);
}

TEST(Train, DiscriminatorLearnsAgainstFrozenGenerator) {
  auto m = toy(7);
  auto x = gen_shapes<float>(8, 200, 3).data.x;
  TrainConfig tc;
  tc.iterations = 60;
  tc.batch_size = 20;
  tc.lr_d = 5e-3;
  tc.lr_g = 1e-30;
  auto r = train(m.gen, m.disc, x, tc);
  EXPECT_LT(r.trace.rows.back().d_loss, 0.5 * r.trace.rows.front().d_loss);
}

TEST(TrainConfigText, RoundTrip) {
  TrainConfig c;
  c.lr_d = 3e-4;
  c.seed = 18446744073709551615ull;
  c.policy = UpdatePolicy::conditional;
  KeyValues kv;
  c.write(kv);
  auto back = TrainConfig::read(KeyValues::parse(kv.serialize()));
  EXPECT_EQ(back.lr_d, c.lr_d);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.policy, c.policy);
}
