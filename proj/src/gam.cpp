#include "granlab/gam.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "granlab/checkpoint.hpp"
#include "granlab/data.hpp"
#include "granlab/image_io.hpp"

namespace granlab {

namespace {

constexpr std::size_t kChunk = 500;

template <typename T>
void require_fits(const Tensor<T>& x, const Shape& input, const std::string& who) {
  if (x.rank() != input.size() + 1 || !std::equal(input.begin(), input.end(), x.shape().begin() + 1)) {
    throw DimensionError(who + ": samples " + shape_string(x.shape()) +
                         " do not fit input " + shape_string(input));
  }
}

}  // namespace

template <typename T>
double error_rate(const Tensor<T>& scores, Truth truth) {
  if (scores.size() == 0 || (scores.rank() > 0 && scores.dim(0) == 0)) {
    throw ContractError("error rate of an empty sample set");
  }
  std::size_t wrong = 0;
  for (T s : scores.data()) {
    const bool says_real = static_cast<double>(s) >= kDecisionThreshold;
    wrong += (truth == Truth::real) != says_real ? 1 : 0;
  }
  return static_cast<double>(wrong) / static_cast<double>(scores.size());
}

template <typename T>
double error_rate(Discriminator<T>& disc, const Tensor<T>& samples, Truth truth) {
  if (samples.rank() == 0 || samples.dim(0) == 0) {
    throw ContractError("error rate of an empty sample set");
  }
  require_fits(samples, disc.config.input, "error_rate");
  const std::size_t n = samples.dim(0);
  Tensor<T> all({n});
  for (std::size_t b = 0; b < n; b += kChunk) {
    const std::size_t e = std::min(n, b + kChunk);
    const Tensor<T> s = discriminate(disc, take_rows(samples, b, e));
    std::copy(s.data().begin(), s.data().end(), all.data().begin() + b);
  }
  return error_rate(all, truth);
}

template <typename T>
Tensor<T> generate_samples(GranGenerator<T>& gen, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("cannot generate zero samples");
  const auto z = draw_noise<T>(gen.config, n, seed);
  Shape shape{n};
  shape.insert(shape.end(), gen.config.canvas.begin(), gen.config.canvas.end());
  Tensor<T> out(shape);
  const std::size_t row = out.size() / n;
  for (std::size_t b = 0; b < n; b += kChunk) {
    const std::size_t e = std::min(n, b + kChunk);
    std::vector<Tensor<T>> zc;
    for (const auto& zt : z) zc.push_back(take_rows(zt, b, e));
    const Tensor<T> c = generate(gen, zc).canvas;
    std::copy(c.data().begin(), c.data().end(), out.data().begin() + b * row);
  }
  return out;
}

BattleReport BattleReport::swapped() const {
  BattleReport r = *this;
  std::swap(r.label_m1, r.label_m2);
  std::swap(r.err_d1_train, r.err_d2_train);
  std::swap(r.err_d1_test, r.err_d2_test);
  std::swap(r.err_d1_g2, r.err_d2_g1);
  return r;
}

template <typename T>
BattleReport battle(ModelPair<T> m1, ModelPair<T> m2, const Tensor<T>& x_train,
                    const Tensor<T>& x_test, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("battle needs n >= 1 samples");
  const Shape& canvas = m1.gen.config.canvas;
  for (const ModelPair<T>* m : {&m1, &m2}) {
    if (m->gen.config.canvas != m->disc.config.input || m->gen.config.canvas != canvas) {
      throw ContractError("battle " + m1.label + " vs " + m2.label + ": " + m->label +
                          " has canvas " + shape_string(m->gen.config.canvas) +
                          " and discriminator input " + shape_string(m->disc.config.input) +
                          ", expected " + shape_string(canvas));
    }
  }
  for (const Tensor<T>* x : {&x_train, &x_test}) {
    try {
      require_fits(*x, canvas, "battle " + m1.label + " vs " + m2.label);
    } catch (const DimensionError& e) {
      throw ContractError(e.what());
    }
  }

  BattleReport r;
  r.label_m1 = m1.label;
  r.label_m2 = m2.label;
  r.n_train = x_train.dim(0);
  r.n_test = x_test.dim(0);
  r.n_samples = n;
  r.seed = seed;
  const Tensor<T> s1 = generate_samples(m1.gen, n, seed);
  const Tensor<T> s2 = generate_samples(m2.gen, n, seed);
  r.err_d1_train = error_rate(m1.disc, x_train, Truth::real);
  r.err_d1_test = error_rate(m1.disc, x_test, Truth::real);
  r.err_d1_g2 = error_rate(m1.disc, s2, Truth::fake);
  r.err_d2_train = error_rate(m2.disc, x_train, Truth::real);
  r.err_d2_test = error_rate(m2.disc, x_test, Truth::real);
  r.err_d2_g1 = error_rate(m2.disc, s1, Truth::fake);
  return r;
}

Ratios ratios(const BattleReport& r) {
  if (r.err_d2_test == 0) {
    throw UndefinedRatio("r_test undefined: " + r.label_m2 +
                         "'s discriminator makes no errors on the test set");
  }
  if (r.err_d2_g1 == 0) {
    throw UndefinedRatio("r_sample undefined: " + r.label_m2 +
                         "'s discriminator catches every sample of " + r.label_m1);
  }
  return {r.err_d1_test / r.err_d2_test, r.err_d1_g2 / r.err_d2_g1};
}

std::string to_string(Winner w) {
  switch (w) {
    case Winner::m1: return "M1";
    case Winner::m2: return "M2";
    case Winner::tie: return "Tie";
  }
  return "?";
}

GamVerdict verdict(double r_test, double r_sample, double delta) {
  if (!std::isfinite(r_test) || !std::isfinite(r_sample) || r_test < 0 || r_sample < 0) {
    throw ContractError("ratios must be finite and non-negative, got r_test=" +
                        format_real(r_test) + " r_sample=" + format_real(r_sample));
  }
  if (!(delta >= 0)) throw ContractError("delta must be >= 0, got " + format_real(delta));
  GamVerdict v{Winner::tie, r_test, r_sample, delta, {}};
  // r_test ~ 1 is read symmetrically (r_test and 1/r_test both within
  // delta of 1) so exchanging the two models exchanges the verdict.
  if (std::abs(r_test - 1.0) <= delta && std::max(r_test, 1.0 / r_test) <= 1.0 + delta) {
    if (r_sample < 1) v.winner = Winner::m1;
    if (r_sample > 1) v.winner = Winner::m2;
  }
  return v;
}

GamVerdict judge(const BattleReport& report, double delta) {
  try {
    const Ratios r = ratios(report);
    return verdict(r.r_test, r.r_sample, delta);
  } catch (const UndefinedRatio& e) {
    GamVerdict v;
    v.r_test = v.r_sample = std::nan("");
    v.delta = delta;
    v.diagnostic = e.what();
    return v;
  }
}

KeyValues report_kv(const BattleReport& r, const GamVerdict& v) {
  KeyValues kv;
  kv.set("label_m1", r.label_m1);
  kv.set("label_m2", r.label_m2);
  kv.set("err_d1_train", r.err_d1_train);
  kv.set("err_d1_test", r.err_d1_test);
  kv.set("err_d1_g2", r.err_d1_g2);
  kv.set("err_d2_train", r.err_d2_train);
  kv.set("err_d2_test", r.err_d2_test);
  kv.set("err_d2_g1", r.err_d2_g1);
  kv.set("counts", join_counts({r.n_train, r.n_test, r.n_samples}));
  kv.set("seed", std::to_string(r.seed));
  const bool defined = v.diagnostic.empty();
  kv.set("r_test", defined ? format_real(v.r_test) : std::string("undefined"));
  kv.set("r_sample", defined ? format_real(v.r_sample) : std::string("undefined"));
  kv.set("delta", v.delta);
  kv.set("winner", to_string(v.winner));
  kv.set("winner_label", v.winner == Winner::m1   ? r.label_m1
                         : v.winner == Winner::m2 ? r.label_m2
                                                  : std::string("Tie"));
  kv.set("diagnostic", defined ? std::string("none") : v.diagnostic);
  return kv;
}

template <typename T>
Tensor<T> load_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, "GRN1", 4) == 0) {
    const Container c = load_container(path);
    const Tensor<float>& s = c.require("samples");
    if (s.rank() < 2) {
      throw FormatError("samples tensor must be [N, ...], got " + shape_string(s.shape()));
    }
    return s.template cast<T>();
  }
  return read_pnm_stack<T>(path);
}

template <typename T>
void save_samples(const std::string& path, const Tensor<T>& samples) {
  Container c;
  c.config.set("content", std::string("samples"));
  c.tensors.emplace_back("samples", samples.template cast<float>());
  save_container(c, path);
}

template <typename T>
double cross_model_error(Discriminator<T>& disc, const Tensor<T>& samples) {
  return error_rate(disc, samples, Truth::fake);
}

#define GRANLAB_INSTANTIATE(T)                                                          \
  template double error_rate(const Tensor<T>&, Truth);                                  \
  template double error_rate(Discriminator<T>&, const Tensor<T>&, Truth);               \
  template Tensor<T> generate_samples(GranGenerator<T>&, std::size_t, std::uint64_t);   \
  template BattleReport battle(ModelPair<T>, ModelPair<T>, const Tensor<T>&,            \
                               const Tensor<T>&, std::size_t, std::uint64_t);           \
  template Tensor<T> load_samples<T>(const std::string&);                               \
  template void save_samples(const std::string&, const Tensor<T>&);                     \
  template double cross_model_error(Discriminator<T>&, const Tensor<T>&);

GRANLAB_INSTANTIATE(float)
GRANLAB_INSTANTIATE(double)
#undef GRANLAB_INSTANTIATE

}  // namespace granlab
