#include "granlab/trainer.hpp"

#include <cmath>
#include <fstream>

#include "granlab/data.hpp"

namespace granlab {

std::string to_string(UpdatePolicy p) {
  return p == UpdatePolicy::always ? "always" : "conditional";
}

UpdatePolicy parse_policy(const std::string& s) {
  if (s == "always") return UpdatePolicy::always;
  if (s == "conditional") return UpdatePolicy::conditional;
  throw UsageError("policy must be always or conditional, got '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lr_d > 0) || !(lr_g > 0)) throw ContractError("learning rates must be positive");
  if (batch_size < 2) throw ContractError("batch size must be at least 2 (batch norm)");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ContractError("Adam betas must be in [0, 1)");
  }
  if (!(eps > 0)) throw ContractError("Adam epsilon must be positive");
}

void TrainConfig::write(KeyValues& kv, const std::string& p) const {
  kv.set(p + "lr_d", lr_d);
  kv.set(p + "lr_g", lr_g);
  kv.set(p + "batch_size", batch_size);
  kv.set(p + "iterations", iterations);
  kv.set(p + "seed", std::to_string(seed));
  kv.set(p + "policy", to_string(policy));
  kv.set(p + "beta1", beta1);
  kv.set(p + "beta2", beta2);
  kv.set(p + "eps", eps);
}

TrainConfig TrainConfig::read(const KeyValues& kv, const std::string& p) {
  TrainConfig c;
  c.lr_d = kv.get_double(p + "lr_d", c.lr_d);
  c.lr_g = kv.get_double(p + "lr_g", c.lr_g);
  c.batch_size = kv.get_size(p + "batch_size", c.batch_size);
  c.iterations = kv.get_size(p + "iterations", c.iterations);
  c.seed = kv.get_u64(p + "seed", c.seed);
  if (auto v = kv.get(p + "policy")) c.policy = parse_policy(*v);
  c.beta1 = kv.get_double(p + "beta1", c.beta1);
  c.beta2 = kv.get_double(p + "beta2", c.beta2);
  c.eps = kv.get_double(p + "eps", c.eps);
  return c;
}

namespace {

template <typename T>
Var<T> mean_log(Var<T> p) {
  const T lo = static_cast<T>(kProbFloor);
  return ag::mean(ag::log_clamped(p, lo, T{1} - lo));
}

// log D(x_real) and log(1 - D(x_fake)), batch means.
template <typename T>
std::pair<Var<T>, Var<T>> value_terms(Var<T> p_real, Var<T> p_fake) {
  if (p_real.shape() != p_fake.shape()) {
    throw DimensionError("real and fake scores differ in shape: " +
                         shape_string(p_real.shape()) + " vs " +
                         shape_string(p_fake.shape()));
  }
  Var<T> not_fake = ag::add_scalar(ag::scale(p_fake, T{-1}), T{1});
  return {mean_log(p_real), mean_log(not_fake)};
}

}  // namespace

template <typename T>
Var<T> d_loss(Var<T> p_real, Var<T> p_fake) {
  auto [a, b] = value_terms(p_real, p_fake);
  return ag::add(ag::scale(a, T{-1}), ag::scale(b, T{-1}));
}

template <typename T>
Var<T> g_loss(Var<T> p_fake) {
  return ag::scale(mean_log(p_fake), T{-1});
}

template <typename T>
Var<T> minimax_value(Var<T> p_real, Var<T> p_fake) {
  auto [a, b] = value_terms(p_real, p_fake);
  return ag::add(a, b);
}

namespace {

template <typename T>
std::pair<Var<T>, Var<T>> scores(Graph<T>& g, Discriminator<T>& disc,
                                 const Tensor<T>& real, const Tensor<T>& fake) {
  return {disc.forward(g, g.constant(real), Mode::eval),
          disc.forward(g, g.constant(fake), Mode::eval)};
}

}  // namespace

template <typename T>
double d_loss(Discriminator<T>& disc, const Tensor<T>& x_real, const Tensor<T>& x_fake) {
  Graph<T> g;
  auto [r, f] = scores(g, disc, x_real, x_fake);
  return static_cast<double>(d_loss(r, f).value().item());
}

template <typename T>
double g_loss(Discriminator<T>& disc, const Tensor<T>& x_fake) {
  Graph<T> g;
  return static_cast<double>(
      g_loss(disc.forward(g, g.constant(x_fake), Mode::eval)).value().item());
}

template <typename T>
double minimax_value(Discriminator<T>& disc, const Tensor<T>& x_real,
                     const Tensor<T>& x_fake) {
  Graph<T> g;
  auto [r, f] = scores(g, disc, x_real, x_fake);
  return static_cast<double>(minimax_value(r, f).value().item());
}

UpdateFlags update_policy_decide(UpdatePolicy policy, double acc_real, double acc_fake) {
  if (policy == UpdatePolicy::always) return {true, true};
  return {acc_real < 0.5 || acc_fake < 0.5, acc_fake >= 0.5};
}

std::string TrainTrace::to_csv() const {
  std::string out = "iter,d_loss,g_loss,V,acc_real,acc_fake\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iter) + "," + format_real(r.d_loss) + "," +
           format_real(r.g_loss) + "," + format_real(r.value) + "," +
           format_real(r.acc_real) + "," + format_real(r.acc_fake) + "\n";
  }
  return out;
}

void TrainTrace::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << to_csv();
}

template <typename T>
double fraction_real(const Tensor<T>& scores) {
  std::size_t n = 0;
  for (T s : scores.data()) n += s >= T(0.5) ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(scores.size());
}

namespace {

template <typename T>
std::vector<Tensor<T>*> tensors_of(std::vector<NamedRef<T>> named) {
  std::vector<Tensor<T>*> out;
  for (auto& [name, t] : named) out.push_back(t);
  return out;
}

template <typename T>
void step(Graph<T>& g, Var<T> loss, const std::vector<Tensor<T>*>& params,
          AdamState<T>& state, const AdamConfig& config) {
  g.backward(loss);
  std::vector<Tensor<T>> grads;
  grads.reserve(params.size());
  for (Tensor<T>* p : params) grads.push_back(g.grad_of(*p));
  adam_step(state, std::span<Tensor<T>* const>(params),
            std::span<const Tensor<T>>(grads), config);
}

void require_finite(double v, const char* what, std::size_t iter) {
  if (!std::isfinite(v)) {
    throw TrainingError(std::string(what) + " became " + format_real(v) +
                        " at iteration " + std::to_string(iter));
  }
}

}  // namespace

template <typename T>
TrainResult<T> train(GranGenerator<T>& gen, Discriminator<T>& disc,
                     const Tensor<T>& x_real, const TrainConfig& config,
                     const TrainCallback& callback) {
  config.validate();
  Shape expected{x_real.rank() ? x_real.dim(0) : 0};
  expected.insert(expected.end(), gen.config.canvas.begin(), gen.config.canvas.end());
  if (x_real.shape() != expected || disc.config.input != gen.config.canvas) {
    throw DimensionError("training data " + shape_string(x_real.shape()) +
                         " does not fit generator canvas " +
                         shape_string(gen.config.canvas) + " and discriminator input " +
                         shape_string(disc.config.input));
  }

  const auto g_params = tensors_of(gen.parameters());
  const auto d_params = tensors_of(disc.parameters());
  TrainResult<T> result{{},
                        AdamState<T>::zeros_like(std::span<Tensor<T>* const>(g_params)),
                        AdamState<T>::zeros_like(std::span<Tensor<T>* const>(d_params))};
  if (config.iterations == 0) return result;

  BatchStream<T> batches(x_real, config.batch_size, config.seed);
  Rng noise_seeds(config.seed ^ 0x6a09e667f3bcc908ULL);

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    TrainRow row;
    row.iter = it;
    const Tensor<T> real = batches.next();
    const auto z = draw_noise<T>(gen.config, config.batch_size, noise_seeds());

    Graph<T> gg;
    const auto unrolled = generate(gg, gen, z, Mode::train);
    const Tensor<T> fake = unrolled.canvas.value();

    // Discriminator step; the generated batch is a constant here.
    Graph<T> gd;
    Var<T> p_real = disc.forward(gd, gd.constant(real), Mode::train);
    Var<T> p_fake = disc.forward(gd, gd.constant(fake), Mode::train);
    Var<T> ld = d_loss(p_real, p_fake);
    row.d_loss = static_cast<double>(ld.value().item());
    row.value = static_cast<double>(minimax_value(p_real, p_fake).value().item());
    row.acc_real = fraction_real(p_real.value());
    row.acc_fake = 1.0 - fraction_real(p_fake.value());
    require_finite(row.d_loss, "discriminator loss", it);

    const UpdateFlags flags = update_policy_decide(config.policy, row.acc_real, row.acc_fake);
    if (flags.update_d) step(gd, ld, d_params, result.adam_d, config.adam_d());

    // Generator step through the (possibly just updated) discriminator.
    Var<T> lg = g_loss(disc.forward(gg, unrolled.canvas, Mode::train));
    row.g_loss = static_cast<double>(lg.value().item());
    require_finite(row.g_loss, "generator loss", it);
    if (flags.update_g) step(gg, lg, g_params, result.adam_g, config.adam_g());

    result.trace.rows.push_back(row);
    if (callback && !callback(row)) break;
  }
  return result;
}

#define GRANLAB_INSTANTIATE(T)                                                      \
  template Var<T> d_loss(Var<T>, Var<T>);                                           \
  template Var<T> g_loss(Var<T>);                                                   \
  template Var<T> minimax_value(Var<T>, Var<T>);                                    \
  template double d_loss(Discriminator<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template double g_loss(Discriminator<T>&, const Tensor<T>&);                      \
  template double minimax_value(Discriminator<T>&, const Tensor<T>&,                \
                                const Tensor<T>&);                                  \
  template double fraction_real(const Tensor<T>&);                                  \
  template TrainResult<T> train(GranGenerator<T>&, Discriminator<T>&,               \
                                const Tensor<T>&, const TrainConfig&,               \
                                const TrainCallback&);

GRANLAB_INSTANTIATE(float)
GRANLAB_INSTANTIATE(double)
#undef GRANLAB_INSTANTIATE

}  // namespace granlab
