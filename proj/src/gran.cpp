#include "granlab/gran.hpp"

#include <random>

namespace granlab {

std::string to_string(NoiseMode m) {
  return m == NoiseMode::shared ? "shared" : "per-step";
}

std::string to_string(Arch a) { return a == Arch::dense ? "dense" : "conv"; }

NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "shared") return NoiseMode::shared;
  if (s == "per-step" || s == "per_step") return NoiseMode::per_step;
  throw UsageError("noise mode must be shared or per-step, got '" + s + "'");
}

Arch parse_arch(const std::string& s) {
  if (s == "dense") return Arch::dense;
  if (s == "conv") return Arch::conv;
  throw UsageError("architecture must be dense or conv, got '" + s + "'");
}

// channels:kernel:stride:padding:output_padding, comma separated.
std::string format_ladder(const std::vector<LadderLayer>& ladder) {
  std::string out;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const auto& l = ladder[i];
    if (i) out += ",";
    out += join_counts({l.channels, l.kernel, l.stride, l.padding, l.output_padding}, ':');
  }
  return out;
}

std::vector<LadderLayer> parse_ladder(const std::string& text) {
  std::vector<LadderLayer> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma - start);
    std::vector<std::size_t> f;
    std::size_t s = 0;
    while (true) {
      const auto colon = item.find(':', s);
      f.push_back(parse_count(item.substr(s, colon - s), "ladder"));
      if (colon == std::string::npos) break;
      s = colon + 1;
    }
    if (f.size() < 2 || f.size() > 5) {
      throw UsageError("ladder layer '" + item +
                       "' must be channels:kernel[:stride[:padding[:output_padding]]]");
    }
    f.resize(5, 0);
    if (f[2] == 0) f[2] = 1;
    out.push_back({f[0], f[1], f[2], f[3], f[4]});
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

namespace {

ConvSpec spec_of(const LadderLayer& l, bool transpose) {
  return {l.stride, l.padding, transpose ? l.output_padding : 0};
}

void require_positive(std::size_t v, const char* what) {
  if (v == 0) throw ContractError(std::string(what) + " must be at least 1");
}

Shape parse_shape(const std::string& text, const std::string& what) {
  auto s = parse_count_list(text, what);
  if (s.empty()) throw UsageError(what + " must not be empty");
  return s;
}

}  // namespace

void GranConfig::validate() const {
  require_positive(steps, "steps");
  require_positive(z_dim, "z_dim");
  require_positive(hz_dim, "hz_dim");
  require_positive(hc_dim, "hc_dim");
  if (canvas.empty() || shape_size(canvas) == 0) {
    throw ContractError("canvas shape " + shape_string(canvas) + " is empty");
  }
  if (init_std < 0) throw ContractError("init_std must be non-negative");
  if (arch == Arch::dense) return;

  if (base.size() != 3 || canvas.size() != 3) {
    throw ContractError("conv generator needs [C,H,W] base and canvas, got " +
                        shape_string(base) + " and " + shape_string(canvas));
  }
  if (ladder.empty()) throw ContractError("conv generator needs a ladder");
  Shape s = base;
  for (const auto& l : ladder) {
    require_positive(l.channels, "ladder channels");
    require_positive(l.kernel, "ladder kernel");
    require_positive(l.stride, "ladder stride");
    const Shape before = s;
    const ConvSpec spec = spec_of(l, true);
    s = {l.channels, conv_transpose_output_size(s[1], l.kernel, spec),
         conv_transpose_output_size(s[2], l.kernel, spec)};
    // The encoder runs the same layer as a convolution and must land back
    // on the decoder's input size.
    const ConvSpec down = spec_of(l, false);
    if (conv_output_size(s[1], l.kernel, down) != before[1] ||
        conv_output_size(s[2], l.kernel, down) != before[2]) {
      throw ContractError("ladder layer " + format_ladder({l}) +
                          " cannot be mirrored by a convolution");
    }
  }
  if (s != canvas) {
    throw ContractError("ladder maps base " + shape_string(base) + " to " +
                        shape_string(s) + ", not canvas " + shape_string(canvas));
  }
}

void GranConfig::write(KeyValues& kv, const std::string& p) const {
  kv.set(p + "steps", steps);
  kv.set(p + "z_dim", z_dim);
  kv.set(p + "noise", to_string(noise_mode));
  kv.set(p + "arch", to_string(arch));
  kv.set(p + "hz_dim", hz_dim);
  kv.set(p + "hc_dim", hc_dim);
  kv.set(p + "canvas", join_counts(canvas));
  kv.set(p + "base", join_counts(base));
  kv.set(p + "ladder", format_ladder(ladder));
  kv.set(p + "hidden", join_counts(hidden));
  kv.set(p + "batch_norm", std::string(batch_norm ? "1" : "0"));
  kv.set(p + "init_std", init_std);
}

namespace {

bool parse_flag(const std::string& text, const std::string& what) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw UsageError(what + ": expected 0 or 1, got '" + text + "'");
}

}  // namespace

GranConfig GranConfig::read(const KeyValues& kv, const std::string& p) {
  GranConfig c;
  c.steps = kv.get_size(p + "steps", c.steps);
  c.z_dim = kv.get_size(p + "z_dim", c.z_dim);
  if (auto v = kv.get(p + "noise")) c.noise_mode = parse_noise_mode(*v);
  if (auto v = kv.get(p + "arch")) c.arch = parse_arch(*v);
  c.hz_dim = kv.get_size(p + "hz_dim", c.hz_dim);
  c.hc_dim = kv.get_size(p + "hc_dim", c.hc_dim);
  if (auto v = kv.get(p + "canvas")) c.canvas = parse_shape(*v, p + "canvas");
  if (auto v = kv.get(p + "base")) c.base = parse_count_list(*v, p + "base");
  if (auto v = kv.get(p + "ladder")) c.ladder = parse_ladder(*v);
  if (auto v = kv.get(p + "hidden")) c.hidden = parse_count_list(*v, p + "hidden");
  if (auto v = kv.get(p + "batch_norm")) c.batch_norm = parse_flag(*v, p + "batch_norm");
  c.init_std = kv.get_double(p + "init_std", c.init_std);
  return c;
}

GranConfig mnist_config(std::size_t steps) {
  GranConfig c;
  c.steps = steps;
  c.z_dim = 60;
  c.arch = Arch::conv;
  c.canvas = {1, 28, 28};
  c.base = {80, 7, 7};
  c.ladder = {{80, 5, 1, 2, 0}, {40, 5, 2, 2, 1}, {1, 5, 2, 2, 1}};
  return c;
}

void DiscriminatorConfig::validate() const {
  if (input.empty() || shape_size(input) == 0) {
    throw ContractError("discriminator input shape is empty");
  }
  if (!(leaky_alpha > 0.0 && leaky_alpha <= 1.0)) {
    throw ContractError("LeakyReLU slope must be in (0, 1]");
  }
  if (arch == Arch::dense) return;
  if (input.size() != 3) {
    throw ContractError("conv discriminator needs a [C,H,W] input, got " +
                        shape_string(input));
  }
  Shape s = input;
  for (const auto& l : ladder) {
    require_positive(l.channels, "ladder channels");
    require_positive(l.kernel, "ladder kernel");
    require_positive(l.stride, "ladder stride");
    const ConvSpec spec = spec_of(l, false);
    s = {l.channels, conv_output_size(s[1], l.kernel, spec),
         conv_output_size(s[2], l.kernel, spec)};
  }
}

void DiscriminatorConfig::write(KeyValues& kv, const std::string& p) const {
  kv.set(p + "arch", to_string(arch));
  kv.set(p + "input", join_counts(input));
  kv.set(p + "ladder", format_ladder(ladder));
  kv.set(p + "hidden", join_counts(hidden));
  kv.set(p + "batch_norm", std::string(batch_norm ? "1" : "0"));
  kv.set(p + "leaky_alpha", leaky_alpha);
  kv.set(p + "init_std", init_std);
}

DiscriminatorConfig DiscriminatorConfig::read(const KeyValues& kv,
                                              const std::string& p) {
  DiscriminatorConfig c;
  if (auto v = kv.get(p + "arch")) c.arch = parse_arch(*v);
  if (auto v = kv.get(p + "input")) c.input = parse_shape(*v, p + "input");
  if (auto v = kv.get(p + "ladder")) c.ladder = parse_ladder(*v);
  if (auto v = kv.get(p + "hidden")) c.hidden = parse_count_list(*v, p + "hidden");
  if (auto v = kv.get(p + "batch_norm")) c.batch_norm = parse_flag(*v, p + "batch_norm");
  c.leaky_alpha = kv.get_double(p + "leaky_alpha", c.leaky_alpha);
  c.init_std = kv.get_double(p + "init_std", c.init_std);
  return c;
}

DiscriminatorConfig mirror_discriminator(const GranConfig& gen) {
  DiscriminatorConfig d;
  d.arch = gen.arch;
  d.input = gen.canvas;
  d.batch_norm = gen.batch_norm;
  d.init_std = gen.init_std;
  if (gen.arch == Arch::dense) {
    d.hidden.assign(gen.hidden.rbegin(), gen.hidden.rend());
    return d;
  }
  for (std::size_t i = gen.ladder.size(); i-- > 0;) {
    LadderLayer l = gen.ladder[i];
    l.channels = i == 0 ? gen.base[0] : gen.ladder[i - 1].channels;
    l.output_padding = 0;
    d.ladder.push_back(l);
  }
  return d;
}

namespace {

template <typename T>
Stage<T> dense_stage(std::size_t in, std::size_t out, Activation act, bool bn,
                     Rng& rng, double init_std) {
  Stage<T> s{DenseLayer<T>::init(in, out, act, rng, init_std), std::nullopt};
  if (bn) s.norm = BatchNormLayer<T>::init(out);
  return s;
}

}  // namespace

template <typename T>
GranGenerator<T> GranGenerator<T>::init(const GranConfig& config,
                                        std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const double sd = config.init_std;
  const bool bn = config.batch_norm;
  GranGenerator<T> gen;
  gen.config = config;
  gen.embed = DenseLayer<T>::init(config.z_dim, config.hz_dim,
                                  Activation::tanh(), rng, sd);
  const std::size_t in = config.hz_dim + config.hc_dim;
  const std::size_t canvas_size = shape_size(config.canvas);

  if (config.arch == Arch::dense) {
    std::size_t width = in;
    for (std::size_t h : config.hidden) {
      gen.f.stages.push_back(dense_stage<T>(width, h, Activation::relu(), bn, rng, sd));
      width = h;
    }
    gen.f.stages.push_back(
        dense_stage<T>(width, canvas_size, Activation::linear(), false, rng, sd));
    if (config.canvas.size() > 1) gen.f.stages.push_back({Reshape{config.canvas}, std::nullopt});

    if (config.canvas.size() > 1) gen.g.stages.push_back({Reshape{{canvas_size}}, std::nullopt});
    width = canvas_size;
    for (std::size_t i = config.hidden.size(); i-- > 0;) {
      gen.g.stages.push_back(
          dense_stage<T>(width, config.hidden[i], Activation::relu(), bn, rng, sd));
      width = config.hidden[i];
    }
    gen.g.stages.push_back(
        dense_stage<T>(width, config.hc_dim, Activation::tanh(), false, rng, sd));
    return gen;
  }

  const std::size_t base_size = shape_size(config.base);
  gen.f.stages.push_back(dense_stage<T>(in, base_size, Activation::relu(), bn, rng, sd));
  gen.f.stages.push_back({Reshape{config.base}, std::nullopt});
  std::size_t maps = config.base[0];
  for (std::size_t i = 0; i < config.ladder.size(); ++i) {
    const auto& l = config.ladder[i];
    const bool last = i + 1 == config.ladder.size();
    Stage<T> s{ConvTransposeLayer<T>::init(maps, l.channels, l.kernel, spec_of(l, true),
                                           last ? Activation::linear() : Activation::relu(),
                                           rng, sd),
               std::nullopt};
    if (bn && !last) s.norm = BatchNormLayer<T>::init(l.channels);
    gen.f.stages.push_back(std::move(s));
    maps = l.channels;
  }

  for (std::size_t i = config.ladder.size(); i-- > 0;) {
    const auto& l = config.ladder[i];
    const std::size_t out = i == 0 ? config.base[0] : config.ladder[i - 1].channels;
    Stage<T> s{ConvLayer<T>::init(l.channels, out, l.kernel, spec_of(l, false),
                                  Activation::relu(), rng, sd),
               std::nullopt};
    if (bn) s.norm = BatchNormLayer<T>::init(out);
    gen.g.stages.push_back(std::move(s));
  }
  gen.g.stages.push_back({Reshape{{base_size}}, std::nullopt});
  gen.g.stages.push_back(
      dense_stage<T>(base_size, config.hc_dim, Activation::tanh(), false, rng, sd));
  return gen;
}

template <typename T>
std::vector<NamedRef<T>> GranGenerator<T>::parameters() {
  std::vector<NamedRef<T>> out{{"embed.weight", &embed.weight},
                               {"embed.bias", &embed.bias}};
  f.collect_parameters("f", out);
  g.collect_parameters("g", out);
  return out;
}

template <typename T>
std::vector<NamedRef<T>> GranGenerator<T>::buffers() {
  std::vector<NamedRef<T>> out;
  f.collect_buffers("f", out);
  g.collect_buffers("g", out);
  return out;
}

template <typename T>
Discriminator<T> Discriminator<T>::init(const DiscriminatorConfig& config,
                                        std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const double sd = config.init_std;
  const Activation act = Activation::leaky(config.leaky_alpha);
  Discriminator<T> d;
  d.config = config;
  std::size_t width = shape_size(config.input);
  if (config.arch == Arch::dense) {
    if (config.input.size() > 1) d.net.stages.push_back({Reshape{{width}}, std::nullopt});
    for (std::size_t i = 0; i < config.hidden.size(); ++i) {
      // No normalization on the layer that sees the data.
      d.net.stages.push_back(dense_stage<T>(width, config.hidden[i], act,
                                            config.batch_norm && i > 0, rng, sd));
      width = config.hidden[i];
    }
  } else {
    Shape s = config.input;
    for (std::size_t i = 0; i < config.ladder.size(); ++i) {
      const auto& l = config.ladder[i];
      const ConvSpec spec = spec_of(l, false);
      Stage<T> st{ConvLayer<T>::init(s[0], l.channels, l.kernel, spec, act, rng, sd),
                  std::nullopt};
      if (config.batch_norm && i > 0) st.norm = BatchNormLayer<T>::init(l.channels);
      d.net.stages.push_back(std::move(st));
      s = {l.channels, conv_output_size(s[1], l.kernel, spec),
           conv_output_size(s[2], l.kernel, spec)};
    }
    width = shape_size(s);
    d.net.stages.push_back({Reshape{{width}}, std::nullopt});
  }
  d.net.stages.push_back(dense_stage<T>(width, 1, Activation::sigmoid(), false, rng, sd));
  return d;
}

template <typename T>
Var<T> Discriminator<T>::forward(Graph<T>& g, Var<T> x, Mode mode) {
  const Shape& s = x.shape();
  if (s.size() != config.input.size() + 1 ||
      !std::equal(config.input.begin(), config.input.end(), s.begin() + 1)) {
    throw DimensionError("discriminator expects [N," +
                         shape_string(config.input).substr(1) + ", got " +
                         shape_string(s));
  }
  return net.forward(g, x, mode);
}

template <typename T>
std::vector<NamedRef<T>> Discriminator<T>::parameters() {
  std::vector<NamedRef<T>> out;
  net.collect_parameters("d", out);
  return out;
}

template <typename T>
std::vector<NamedRef<T>> Discriminator<T>::buffers() {
  std::vector<NamedRef<T>> out;
  net.collect_buffers("d", out);
  return out;
}

namespace {

template <typename T>
Tensor<T> normal_tensor(Shape shape, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace

template <typename T>
Tensor<T> sample_prior(std::size_t z_dim, std::size_t count, std::uint64_t seed) {
  if (count == 0 || z_dim == 0) {
    throw ContractError("sample_prior needs count and z_dim of at least 1");
  }
  Rng rng(seed);
  return normal_tensor<T>({count, z_dim}, rng);
}

template <typename T>
std::vector<Tensor<T>> draw_noise(const GranConfig& config, std::size_t count,
                                  std::uint64_t seed) {
  if (config.noise_mode == NoiseMode::shared) {
    return {sample_prior<T>(config.z_dim, count, seed)};
  }
  if (count == 0) throw ContractError("draw_noise needs count of at least 1");
  Rng rng(seed);
  std::vector<Tensor<T>> z;
  for (std::size_t t = 0; t < config.steps; ++t) {
    z.push_back(normal_tensor<T>({count, config.z_dim}, rng));
  }
  return z;
}

template <typename T>
Var<T> noise_embed(Graph<T>& g, const GranGenerator<T>& gen, Var<T> z) {
  return gen.embed.forward(g, z);
}

template <typename T>
Var<T> concat_hidden(Var<T> h_z, Var<T> h_c) {
  return ag::concat_cols(h_z, h_c);
}

template <typename T>
GenerationVars<T> generate(Graph<T>& g, GranGenerator<T>& gen,
                           std::span<const Tensor<T>> z, Mode mode) {
  std::vector<Var<T>> vars;
  for (const auto& zt : z) vars.push_back(g.input(zt));
  return generate(g, gen, std::span<const Var<T>>(vars), mode);
}

template <typename T>
GenerationVars<T> generate(Graph<T>& g, GranGenerator<T>& gen,
                           std::span<const Var<T>> z, Mode mode) {
  const GranConfig& c = gen.config;
  const std::size_t expected = c.noise_mode == NoiseMode::shared ? 1 : c.steps;
  if (z.size() != expected) {
    throw ContractError(to_string(c.noise_mode) + " noise with " +
                        std::to_string(c.steps) + " steps needs " +
                        std::to_string(expected) + " z tensor(s), got " +
                        std::to_string(z.size()));
  }
  const std::size_t n = z[0].shape().size() == 2 ? z[0].shape()[0] : 0;
  for (const auto& zt : z) {
    const Shape& s = zt.shape();
    if (s.size() != 2 || s[0] != n || s[1] != c.z_dim) {
      throw DimensionError("z must be [" + std::to_string(n) + "," +
                           std::to_string(c.z_dim) + "], got " +
                           shape_string(s));
    }
  }

  Shape canvas_shape{n};
  canvas_shape.insert(canvas_shape.end(), c.canvas.begin(), c.canvas.end());
  GenerationVars<T> out;
  Var<T> previous = g.constant(Tensor<T>::zeros(canvas_shape));
  Var<T> total;
  for (std::size_t t = 0; t < c.steps; ++t) {
    Var<T> h_c = gen.g.forward(g, previous, mode);
    Var<T> h_z = (t > 0 && c.noise_mode == NoiseMode::shared)
                     ? out.h_z.front()
                     : noise_embed(g, gen, z[t]);
    Var<T> delta = gen.f.forward(g, concat_hidden(h_z, h_c), mode);
    total = t == 0 ? delta : ag::add(total, delta);
    out.h_z.push_back(h_z);
    out.h_c.push_back(h_c);
    out.deltas.push_back(delta);
    previous = delta;
  }
  out.canvas = ag::sigmoid(total);
  return out;
}

template <typename T>
Generation<T> generate(GranGenerator<T>& gen, std::span<const Tensor<T>> z) {
  Graph<T> g;
  auto vars = generate(g, gen, z, Mode::eval);
  Generation<T> out;
  out.canvas = vars.canvas.value();
  for (auto& v : vars.deltas) out.deltas.push_back(v.value());
  for (auto& v : vars.h_z) out.h_z.push_back(v.value());
  for (auto& v : vars.h_c) out.h_c.push_back(v.value());
  return out;
}

template <typename T>
Generation<T> generate(GranGenerator<T>& gen, std::size_t count, std::uint64_t seed) {
  auto z = draw_noise<T>(gen.config, count, seed);
  return generate(gen, std::span<const Tensor<T>>(z));
}

template <typename T>
Tensor<T> discriminate(Discriminator<T>& disc, const Tensor<T>& x) {
  Graph<T> g;
  Var<T> p = disc.forward(g, g.constant(x), Mode::eval);
  return p.value().reshaped({x.dim(0)});
}

template <typename T>
void zero_parameters(std::vector<NamedRef<T>> params) {
  for (auto& [name, t] : params) t->fill(T{0});
}

#define GRANLAB_INSTANTIATE(T)                                                   \
  template struct GranGenerator<T>;                                              \
  template struct Discriminator<T>;                                              \
  template Tensor<T> sample_prior<T>(std::size_t, std::size_t, std::uint64_t);   \
  template std::vector<Tensor<T>> draw_noise<T>(const GranConfig&, std::size_t,  \
                                                std::uint64_t);                  \
  template Var<T> noise_embed(Graph<T>&, const GranGenerator<T>&, Var<T>);       \
  template Var<T> concat_hidden(Var<T>, Var<T>);                                 \
  template GenerationVars<T> generate(Graph<T>&, GranGenerator<T>&,              \
                                      std::span<const Tensor<T>>, Mode);         \
  template GenerationVars<T> generate(Graph<T>&, GranGenerator<T>&,              \
                                      std::span<const Var<T>>, Mode);            \
  template Generation<T> generate(GranGenerator<T>&, std::span<const Tensor<T>>); \
  template Generation<T> generate(GranGenerator<T>&, std::size_t, std::uint64_t); \
  template Tensor<T> discriminate(Discriminator<T>&, const Tensor<T>&);          \
  template void zero_parameters(std::vector<NamedRef<T>>);

GRANLAB_INSTANTIATE(float)
GRANLAB_INSTANTIATE(double)
#undef GRANLAB_INSTANTIATE

}  // namespace granlab
