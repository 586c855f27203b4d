#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "granlab/kv.hpp"
#include "granlab/layers.hpp"

namespace granlab {

enum class NoiseMode { shared, per_step };
enum class Arch { dense, conv };

std::string to_string(NoiseMode m);
std::string to_string(Arch a);
NoiseMode parse_noise_mode(const std::string& s);
Arch parse_arch(const std::string& s);

// One conv-transpose layer of the decoder, listed bottom (base) to top
// (canvas). The encoder and the discriminator use the same geometry with
// ordinary convolutions in the opposite direction.
struct LadderLayer {
  std::size_t channels = 1;  // output maps of the decoder layer
  std::size_t kernel = 5;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding = 0;

  friend bool operator==(const LadderLayer&, const LadderLayer&) = default;
};

std::string format_ladder(const std::vector<LadderLayer>& ladder);
std::vector<LadderLayer> parse_ladder(const std::string& text);

struct GranConfig {
  std::size_t steps = 3;
  std::size_t z_dim = 60;
  NoiseMode noise_mode = NoiseMode::shared;
  Arch arch = Arch::conv;
  std::size_t hz_dim = 100;
  std::size_t hc_dim = 100;
  Shape canvas{1, 28, 28};
  // conv: shape the first dense layer of the decoder is reshaped to.
  Shape base{80, 7, 7};
  std::vector<LadderLayer> ladder;
  // dense: decoder hidden widths, bottom to top; the encoder reverses them.
  std::vector<std::size_t> hidden;
  bool batch_norm = true;
  double init_std = 0.02;

  // Throws ContractError when the ladder does not carry base to canvas.
  void validate() const;

  void write(KeyValues& kv, const std::string& prefix = "gen.") const;
  static GranConfig read(const KeyValues& kv, const std::string& prefix = "gen.");

  friend bool operator==(const GranConfig&, const GranConfig&) = default;
};

// Three-layer 28x28 ladder with [80, 40, 1] maps and 5x5 filters, z of 60.
GranConfig mnist_config(std::size_t steps);

struct DiscriminatorConfig {
  Arch arch = Arch::conv;
  Shape input{1, 28, 28};
  // conv: layers listed from the input upward; `channels` is the number of
  // output maps of each convolution.
  std::vector<LadderLayer> ladder;
  std::vector<std::size_t> hidden;
  bool batch_norm = true;
  double leaky_alpha = 0.2;
  double init_std = 0.02;

  void validate() const;

  void write(KeyValues& kv, const std::string& prefix = "disc.") const;
  static DiscriminatorConfig read(const KeyValues& kv,
                                  const std::string& prefix = "disc.");

  friend bool operator==(const DiscriminatorConfig&,
                         const DiscriminatorConfig&) = default;
};

// Discriminator with the generator's encoder geometry (same ladder run
// downward), LeakyReLU activations and a sigmoid output unit.
DiscriminatorConfig mirror_discriminator(const GranConfig& gen);

template <typename T>
struct GranGenerator {
  GranConfig config;
  DenseLayer<T> embed;  // z -> h_z
  Sequential<T> f;      // [h_z, h_c] -> delta canvas
  Sequential<T> g;      // delta canvas -> h_c

  static GranGenerator init(const GranConfig& config, std::uint64_t seed);

  std::vector<NamedRef<T>> parameters();
  std::vector<NamedRef<T>> buffers();
};

template <typename T>
struct Discriminator {
  DiscriminatorConfig config;
  Sequential<T> net;

  static Discriminator init(const DiscriminatorConfig& config, std::uint64_t seed);

  // Probabilities of being real, shape [N, 1].
  Var<T> forward(Graph<T>& g, Var<T> x, Mode mode);

  std::vector<NamedRef<T>> parameters();
  std::vector<NamedRef<T>> buffers();
};

// Every entry i.i.d. standard normal, shape [count, z_dim].
template <typename T>
Tensor<T> sample_prior(std::size_t z_dim, std::size_t count, std::uint64_t seed);

// The z draws one generate() call consumes: one tensor in shared mode, T in
// per-step mode.
template <typename T>
std::vector<Tensor<T>> draw_noise(const GranConfig& config, std::size_t count,
                                  std::uint64_t seed);

template <typename T>
Var<T> noise_embed(Graph<T>& g, const GranGenerator<T>& gen, Var<T> z);

// [h_z, h_c] along the feature axis, h_z first.
template <typename T>
Var<T> concat_hidden(Var<T> h_z, Var<T> h_c);

template <typename T>
struct GenerationVars {
  Var<T> canvas;  // sigma of the summed deltas
  std::vector<Var<T>> deltas;
  std::vector<Var<T>> h_z;
  std::vector<Var<T>> h_c;
};

// Unrolls the recurrence on a graph so a loss can be differentiated through
// every step. Throws ContractError when the number of z tensors does not
// match the noise mode.
template <typename T>
GenerationVars<T> generate(Graph<T>& g, GranGenerator<T>& gen,
                           std::span<const Tensor<T>> z, Mode mode);
// Same, with z already on the graph (to differentiate with respect to it).
template <typename T>
GenerationVars<T> generate(Graph<T>& g, GranGenerator<T>& gen,
                           std::span<const Var<T>> z, Mode mode);

template <typename T>
struct Generation {
  Tensor<T> canvas;
  std::vector<Tensor<T>> deltas;
  std::vector<Tensor<T>> h_z;
  std::vector<Tensor<T>> h_c;
};

// Sampling: eval mode, values only.
template <typename T>
Generation<T> generate(GranGenerator<T>& gen, std::span<const Tensor<T>> z);
template <typename T>
Generation<T> generate(GranGenerator<T>& gen, std::size_t count, std::uint64_t seed);

template <typename T>
GenerationVars<T> generate(Graph<T>& g, GranGenerator<T>& gen,
                           const std::vector<Tensor<T>>& z, Mode mode) {
  return generate(g, gen, std::span<const Tensor<T>>(z), mode);
}
template <typename T>
GenerationVars<T> generate(Graph<T>& g, GranGenerator<T>& gen,
                           const std::vector<Var<T>>& z, Mode mode) {
  return generate(g, gen, std::span<const Var<T>>(z), mode);
}
template <typename T>
Generation<T> generate(GranGenerator<T>& gen, const std::vector<Tensor<T>>& z) {
  return generate(gen, std::span<const Tensor<T>>(z));
}

// Eval-mode scores, shape [N]. Throws DimensionError unless x is
// [N, input...].
template <typename T>
Tensor<T> discriminate(Discriminator<T>& disc, const Tensor<T>& x);

// Sets every learnable tensor to zero.
template <typename T>
void zero_parameters(std::vector<NamedRef<T>> params);

}  // namespace granlab
