#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "granlab/gran.hpp"
#include "granlab/kv.hpp"
#include "granlab/optim.hpp"

namespace granlab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary tensor container. Layout, all integers little-endian:
///   "GRN1" | u32 version | u32 length + UTF-8 config text (key=value lines)
///   | u32 tensor count | per tensor: u32 length + UTF-8 name, u32 rank,
///   rank x u64 dims, raw 32-bit floats.
struct Container {
  KeyValues config;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const;
  // Throws FormatError naming the missing tensor.
  const Tensor<float>& require(const std::string& name) const;
};

std::vector<std::uint8_t> encode_container(const Container& c);
// Throws FormatError for a wrong magic, unknown version or any length
// field that runs past the end of the data.
Container decode_container(const std::vector<std::uint8_t>& bytes);

void save_container(const Container& c, const std::string& path);
Container load_container(const std::string& path);

template <typename T>
struct ModelBundle {
  GranGenerator<T> gen;
  Discriminator<T> disc;
  std::optional<AdamState<T>> adam_g;
  std::optional<AdamState<T>> adam_d;
  KeyValues extra;  // anything else stored under "meta."
};

// Generator, discriminator (parameters and batch-norm statistics), their
// configs and optional optimizer state. Tensors are stored as 32-bit
// floats, so the round trip is bit-exact for float models.
template <typename T>
Container pack_models(GranGenerator<T>& gen, Discriminator<T>& disc,
                      const AdamState<T>* adam_g = nullptr,
                      const AdamState<T>* adam_d = nullptr,
                      const KeyValues& extra = {});
template <typename T>
ModelBundle<T> unpack_models(const Container& c);

template <typename T>
void save_checkpoint(const std::string& path, GranGenerator<T>& gen,
                     Discriminator<T>& disc, const AdamState<T>* adam_g = nullptr,
                     const AdamState<T>* adam_d = nullptr, const KeyValues& extra = {});
template <typename T>
ModelBundle<T> load_checkpoint(const std::string& path);

}  // namespace granlab
