#include "granlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace granlab {

const Tensor<float>* Container::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor<float>& Container::require(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw FormatError("container has no tensor '" + name + "'");
}

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  void need(std::size_t n, const char* what) const {
    if (n > b_.size() - pos_) {
      throw FormatError(std::string("corrupt or truncated ") + what + " at byte " +
                        std::to_string(pos_) + ": needs " + std::to_string(n) +
                        " bytes, " + std::to_string(b_.size() - pos_) + " left");
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string text(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(b_.begin() + pos_, b_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'G', 'R', 'N', '1'};

}  // namespace

std::vector<std::uint8_t> encode_container(const Container& c) {
  Writer w;
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.u32(kCheckpointVersion);
  w.text(c.config.serialize());
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    w.text(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (float v : t.data()) w.u32(std::bit_cast<std::uint32_t>(v));
  }
  return std::move(w.out);
}

Container decode_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a GRN1 container (bad magic)");
  }
  std::vector<std::uint8_t> body(bytes.begin() + 4, bytes.end());
  Reader r(body);
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported container version " + std::to_string(version) +
                      " (this build reads version " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Container c;
  try {
    c.config = KeyValues::parse(r.text("config block"));
  } catch (const UsageError& e) {
    throw FormatError(std::string("corrupt config block: ") + e.what());
  }
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.text("tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    r.need(std::size_t{rank} * 8, "tensor dims");
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint64_t d = r.u64("tensor dims");
      if (d == 0 || d > (std::uint64_t{1} << 40) / total) {
        throw FormatError("tensor '" + name + "' has an invalid dimension " +
                          std::to_string(d));
      }
      total *= d;
      shape.push_back(static_cast<std::size_t>(d));
    }
    r.need(total * 4, "tensor data");
    std::vector<float> data(total);
    for (auto& v : data) v = std::bit_cast<float>(r.u32("tensor data"));
    c.tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  if (!r.done()) {
    throw FormatError("trailing bytes after the last tensor at byte " +
                      std::to_string(r.pos() + 4));
  }
  return c;
}

void save_container(const Container& c, const std::string& path) {
  const auto bytes = encode_container(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path);
}

Container load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return decode_container(bytes);
}

namespace {

template <typename T>
void put(Container& c, const std::string& prefix, const std::vector<NamedRef<T>>& refs) {
  for (const auto& [name, t] : refs) c.tensors.emplace_back(prefix + name, t->template cast<float>());
}

template <typename T>
void put_adam(Container& c, const std::string& prefix, const AdamState<T>& s,
              const std::vector<NamedRef<T>>& refs) {
  if (s.m.size() != refs.size()) {
    throw ContractError("optimizer state does not match the parameter list");
  }
  c.config.set(prefix + "step", std::to_string(s.step));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    c.tensors.emplace_back(prefix + "m." + refs[i].first, s.m[i].template cast<float>());
    c.tensors.emplace_back(prefix + "v." + refs[i].first, s.v[i].template cast<float>());
  }
}

template <typename T>
void take(const Container& c, const std::string& prefix, const std::vector<NamedRef<T>>& refs) {
  for (const auto& [name, t] : refs) {
    const Tensor<float>& src = c.require(prefix + name);
    if (src.shape() != t->shape()) {
      throw FormatError("tensor '" + prefix + name + "' has shape " +
                        shape_string(src.shape()) + ", the config implies " +
                        shape_string(t->shape()));
    }
    *t = src.template cast<T>();
  }
}

template <typename T>
std::optional<AdamState<T>> take_adam(const Container& c, const std::string& prefix,
                                      const std::vector<NamedRef<T>>& refs) {
  if (!c.config.has(prefix + "step")) return std::nullopt;
  AdamState<T> s;
  s.step = c.config.get_u64(prefix + "step", 0);
  for (const auto& [name, t] : refs) {
    s.m.push_back(c.require(prefix + "m." + name).template cast<T>());
    s.v.push_back(c.require(prefix + "v." + name).template cast<T>());
    if (s.m.back().shape() != t->shape() || s.v.back().shape() != t->shape()) {
      throw FormatError("optimizer moments for '" + name + "' do not match the parameter");
    }
  }
  return s;
}

}  // namespace

template <typename T>
Container pack_models(GranGenerator<T>& gen, Discriminator<T>& disc,
                      const AdamState<T>* adam_g, const AdamState<T>* adam_d,
                      const KeyValues& extra) {
  Container c;
  gen.config.write(c.config, "gen.");
  disc.config.write(c.config, "disc.");
  for (const auto& [k, v] : extra.entries()) c.config.set("meta." + k, v);
  put(c, "gen.", gen.parameters());
  put(c, "gen.", gen.buffers());
  put(c, "disc.", disc.parameters());
  put(c, "disc.", disc.buffers());
  if (adam_g) put_adam(c, "adam.gen.", *adam_g, gen.parameters());
  if (adam_d) put_adam(c, "adam.disc.", *adam_d, disc.parameters());
  return c;
}

template <typename T>
ModelBundle<T> unpack_models(const Container& c) {
  GranConfig gc;
  DiscriminatorConfig dc;
  try {
    gc = GranConfig::read(c.config, "gen.");
    dc = DiscriminatorConfig::read(c.config, "disc.");
    gc.validate();
    dc.validate();
  } catch (const UsageError& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  }
  ModelBundle<T> b{GranGenerator<T>::init(gc, 0), Discriminator<T>::init(dc, 0),
                   std::nullopt, std::nullopt, {}};
  take(c, "gen.", b.gen.parameters());
  take(c, "gen.", b.gen.buffers());
  take(c, "disc.", b.disc.parameters());
  take(c, "disc.", b.disc.buffers());
  b.adam_g = take_adam(c, "adam.gen.", b.gen.parameters());
  b.adam_d = take_adam(c, "adam.disc.", b.disc.parameters());
  for (const auto& [k, v] : c.config.entries()) {
    if (k.rfind("meta.", 0) == 0) b.extra.set(k.substr(5), v);
  }
  return b;
}

template <typename T>
void save_checkpoint(const std::string& path, GranGenerator<T>& gen,
                     Discriminator<T>& disc, const AdamState<T>* adam_g,
                     const AdamState<T>* adam_d, const KeyValues& extra) {
  save_container(pack_models(gen, disc, adam_g, adam_d, extra), path);
}

template <typename T>
ModelBundle<T> load_checkpoint(const std::string& path) {
  return unpack_models<T>(load_container(path));
}

#define GRANLAB_INSTANTIATE(T)                                                         \
  template Container pack_models(GranGenerator<T>&, Discriminator<T>&,                 \
                                 const AdamState<T>*, const AdamState<T>*,             \
                                 const KeyValues&);                                    \
  template ModelBundle<T> unpack_models<T>(const Container&);                          \
  template void save_checkpoint(const std::string&, GranGenerator<T>&, Discriminator<T>&, \
                                const AdamState<T>*, const AdamState<T>*,              \
                                const KeyValues&);                                     \
  template ModelBundle<T> load_checkpoint<T>(const std::string&);

GRANLAB_INSTANTIATE(float)
GRANLAB_INSTANTIATE(double)
#undef GRANLAB_INSTANTIATE

}  // namespace granlab
