#include "granlab/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "granlab/error.hpp"

namespace granlab {

namespace {

template <typename T>
std::uint8_t to_byte(T v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void append_image(std::vector<std::uint8_t>& out, std::size_t channels,
                  std::size_t h, std::size_t w, auto&& pixel) {
  if (channels != 1 && channels != 3) {
    throw DimensionError("PNM images need 1 or 3 channels, got " + std::to_string(channels));
  }
  const std::string header = std::string(channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.insert(out.end(), header.begin(), header.end());
  // PPM interleaves channels per pixel; tensors are planar.
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t k = 0; k < channels; ++k) out.push_back(pixel(k, r, c));
}

struct HeaderReader {
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_;

  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (std::size_t{1} << 24)) throw ParseError(std::string(what) + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("expected ") + what, pos_);
    return v;
  }
};

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_pnm(const Tensor<T>& image) {
  if (image.rank() != 3) {
    throw DimensionError("encode_pnm expects [C, H, W], got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<std::uint8_t> out;
  append_image(out, image.dim(0), h, w, [&](std::size_t k, std::size_t r, std::size_t c) {
    return to_byte(image[(k * h + r) * w + c]);
  });
  return out;
}

template <typename T>
std::vector<std::uint8_t> encode_pnm_stack(const Tensor<T>& batch) {
  if (batch.rank() != 4) {
    throw DimensionError("encode_pnm_stack expects [N, C, H, W], got " +
                         shape_string(batch.shape()));
  }
  const std::size_t ch = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::vector<std::uint8_t> out;
  for (std::size_t n = 0; n < batch.dim(0); ++n) {
    append_image(out, ch, h, w, [&](std::size_t k, std::size_t r, std::size_t c) {
      return to_byte(batch[((n * ch + k) * h + r) * w + c]);
    });
  }
  return out;
}

template <typename T>
void write_pnm(const std::string& path, const Tensor<T>& image_or_batch) {
  const auto bytes = image_or_batch.rank() == 4 ? encode_pnm_stack(image_or_batch)
                                                : encode_pnm(image_or_batch);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path);
}

template <typename T>
Tensor<T> decode_pnm_stack(const std::vector<std::uint8_t>& bytes) {
  std::vector<T> values;
  std::size_t count = 0, channels = 0, height = 0, width = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t start = pos;
    if (pos + 2 > bytes.size() || bytes[pos] != 'P' || (bytes[pos + 1] != '5' && bytes[pos + 1] != '6')) {
      throw ParseError("expected P5 or P6 magic", pos);
    }
    const std::size_t ch = bytes[pos + 1] == '5' ? 1 : 3;
    HeaderReader hr{bytes, pos + 2};
    const std::size_t w = hr.number("width");
    const std::size_t h = hr.number("height");
    const std::size_t maxval = hr.number("maxval");
    if (w == 0 || h == 0) throw ParseError("zero image dimension", start);
    if (maxval == 0 || maxval > 255) {
      throw ParseError("maxval " + std::to_string(maxval) + " not in 1..255", hr.pos_);
    }
    if (hr.pos_ >= bytes.size() || !std::isspace(bytes[hr.pos_])) {
      throw ParseError("missing whitespace after header", hr.pos_);
    }
    pos = hr.pos_ + 1;
    if (count == 0) {
      channels = ch, height = h, width = w;
    } else if (ch != channels || h != height || w != width) {
      throw ParseError("image " + std::to_string(count + 1) + " differs in size from the first",
                       start);
    }
    const std::size_t n = ch * h * w;
    if (bytes.size() - pos < n) {
      throw ParseError("truncated pixel data: expected " + std::to_string(n) + " bytes",
                       bytes.size());
    }
    const std::size_t base = values.size();
    values.resize(base + n);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        for (std::size_t k = 0; k < ch; ++k) {
          values[base + (k * h + r) * w + c] =
              static_cast<T>(bytes[pos++]) / static_cast<T>(maxval);
        }
    ++count;
    // Tolerate trailing whitespace between or after images.
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
  }
  if (count == 0) throw ParseError("no images in input", 0);
  return Tensor<T>({count, channels, height, width}, std::move(values));
}

template <typename T>
Tensor<T> read_pnm_stack(const std::string& path) {
  namespace fs = std::filesystem;
  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());
    return std::vector<std::uint8_t>{std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>()};
  };
  if (!fs::is_directory(path)) return decode_pnm_stack<T>(read(path));

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
  }
  if (files.empty()) throw Error("no .pgm or .ppm files in " + path);
  std::sort(files.begin(), files.end());
  std::vector<std::uint8_t> all;
  for (const auto& f : files) {
    auto b = read(f);
    all.insert(all.end(), b.begin(), b.end());
  }
  return decode_pnm_stack<T>(all);
}

template <typename T>
Tensor<T> tile_grid(const Tensor<T>& batch, std::size_t cols, std::size_t pad, T background) {
  if (batch.rank() != 4) {
    throw DimensionError("tile_grid expects [N, C, H, W], got " + shape_string(batch.shape()));
  }
  const std::size_t n = batch.dim(0), ch = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  if (cols == 0) cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  cols = std::min(cols, n);
  const std::size_t rows = (n + cols - 1) / cols;
  const std::size_t gh = rows * h + (rows - 1) * pad, gw = cols * w + (cols - 1) * pad;
  Tensor<T> grid({ch, gh, gw}, background);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t top = (i / cols) * (h + pad), left = (i % cols) * (w + pad);
    for (std::size_t k = 0; k < ch; ++k)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          grid.at(k, top + r, left + c) = batch[((i * ch + k) * h + r) * w + c];
        }
  }
  return grid;
}

#define GRANLAB_INSTANTIATE(T)                                                     \
  template std::vector<std::uint8_t> encode_pnm(const Tensor<T>&);                 \
  template std::vector<std::uint8_t> encode_pnm_stack(const Tensor<T>&);           \
  template void write_pnm(const std::string&, const Tensor<T>&);                   \
  template Tensor<T> decode_pnm_stack<T>(const std::vector<std::uint8_t>&);        \
  template Tensor<T> read_pnm_stack<T>(const std::string&);                        \
  template Tensor<T> tile_grid(const Tensor<T>&, std::size_t, std::size_t, T);

GRANLAB_INSTANTIATE(float)
GRANLAB_INSTANTIATE(double)
#undef GRANLAB_INSTANTIATE

}  // namespace granlab
