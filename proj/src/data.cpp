#include "granlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "granlab/error.hpp"

namespace granlab {

template <typename T>
std::pair<Dataset<T>, Dataset<T>> split_dataset(const Dataset<T>& all,
                                                std::size_t test_count) {
  const std::size_t n = all.size();
  if (test_count == 0 || test_count >= n) {
    throw ContractError("split: test count " + std::to_string(test_count) +
                        " must be between 1 and " + std::to_string(n - 1));
  }
  Dataset<T> train{take_rows(all.x, 0, n - test_count), Split::train, all.normalized};
  Dataset<T> test{take_rows(all.x, n - test_count, n), Split::test, all.normalized};
  return {std::move(train), std::move(test)};
}

template <typename T>
Tensor<T> take_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin >= end || end > x.dim(0)) {
    throw ContractError("take_rows: bad range [" + std::to_string(begin) + ", " +
                        std::to_string(end) + ") of " + shape_string(x.shape()));
  }
  Shape s = x.shape();
  s[0] = end - begin;
  const std::size_t row = x.size() / x.dim(0);
  std::vector<T> data(x.data().begin() + begin * row, x.data().begin() + end * row);
  return Tensor<T>(std::move(s), std::move(data));
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  Shape s = x.shape();
  s[0] = rows.size();
  const std::size_t row = x.size() / x.dim(0);
  Tensor<T> out(std::move(s));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.data().begin() + rows[i] * row, row, out.data().begin() + i * row);
  }
  return out;
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at,
                        const char* what) {
  if (at + 4 > b.size()) {
    throw ParseError(std::string("truncated header: missing ") + what, b.size());
  }
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::vector<std::size_t> parse_idx_header(const std::vector<std::uint8_t>& b,
                                          std::uint32_t expected_magic) {
  const std::uint32_t magic = read_be32(b, 0, "magic number");
  if (magic != expected_magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad magic 0x%08x, expected 0x%08x", magic,
                  expected_magic);
    throw ParseError(buf, 0);
  }
  const std::size_t rank = expected_magic & 0xff;
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t at = 4 + 4 * i;
    const std::uint32_t d = read_be32(b, at, "dimension");
    if (d == 0) throw ParseError("zero dimension", at);
    dims.push_back(d);
  }
  std::size_t payload = 1;
  for (auto d : dims) payload *= d;
  const std::size_t start = 4 + 4 * rank;
  if (b.size() < start + payload) {
    throw ParseError("truncated payload: expected " + std::to_string(payload) +
                         " bytes of data, found " + std::to_string(b.size() - start),
                     b.size());
  }
  if (b.size() > start + payload) {
    throw ParseError("trailing bytes after payload", start + payload);
  }
  return dims;
}

}  // namespace

template <typename T>
Dataset<T> parse_idx_images(const std::vector<std::uint8_t>& bytes) {
  const auto dims = parse_idx_header(bytes, 0x00000803);
  Tensor<T> x({dims[0], 1, dims[1], dims[2]});
  const std::size_t start = 16;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<T>(bytes[start + i]) / T{255};
  }
  return {std::move(x), Split::train, true};
}

template <typename T>
Dataset<T> load_idx(const std::string& path) {
  return parse_idx_images<T>(read_file(path));
}

std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
  parse_idx_header(bytes, 0x00000801);
  return {bytes.begin() + 8, bytes.end()};
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
  return parse_idx_labels(read_file(path));
}

template <typename T>
RingData<T> gen_gaussian_ring(std::size_t modes, double radius, double sigma,
                              std::size_t count, std::uint64_t seed) {
  if (modes == 0 || count == 0) throw ContractError("ring needs modes and count >= 1");
  if (sigma < 0 || radius < 0) throw ContractError("ring radius and sigma must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, modes - 1);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::array<double, 2>> means(modes);
  for (std::size_t k = 0; k < modes; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(modes);
    means[k] = {radius * std::cos(a), radius * std::sin(a)};
  }
  RingData<T> out;
  std::vector<std::array<double, 2>> pts(count);
  out.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = pick(rng);
    const double dx = noise(rng), dy = noise(rng);
    out.labels[i] = k;
    pts[i] = {means[k][0] + sigma * dx, means[k][1] + sigma * dy};
  }

  std::array<double, 2> lo{pts[0]}, hi{pts[0]};
  for (const auto& p : pts) {
    for (int a = 0; a < 2; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  const double range = std::max(hi[0] - lo[0], hi[1] - lo[1]);
  const double scale = range > 0 ? 1.0 / range : 1.0;
  std::array<double, 2> offset;
  for (int a = 0; a < 2; ++a) offset[a] = (1.0 - (hi[a] - lo[a]) * scale) / 2.0;
  auto map = [&](const std::array<double, 2>& p) {
    return std::array<double, 2>{(p[0] - lo[0]) * scale + offset[0],
                                 (p[1] - lo[1]) * scale + offset[1]};
  };

  Tensor<T> x({count, 2});
  for (std::size_t i = 0; i < count; ++i) {
    const auto q = map(pts[i]);
    x[2 * i] = static_cast<T>(std::clamp(q[0], 0.0, 1.0));
    x[2 * i + 1] = static_cast<T>(std::clamp(q[1], 0.0, 1.0));
  }
  for (auto& m : means) m = map(m);
  out.data = {std::move(x), Split::train, true};
  out.means = std::move(means);
  out.sigma = sigma * scale;
  return out;
}

template <typename T>
ShapesData<T> gen_shapes(std::size_t size, std::size_t count, std::uint64_t seed) {
  if (size < 4) throw ContractError("gen_shapes needs size >= 4, got " + std::to_string(size));
  if (count == 0) throw ContractError("gen_shapes needs count >= 1");
  std::mt19937_64 rng(seed);
  auto uniform = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  ShapesData<T> out;
  Tensor<T> x({count, 1, size, size});
  for (std::size_t n = 0; n < count; ++n) {
    T* img = x.data().data() + n * size * size;
    auto lit = [&](std::size_t r, std::size_t c) { img[r * size + c] = T{1}; };
    const auto kind = static_cast<ShapeKind>(uniform(0, kShapeKinds - 1));
    out.labels.push_back(kind);
    switch (kind) {
      case ShapeKind::filled_rect:
      case ShapeKind::hollow_rect: {
        const std::size_t min_side = kind == ShapeKind::filled_rect ? 2 : 3;
        const std::size_t h = uniform(min_side, size - 1);
        const std::size_t w = uniform(min_side, size - 1);
        const std::size_t top = uniform(0, size - h);
        const std::size_t left = uniform(0, size - w);
        for (std::size_t r = top; r < top + h; ++r) {
          for (std::size_t c = left; c < left + w; ++c) {
            const bool edge = r == top || r + 1 == top + h || c == left || c + 1 == left + w;
            if (kind == ShapeKind::filled_rect || edge) lit(r, c);
          }
        }
        break;
      }
      case ShapeKind::cross: {
        const std::size_t cr = uniform(1, size - 2);
        const std::size_t cc = uniform(1, size - 2);
        const std::size_t reach =
            std::min({cr, size - 1 - cr, cc, size - 1 - cc});
        const std::size_t arm = uniform(1, reach);
        for (std::size_t d = 0; d <= 2 * arm; ++d) {
          lit(cr - arm + d, cc);
          lit(cr, cc - arm + d);
        }
        break;
      }
    }
  }
  out.data = {std::move(x), Split::train, true};
  return out;
}

template <typename T>
Tensor<T> normalize_minmax(const Tensor<T>& x) {
  const auto [lo, hi] = std::minmax_element(x.data().begin(), x.data().end());
  const T a = *lo, range = *hi - *lo;
  Tensor<T> out(x.shape());
  if (range == T{0}) return out;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - a) / range;
  return out;
}

template <typename T>
BatchStream<T>::BatchStream(const Tensor<T>& x, std::size_t batch_size,
                            std::uint64_t seed)
    : x_(&x), n_(x.rank() ? x.dim(0) : 0), batch_(batch_size), seed_(seed) {
  if (batch_size == 0 || batch_size > n_) {
    throw ContractError("batch size " + std::to_string(batch_size) +
                        " must be between 1 and the dataset size " + std::to_string(n_));
  }
  reshuffle();
}

template <typename T>
void BatchStream<T>::reshuffle() {
  order_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
  // One generator per epoch keeps any epoch reproducible on its own.
  std::mt19937_64 rng(seed_ + 0x9e3779b97f4a7c15ULL * (epoch_ + 1));
  std::shuffle(order_.begin(), order_.end(), rng);
  cursor_ = 0;
}

template <typename T>
Tensor<T> BatchStream<T>::next() {
  if (cursor_ + batch_ > n_) {
    ++epoch_;
    reshuffle();
  }
  last_.assign(order_.begin() + cursor_, order_.begin() + cursor_ + batch_);
  cursor_ += batch_;
  return gather_rows(*x_, last_);
}

#define GRANLAB_INSTANTIATE(T)                                                      \
  template std::pair<Dataset<T>, Dataset<T>> split_dataset(const Dataset<T>&,       \
                                                           std::size_t);            \
  template Tensor<T> take_rows(const Tensor<T>&, std::size_t, std::size_t);         \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::size_t>&); \
  template Dataset<T> load_idx<T>(const std::string&);                              \
  template Dataset<T> parse_idx_images<T>(const std::vector<std::uint8_t>&);        \
  template RingData<T> gen_gaussian_ring<T>(std::size_t, double, double,            \
                                            std::size_t, std::uint64_t);            \
  template ShapesData<T> gen_shapes<T>(std::size_t, std::size_t, std::uint64_t);    \
  template Tensor<T> normalize_minmax(const Tensor<T>&);                            \
  template class BatchStream<T>;

GRANLAB_INSTANTIATE(float)
GRANLAB_INSTANTIATE(double)
#undef GRANLAB_INSTANTIATE

}  // namespace granlab
