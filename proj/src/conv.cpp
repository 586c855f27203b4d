#include "granlab/conv.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace granlab {

namespace {

// Every convolution is run as a batched 2D one; 1D tensors get a unit
// height axis.
struct Geometry {
  std::size_t batch = 1;
  std::size_t cin = 0, cout = 0;  // x side / y side channels
  std::size_t ih = 1, iw = 1;     // x side spatial
  std::size_t oh = 1, ow = 1;     // y side spatial
  std::size_t kh = 1, kw = 1;
  std::size_t sh = 1, sw = 1;
  std::size_t ph = 0, pw = 0;
  bool batched = false;
  std::size_t spatial = 1;
};

std::string pair_string(const Shape& a, const Shape& b) {
  return shape_string(a) + " and kernels " + shape_string(b);
}

std::size_t spatial_rank_of(const Shape& kernel_shape) {
  if (kernel_shape.size() != 3 && kernel_shape.size() != 4) {
    throw DimensionError("kernels must be [out,in,k] or [out,in,kh,kw], got " +
                         shape_string(kernel_shape));
  }
  return kernel_shape.size() - 2;
}

// Fills batch/channels/spatial of one side from a tensor shape.
void read_side(const Shape& shape, const Shape& kernel_shape,
               std::size_t spatial, Geometry& g, std::size_t& channels,
               std::size_t& h, std::size_t& w, const char* what) {
  if (shape.size() != spatial + 1 && shape.size() != spatial + 2) {
    throw DimensionError(std::string(what) + ": input " +
                         pair_string(shape, kernel_shape) +
                         " have incompatible ranks");
  }
  g.batched = shape.size() == spatial + 2;
  const std::size_t off = g.batched ? 1 : 0;
  g.batch = g.batched ? shape[0] : 1;
  channels = shape[off];
  if (spatial == 1) {
    h = 1;
    w = shape[off + 1];
  } else {
    h = shape[off + 1];
    w = shape[off + 2];
  }
}

void read_kernel(const Shape& kernel_shape, std::size_t spatial,
                 const ConvSpec& spec, Geometry& g) {
  g.spatial = spatial;
  g.cout = kernel_shape[0];
  g.cin = kernel_shape[1];
  if (spatial == 1) {
    g.kh = 1;
    g.kw = kernel_shape[2];
    g.sh = 1;
    g.ph = 0;
  } else {
    g.kh = kernel_shape[2];
    g.kw = kernel_shape[3];
    g.sh = spec.stride;
    g.ph = spec.padding;
  }
  g.sw = spec.stride;
  g.pw = spec.padding;
  if (spec.stride == 0) throw ContractError("convolution stride must be >= 1");
}

Shape side_shape(const Geometry& g, std::size_t channels, std::size_t h,
                 std::size_t w) {
  Shape s;
  if (g.batched) s.push_back(g.batch);
  s.push_back(channels);
  if (g.spatial == 2) s.push_back(h);
  s.push_back(w);
  return s;
}

// Output positions o in [lo, hi) whose tap k lands inside [0, in).
inline void tap_range(std::size_t k, std::size_t s, std::size_t p,
                      std::size_t in, std::size_t out, std::size_t& lo,
                      std::size_t& hi) {
  // o*s + k - p in [0, in)  <=>  o*s >= p - k  and  o*s <= in - 1 + p - k
  const long long kk = static_cast<long long>(k);
  const long long pp = static_cast<long long>(p);
  const long long ss = static_cast<long long>(s);
  long long l = 0;
  if (pp > kk) l = (pp - kk + ss - 1) / ss;
  long long top = static_cast<long long>(in) - 1 + pp - kk;
  long long h = top < 0 ? 0 : top / ss + 1;
  if (h > static_cast<long long>(out)) h = static_cast<long long>(out);
  if (l > h) l = h;
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(h);
}

// The kernels run as im2col GEMMs over chunks of the batch: rows of the
// column matrix are (sample, output position), columns are (ci, ky, kx).
// Small feature maps make the direct loops all overhead.
constexpr std::size_t kColBudget = std::size_t{1} << 21;  // elements per chunk

struct Chunking {
  std::size_t taps, positions, per_chunk;
  explicit Chunking(const Geometry& g)
      : taps(g.cin * g.kh * g.kw),
        positions(g.oh * g.ow),
        per_chunk(std::max<std::size_t>(1, kColBudget / (taps * positions))) {}
};

// Reads x[n0 .. n0+count) into col ([count*P, K]); padding taps read 0.
template <typename T>
void im2col(const Geometry& g, const T* x, std::size_t n0, std::size_t count, T* col) {
  const std::size_t xs = g.cin * g.ih * g.iw, k_all = g.cin * g.kh * g.kw;
  std::fill(col, col + count * g.oh * g.ow * k_all, T{0});
  for (std::size_t n = 0; n < count; ++n) {
    const T* xn = x + (n0 + n) * xs;
    T* cn = col + n * g.oh * g.ow * k_all;
    for (std::size_t ci = 0; ci < g.cin; ++ci)
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        std::size_t oy0, oy1;
        tap_range(ky, g.sh, g.ph, g.ih, g.oh, oy0, oy1);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          std::size_t ox0, ox1;
          tap_range(kx, g.sw, g.pw, g.iw, g.ow, ox0, ox1);
          const std::size_t k = (ci * g.kh + ky) * g.kw + kx;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const T* xrow = xn + (ci * g.ih + oy * g.sh + ky - g.ph) * g.iw;
            for (std::size_t ox = ox0; ox < ox1; ++ox) {
              cn[(oy * g.ow + ox) * k_all + k] = xrow[ox * g.sw + kx - g.pw];
            }
          }
        }
      }
  }
}

// x[n0 ..] += col2im(col)
template <typename T>
void col2im_add(const Geometry& g, const T* col, std::size_t n0, std::size_t count, T* x) {
  const std::size_t xs = g.cin * g.ih * g.iw, k_all = g.cin * g.kh * g.kw;
  for (std::size_t n = 0; n < count; ++n) {
    T* xn = x + (n0 + n) * xs;
    const T* cn = col + n * g.oh * g.ow * k_all;
    for (std::size_t ci = 0; ci < g.cin; ++ci)
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        std::size_t oy0, oy1;
        tap_range(ky, g.sh, g.ph, g.ih, g.oh, oy0, oy1);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          std::size_t ox0, ox1;
          tap_range(kx, g.sw, g.pw, g.iw, g.ow, ox0, ox1);
          const std::size_t k = (ci * g.kh + ky) * g.kw + kx;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            T* xrow = xn + (ci * g.ih + oy * g.sh + ky - g.ph) * g.iw;
            for (std::size_t ox = ox0; ox < ox1; ++ox) {
              xrow[ox * g.sw + kx - g.pw] += cn[(oy * g.ow + ox) * k_all + k];
            }
          }
        }
      }
  }
}

// Output-side values of a chunk as rows [(n, p), co] and back.
template <typename T>
void gather_rows_t(const Geometry& g, const T* y, std::size_t n0, std::size_t count, T* rows) {
  const std::size_t P = g.oh * g.ow;
  for (std::size_t n = 0; n < count; ++n)
    for (std::size_t co = 0; co < g.cout; ++co) {
      const T* yc = y + ((n0 + n) * g.cout + co) * P;
      for (std::size_t p = 0; p < P; ++p) rows[(n * P + p) * g.cout + co] = yc[p];
    }
}

template <typename T>
void scatter_rows_t(const Geometry& g, const T* rows, std::size_t n0, std::size_t count, T* y) {
  const std::size_t P = g.oh * g.ow;
  for (std::size_t n = 0; n < count; ++n)
    for (std::size_t co = 0; co < g.cout; ++co) {
      T* yc = y + ((n0 + n) * g.cout + co) * P;
      for (std::size_t p = 0; p < P; ++p) yc[p] += rows[(n * P + p) * g.cout + co];
    }
}

// y += conv(x, W)
template <typename T>
void forward_kernel(const Geometry& g, const T* x, const T* w, T* y) {
  const Chunking c(g);
  // W^T as [K, cout] so the inner loop runs along contiguous outputs.
  std::vector<T> wt(c.taps * g.cout);
  for (std::size_t co = 0; co < g.cout; ++co)
    for (std::size_t k = 0; k < c.taps; ++k) wt[k * g.cout + co] = w[co * c.taps + k];
  std::vector<T> col, rows;
  for (std::size_t n0 = 0; n0 < g.batch; n0 += c.per_chunk) {
    const std::size_t count = std::min(c.per_chunk, g.batch - n0);
    const std::size_t m = count * c.positions;
    col.resize(m * c.taps);
    rows.assign(m * g.cout, T{0});
    im2col(g, x, n0, count, col.data());
    for (std::size_t r = 0; r < m; ++r) {
      T* out = rows.data() + r * g.cout;
      const T* in = col.data() + r * c.taps;
      for (std::size_t k = 0; k < c.taps; ++k) {
        const T v = in[k];
        const T* wrow = wt.data() + k * g.cout;
        for (std::size_t co = 0; co < g.cout; ++co) out[co] += v * wrow[co];
      }
    }
    scatter_rows_t(g, rows.data(), n0, count, y);
  }
}

// gx += conv^T(gy, W)
template <typename T>
void input_grad_kernel(const Geometry& g, const T* gy, const T* w, T* gx) {
  const Chunking c(g);
  std::vector<T> col, rows;
  for (std::size_t n0 = 0; n0 < g.batch; n0 += c.per_chunk) {
    const std::size_t count = std::min(c.per_chunk, g.batch - n0);
    const std::size_t m = count * c.positions;
    rows.resize(m * g.cout);
    col.assign(m * c.taps, T{0});
    gather_rows_t(g, gy, n0, count, rows.data());
    for (std::size_t r = 0; r < m; ++r) {
      T* out = col.data() + r * c.taps;
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T v = rows[r * g.cout + co];
        const T* wrow = w + co * c.taps;
        for (std::size_t k = 0; k < c.taps; ++k) out[k] += v * wrow[k];
      }
    }
    col2im_add(g, col.data(), n0, count, gx);
  }
}

// gw += sum_n gy (x) x
template <typename T>
void kernel_grad_kernel(const Geometry& g, const T* x, const T* gy, T* gw) {
  const Chunking c(g);
  std::vector<T> col, rows;
  for (std::size_t n0 = 0; n0 < g.batch; n0 += c.per_chunk) {
    const std::size_t count = std::min(c.per_chunk, g.batch - n0);
    const std::size_t m = count * c.positions;
    col.resize(m * c.taps);
    rows.resize(m * g.cout);
    im2col(g, x, n0, count, col.data());
    gather_rows_t(g, gy, n0, count, rows.data());
    for (std::size_t r = 0; r < m; ++r) {
      const T* in = col.data() + r * c.taps;
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T v = rows[r * g.cout + co];
        T* out = gw + co * c.taps;
        for (std::size_t k = 0; k < c.taps; ++k) out[k] += v * in[k];
      }
    }
  }
}

Geometry conv_geometry(const Shape& input, const Shape& kernels,
                       const ConvSpec& spec, const char* what) {
  const std::size_t spatial = spatial_rank_of(kernels);
  Geometry g;
  read_kernel(kernels, spatial, spec, g);
  std::size_t channels = 0;
  read_side(input, kernels, spatial, g, channels, g.ih, g.iw, what);
  if (channels != g.cin) {
    throw DimensionError(std::string(what) + ": input " +
                         pair_string(input, kernels) +
                         " disagree on input channels");
  }
  try {
    g.oh = spatial == 2 ? conv_output_size(g.ih, g.kh, spec) : 1;
    g.ow = conv_output_size(g.iw, g.kw, spec);
  } catch (const DimensionError& e) {
    throw DimensionError(std::string(what) + ": input " +
                         pair_string(input, kernels) + ": " + e.what());
  }
  return g;
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel,
                             const ConvSpec& spec) {
  if (spec.stride == 0) throw ContractError("convolution stride must be >= 1");
  const std::size_t padded = in + 2 * spec.padding;
  if (padded < kernel) {
    throw DimensionError("kernel " + std::to_string(kernel) +
                         " exceeds padded extent " + std::to_string(padded));
  }
  return (padded - kernel) / spec.stride + 1;
}

std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel,
                                       const ConvSpec& spec) {
  if (spec.stride == 0) throw ContractError("convolution stride must be >= 1");
  if (spec.output_padding >= spec.stride && spec.output_padding > 0) {
    throw DimensionError("output padding " +
                         std::to_string(spec.output_padding) +
                         " must be smaller than stride " +
                         std::to_string(spec.stride));
  }
  const std::size_t full = (in - 1) * spec.stride + kernel + spec.output_padding;
  if (full <= 2 * spec.padding) {
    throw DimensionError("transpose output would be empty for input " +
                         std::to_string(in) + ", kernel " +
                         std::to_string(kernel));
  }
  return full - 2 * spec.padding;
}

template <typename T>
Tensor<T> conv(const Tensor<T>& input, const Tensor<T>& kernels,
               const ConvSpec& spec) {
  const Geometry g = conv_geometry(input.shape(), kernels.shape(), spec, "conv");
  Tensor<T> out(side_shape(g, g.cout, g.oh, g.ow));
  forward_kernel(g, input.data().data(), kernels.data().data(),
                 out.data().data());
  return out;
}

template <typename T>
Tensor<T> conv_input_grad(const Tensor<T>& grad_out, const Tensor<T>& kernels,
                          const Shape& input_shape, const ConvSpec& spec) {
  const Geometry g =
      conv_geometry(input_shape, kernels.shape(), spec, "conv_input_grad");
  const Shape expect = side_shape(g, g.cout, g.oh, g.ow);
  if (grad_out.shape() != expect) {
    throw DimensionError("conv_input_grad: gradient " +
                         shape_string(grad_out.shape()) + " does not match " +
                         shape_string(expect) + " for input " +
                         shape_string(input_shape));
  }
  Tensor<T> gx(input_shape);
  input_grad_kernel(g, grad_out.data().data(), kernels.data().data(),
                    gx.data().data());
  return gx;
}

template <typename T>
Tensor<T> conv_kernel_grad(const Tensor<T>& input, const Tensor<T>& grad_out,
                           const Shape& kernel_shape, const ConvSpec& spec) {
  const Geometry g =
      conv_geometry(input.shape(), kernel_shape, spec, "conv_kernel_grad");
  const Shape expect = side_shape(g, g.cout, g.oh, g.ow);
  if (grad_out.shape() != expect) {
    throw DimensionError("conv_kernel_grad: gradient " +
                         shape_string(grad_out.shape()) + " does not match " +
                         shape_string(expect));
  }
  Tensor<T> gw(kernel_shape);
  kernel_grad_kernel(g, input.data().data(), grad_out.data().data(),
                     gw.data().data());
  return gw;
}

template <typename T>
Tensor<T> conv_transpose(const Tensor<T>& input, const Tensor<T>& kernels,
                         const ConvSpec& spec) {
  const Shape& ks = kernels.shape();
  const std::size_t spatial = spatial_rank_of(ks);
  Geometry g;
  read_kernel(ks, spatial, spec, g);
  std::size_t channels = 0, h = 1, w = 1;
  read_side(input.shape(), ks, spatial, g, channels, h, w, "conv_transpose");
  if (channels != g.cout) {
    throw DimensionError("conv_transpose: input " +
                         pair_string(input.shape(), ks) +
                         " disagree on input channels");
  }
  std::size_t out_h = 1, out_w = 1;
  try {
    if (spatial == 2) out_h = conv_transpose_output_size(h, g.kh, spec);
    out_w = conv_transpose_output_size(w, g.kw, spec);
  } catch (const DimensionError& e) {
    throw DimensionError("conv_transpose: input " +
                         pair_string(input.shape(), ks) + ": " + e.what());
  }
  return conv_input_grad(input, kernels, side_shape(g, g.cin, out_h, out_w),
                         spec);
}

template <typename T>
Tensor<T> conv_as_matrix(const Tensor<T>& kernels, const Shape& input_shape,
                         const ConvSpec& spec) {
  const Shape& ks = kernels.shape();
  const std::size_t spatial = spatial_rank_of(ks);
  if (input_shape.size() != spatial + 1) {
    throw DimensionError("conv_as_matrix: input shape " +
                         shape_string(input_shape) +
                         " must be unbatched for kernels " + shape_string(ks));
  }
  const Geometry g = conv_geometry(input_shape, ks, spec, "conv_as_matrix");
  const std::size_t rows = g.cout * g.oh * g.ow;
  const std::size_t cols = g.cin * g.ih * g.iw;
  if (rows * cols > kConvMatrixMaxEntries) {
    throw CapacityError("conv_as_matrix: " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " exceeds " +
                        std::to_string(kConvMatrixMaxEntries) + " entries");
  }
  Tensor<T> m({rows, cols});
  // Row (co, oy, ox) holds the kernel taps at the input positions its
  // receptive field covers; positions falling into the padding are dropped.
  for (std::size_t co = 0; co < g.cout; ++co)
    for (std::size_t oy = 0; oy < g.oh; ++oy)
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const std::size_t row = (co * g.oh + oy) * g.ow + ox;
        for (std::size_t ci = 0; ci < g.cin; ++ci)
          for (std::size_t ky = 0; ky < g.kh; ++ky)
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const long long iy = static_cast<long long>(oy * g.sh + ky) -
                                   static_cast<long long>(g.ph);
              const long long ix = static_cast<long long>(ox * g.sw + kx) -
                                   static_cast<long long>(g.pw);
              if (iy < 0 || ix < 0 || iy >= static_cast<long long>(g.ih) ||
                  ix >= static_cast<long long>(g.iw)) {
                continue;
              }
              const std::size_t col =
                  (ci * g.ih + static_cast<std::size_t>(iy)) * g.iw +
                  static_cast<std::size_t>(ix);
              m[row * cols + col] +=
                  kernels[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
            }
      }
  return m;
}

template <typename T>
Tensor<T> zero_upsample(const Tensor<T>& input, std::size_t stride,
                        std::size_t spatial_rank) {
  if (stride == 0) throw ContractError("zero_upsample: stride must be >= 1");
  if (spatial_rank == 0 || spatial_rank > input.rank()) {
    throw DimensionError("zero_upsample: " + std::to_string(spatial_rank) +
                         " spatial axes requested for tensor " +
                         shape_string(input.shape()));
  }
  if (stride == 1) return input;
  const std::size_t lead = input.rank() - spatial_rank;
  Shape out_shape = input.shape();
  for (std::size_t a = lead; a < out_shape.size(); ++a) out_shape[a] *= stride;
  Tensor<T> out(out_shape);
  // Map every input multi-index to the output multi-index with each spatial
  // coordinate multiplied by the stride.
  const Shape& in_shape = input.shape();
  std::vector<std::size_t> idx(in_shape.size(), 0);
  for (std::size_t flat = 0; flat < input.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      const std::size_t c = a >= lead ? idx[a] * stride : idx[a];
      off = off * out_shape[a] + c;
    }
    out[off] = input[flat];
    for (std::size_t a = idx.size(); a-- > 0;) {
      if (++idx[a] < in_shape[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

#define GRANLAB_INSTANTIATE(T)                                                \
  template Tensor<T> conv(const Tensor<T>&, const Tensor<T>&,                \
                          const ConvSpec&);                                   \
  template Tensor<T> conv_transpose(const Tensor<T>&, const Tensor<T>&,      \
                                    const ConvSpec&);                         \
  template Tensor<T> conv_input_grad(const Tensor<T>&, const Tensor<T>&,     \
                                     const Shape&, const ConvSpec&);          \
  template Tensor<T> conv_kernel_grad(const Tensor<T>&, const Tensor<T>&,    \
                                      const Shape&, const ConvSpec&);         \
  template Tensor<T> conv_as_matrix(const Tensor<T>&, const Shape&,          \
                                    const ConvSpec&);                         \
  template Tensor<T> zero_upsample(const Tensor<T>&, std::size_t, std::size_t);

GRANLAB_INSTANTIATE(float)
GRANLAB_INSTANTIATE(double)
#undef GRANLAB_INSTANTIATE

}  // namespace granlab
