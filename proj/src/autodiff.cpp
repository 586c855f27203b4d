#include "granlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace granlab {

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::input(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::parameter(const Tensor<T>& param) {
  auto it = params_.find(&param);
  if (it != params_.end()) return {this, it->second};
  Var<T> v = input(param);
  params_.emplace(&param, v.id);
  return v;
}

template <typename T>
Var<T> Graph<T>::record(Tensor<T> value, std::vector<std::size_t> inputs,
                        BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](auto id) {
    return nodes_.at(id).requires_grad;
  });
  if (n.requires_grad) n.backward = std::move(backward);
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  if (loss.graph != this) throw ContractError("backward: loss from another graph");
  const Tensor<T>& lv = value(loss.id);
  if (lv.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(lv.shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.zero_filled = false;
    n.grad = Tensor<T>();
  }
  Node& root = nodes_[loss.id];
  if (!root.requires_grad) return;
  root.grad = Tensor<T>(lv.shape(), T{1});
  root.has_grad = true;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.has_grad && n.backward) n.backward(*this, id);
  }
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var<T> v) const {
  const Node& n = nodes_.at(v.id);
  if (!n.has_grad && !n.zero_filled) {
    n.grad = Tensor<T>::zeros(n.value.shape());
    n.zero_filled = true;
  }
  return n.grad;
}

template <typename T>
const Tensor<T>& Graph<T>::grad_of(const Tensor<T>& param) const {
  auto it = params_.find(&param);
  if (it == params_.end()) {
    unregistered_zeros_.push_back(Tensor<T>::zeros(param.shape()));
    return unregistered_zeros_.back();
  }
  return grad(Var<T>{const_cast<Graph*>(this), it->second});
}

template <typename T>
Tensor<T>& Graph<T>::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    if (!n.zero_filled) n.grad = Tensor<T>::zeros(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
void Graph<T>::accumulate(std::size_t id, const Tensor<T>& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.zero_filled = false;
    n.grad = g;
    n.has_grad = true;
    return;
  }
  require_same_shape(n.grad, g, "gradient accumulation");
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

namespace ag {

namespace {

template <typename T>
Graph<T>& graph_of(Var<T> a) {
  if (!a.graph) throw ContractError("operation on an unbound Var");
  return *a.graph;
}

template <typename T>
Graph<T>& graph_of(Var<T> a, Var<T> b) {
  if (a.graph != b.graph || !a.graph) {
    throw ContractError("operands belong to different graphs");
  }
  return *a.graph;
}

// Number of elements per channel slice for [N, C, ...] tensors.
inline std::size_t inner_size(const Shape& s) {
  std::size_t inner = 1;
  for (std::size_t a = 2; a < s.size(); ++a) inner *= s[a];
  return inner;
}

template <typename T>
void require_channels(const Shape& x, const Shape& v, const char* what) {
  if (x.size() < 2 || v.size() != 1 || v[0] != x[1]) {
    throw DimensionError(std::string(what) + ": per-channel vector " +
                         shape_string(v) + " does not match " + shape_string(x));
  }
}

// Elementwise unary op whose derivative is computed from (x, y).
template <typename T, typename F, typename D>
Var<T> unary(Var<T> x, F f, D dfdx) {
  Graph<T>& g = graph_of(x);
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  const std::size_t xid = x.id;
  return g.record(std::move(y), {xid}, [xid, dfdx](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.out_grad(self);
    const Tensor<T>& xv2 = gr.value(xid);
    const Tensor<T>& yv = gr.value(self);
    Tensor<T> gx(xv2.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = gy[i] * dfdx(xv2[i], yv[i]);
    gr.accumulate(xid, gx);
  });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  const auto ia = a.id, ib = b.id;
  return g.record(std::move(y), {ia, ib}, [ia, ib](Graph<T>& gr, std::size_t self) {
    gr.accumulate(ia, gr.out_grad(self));
    gr.accumulate(ib, gr.out_grad(self));
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  const auto ia = a.id, ib = b.id;
  return g.record(std::move(y), {ia, ib}, [ia, ib](Graph<T>& gr, std::size_t self) {
    gr.accumulate(ia, gr.out_grad(self));
    Tensor<T> neg = gr.out_grad(self);
    for (auto& v : neg.data()) v = -v;
    gr.accumulate(ib, neg);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  const auto ia = a.id, ib = b.id;
  return g.record(std::move(y), {ia, ib}, [ia, ib](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.out_grad(self);
    if (gr.requires_grad(ia)) {
      Tensor<T> ga = gr.value(ib);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= gy[i];
      gr.accumulate(ia, ga);
    }
    if (gr.requires_grad(ib)) {
      Tensor<T> gb = gr.value(ia);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= gy[i];
      gr.accumulate(ib, gb);
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
  return unary(a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T c) {
  return unary(a, [c](T x) { return x + c; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  Graph<T>& g = graph_of(x, w);
  graph_of(x, b);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = b.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1) ||
      bv.rank() != 1 || bv.dim(0) != wv.dim(0)) {
    throw DimensionError("linear: input " + shape_string(xv.shape()) +
                         ", weights " + shape_string(wv.shape()) + ", bias " +
                         shape_string(bv.shape()));
  }
  Tensor<T> y = matmul_nt(xv, wv);
  const std::size_t n = y.dim(0), out = y.dim(1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < out; ++j) y[i * out + j] += bv[j];
  const auto ix = x.id, iw = w.id, ib = b.id;
  return g.record(std::move(y), {ix, iw, ib},
                  [ix, iw, ib](Graph<T>& gr, std::size_t self) {
                    const Tensor<T>& gy = gr.out_grad(self);
                    if (gr.requires_grad(ix)) {
                      gr.accumulate(ix, matmul_nn(gy, gr.value(iw)));
                    }
                    if (gr.requires_grad(iw)) {
                      gr.accumulate(iw, matmul_tn(gy, gr.value(ix)));
                    }
                    if (gr.requires_grad(ib)) {
                      const std::size_t rows = gy.dim(0), cols = gy.dim(1);
                      Tensor<T> gb({cols});
                      for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j)
                          gb[j] += gy[i * cols + j];
                      gr.accumulate(ib, gb);
                    }
                  });
}

template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> b) {
  Graph<T>& g = graph_of(x, b);
  const Tensor<T>& xv = x.value();
  require_channels<T>(xv.shape(), b.value().shape(), "add_channel_bias");
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = inner_size(xv.shape());
  Tensor<T> y = xv;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T bias = b.value()[ch];
      T* p = y.data().data() + (i * c + ch) * inner;
      for (std::size_t k = 0; k < inner; ++k) p[k] += bias;
    }
  const auto ix = x.id, ib = b.id;
  return g.record(std::move(y), {ix, ib},
                  [ix, ib, n, c, inner](Graph<T>& gr, std::size_t self) {
                    const Tensor<T>& gy = gr.out_grad(self);
                    gr.accumulate(ix, gy);
                    if (gr.requires_grad(ib)) {
                      Tensor<T> gb({c});
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t ch = 0; ch < c; ++ch) {
                          const T* p = gy.data().data() + (i * c + ch) * inner;
                          T acc{0};
                          for (std::size_t k = 0; k < inner; ++k) acc += p[k];
                          gb[ch] += acc;
                        }
                      gr.accumulate(ib, gb);
                    }
                  });
}

template <typename T>
Var<T> conv(Var<T> x, Var<T> kernels, const ConvSpec& spec) {
  Graph<T>& g = graph_of(x, kernels);
  Tensor<T> y = granlab::conv(x.value(), kernels.value(), spec);
  const auto ix = x.id, iw = kernels.id;
  return g.record(std::move(y), {ix, iw}, [ix, iw, spec](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.out_grad(self);
    if (gr.requires_grad(ix)) {
      gr.accumulate(ix, conv_input_grad(gy, gr.value(iw), gr.value(ix).shape(), spec));
    }
    if (gr.requires_grad(iw)) {
      gr.accumulate(iw, conv_kernel_grad(gr.value(ix), gy, gr.value(iw).shape(), spec));
    }
  });
}

template <typename T>
Var<T> conv_transpose(Var<T> x, Var<T> kernels, const ConvSpec& spec) {
  Graph<T>& g = graph_of(x, kernels);
  Tensor<T> y = granlab::conv_transpose(x.value(), kernels.value(), spec);
  const auto ix = x.id, iw = kernels.id;
  return g.record(std::move(y), {ix, iw}, [ix, iw, spec](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.out_grad(self);
    // The adjoint of a transpose is the forward convolution.
    if (gr.requires_grad(ix)) {
      gr.accumulate(ix, granlab::conv(gy, gr.value(iw), spec));
    }
    if (gr.requires_grad(iw)) {
      gr.accumulate(iw, conv_kernel_grad(gy, gr.value(ix), gr.value(iw).shape(), spec));
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return unary(
      x, [](T v) { return v < T{0} ? T{0} : v; },  // NaN passes through
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T alpha) {
  return unary(
      x, [alpha](T v) { return v > T{0} ? v : alpha * v; },
      [alpha](T v, T) { return v > T{0} ? T{1} : alpha; });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return unary(
      x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> log_clamped(Var<T> x, T lo, T hi) {
  return unary(
      x, [lo, hi](T v) { return std::log(std::clamp(v, lo, hi)); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T{1} / v : T{0}; });
}

template <typename T>
Var<T> sum(Var<T> x) {
  Graph<T>& g = graph_of(x);
  T acc{0};
  for (T v : x.value().data()) acc += v;
  const auto ix = x.id;
  return g.record(Tensor<T>::scalar(acc), {ix}, [ix](Graph<T>& gr, std::size_t self) {
    const T gy = gr.out_grad(self)[0];
    gr.accumulate(ix, Tensor<T>(gr.value(ix).shape(), gy));
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Graph<T>& g = graph_of(x);
  if (shape_size(shape) != x.value().size()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " -> " +
                         shape_string(shape));
  }
  Tensor<T> y = x.value().reshaped(std::move(shape));
  const auto ix = x.id;
  return g.record(std::move(y), {ix}, [ix](Graph<T>& gr, std::size_t self) {
    gr.accumulate(ix, gr.out_grad(self).reshaped(gr.value(ix).shape()));
  });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0)) {
    throw DimensionError("concat_cols: " + shape_string(av.shape()) + " and " +
                         shape_string(bv.shape()));
  }
  const std::size_t n = av.dim(0), p = av.dim(1), q = bv.dim(1);
  Tensor<T> y({n, p + q});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data().data() + i * p, p, y.data().data() + i * (p + q));
    std::copy_n(bv.data().data() + i * q, q, y.data().data() + i * (p + q) + p);
  }
  const auto ia = a.id, ib = b.id;
  return g.record(std::move(y), {ia, ib}, [ia, ib, n, p, q](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.out_grad(self);
    if (gr.requires_grad(ia)) {
      Tensor<T> ga({n, p});
      for (std::size_t i = 0; i < n; ++i)
        std::copy_n(gy.data().data() + i * (p + q), p, ga.data().data() + i * p);
      gr.accumulate(ia, ga);
    }
    if (gr.requires_grad(ib)) {
      Tensor<T> gb({n, q});
      for (std::size_t i = 0; i < n; ++i)
        std::copy_n(gy.data().data() + i * (p + q) + p, q, gb.data().data() + i * q);
      gr.accumulate(ib, gb);
    }
  });
}

template <typename T>
Var<T> batch_norm_train(Var<T> x, Var<T> gamma, Var<T> beta, T eps,
                        Tensor<T>* batch_mean, Tensor<T>* batch_var) {
  Graph<T>& g = graph_of(x, gamma);
  graph_of(x, beta);
  const Tensor<T>& xv = x.value();
  require_channels<T>(xv.shape(), gamma.value().shape(), "batch_norm");
  require_channels<T>(xv.shape(), beta.value().shape(), "batch_norm");
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = inner_size(xv.shape());
  const T count = static_cast<T>(n * inner);
  Tensor<T> mu({c}), var({c}), inv({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    T s{0};
    for (std::size_t i = 0; i < n; ++i) {
      const T* p = xv.data().data() + (i * c + ch) * inner;
      for (std::size_t k = 0; k < inner; ++k) s += p[k];
    }
    const T m = s / count;
    T v{0};
    for (std::size_t i = 0; i < n; ++i) {
      const T* p = xv.data().data() + (i * c + ch) * inner;
      for (std::size_t k = 0; k < inner; ++k) v += (p[k] - m) * (p[k] - m);
    }
    mu[ch] = m;
    var[ch] = v / count;
    inv[ch] = T{1} / std::sqrt(var[ch] + eps);
  }
  Tensor<T> xhat(xv.shape());
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * inner;
      const T ga = gamma.value()[ch], be = beta.value()[ch];
      for (std::size_t k = 0; k < inner; ++k) {
        const T h = (xv[base + k] - mu[ch]) * inv[ch];
        xhat[base + k] = h;
        y[base + k] = ga * h + be;
      }
    }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  const auto ix = x.id, igm = gamma.id, ibe = beta.id;
  return g.record(
      std::move(y), {ix, igm, ibe},
      [ix, igm, ibe, n, c, inner, count, xhat = std::move(xhat),
       inv = std::move(inv)](Graph<T>& gr, std::size_t self) {
        const Tensor<T>& gy = gr.out_grad(self);
        Tensor<T> gg({c}), gb({c});
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (i * c + ch) * inner;
            for (std::size_t k = 0; k < inner; ++k) {
              gb[ch] += gy[base + k];
              gg[ch] += gy[base + k] * xhat[base + k];
            }
          }
        if (gr.requires_grad(ix)) {
          const Tensor<T>& gam = gr.value(igm);
          Tensor<T> gx(gy.shape());
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t base = (i * c + ch) * inner;
              const T mg = gb[ch] / count, mgx = gg[ch] / count;
              const T f = gam[ch] * inv[ch];
              for (std::size_t k = 0; k < inner; ++k) {
                gx[base + k] = f * (gy[base + k] - mg - xhat[base + k] * mgx);
              }
            }
          gr.accumulate(ix, gx);
        }
        gr.accumulate(igm, gg);
        gr.accumulate(ibe, gb);
      });
}

template <typename T>
Var<T> batch_norm_eval(Var<T> x, Var<T> gamma, Var<T> beta,
                       const Tensor<T>& mean, const Tensor<T>& var, T eps) {
  Graph<T>& g = graph_of(x, gamma);
  graph_of(x, beta);
  const Tensor<T>& xv = x.value();
  require_channels<T>(xv.shape(), gamma.value().shape(), "batch_norm");
  require_channels<T>(xv.shape(), mean.shape(), "batch_norm");
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = inner_size(xv.shape());
  Tensor<T> inv({c});
  for (std::size_t ch = 0; ch < c; ++ch) inv[ch] = T{1} / std::sqrt(var[ch] + eps);
  Tensor<T> xhat(xv.shape()), y(xv.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * inner;
      for (std::size_t k = 0; k < inner; ++k) {
        const T h = (xv[base + k] - mean[ch]) * inv[ch];
        xhat[base + k] = h;
        y[base + k] = gamma.value()[ch] * h + beta.value()[ch];
      }
    }
  const auto ix = x.id, igm = gamma.id, ibe = beta.id;
  return g.record(
      std::move(y), {ix, igm, ibe},
      [ix, igm, ibe, n, c, inner, xhat = std::move(xhat), inv = std::move(inv)](
          Graph<T>& gr, std::size_t self) {
        const Tensor<T>& gy = gr.out_grad(self);
        const Tensor<T>& gam = gr.value(igm);
        Tensor<T> gx(gy.shape()), gg({c}), gb({c});
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (i * c + ch) * inner;
            for (std::size_t k = 0; k < inner; ++k) {
              gx[base + k] = gy[base + k] * gam[ch] * inv[ch];
              gg[ch] += gy[base + k] * xhat[base + k];
              gb[ch] += gy[base + k];
            }
          }
        gr.accumulate(ix, gx);
        gr.accumulate(igm, gg);
        gr.accumulate(ibe, gb);
      });
}

#define GRANLAB_INSTANTIATE(T)                                                 \
  template Var<T> add(Var<T>, Var<T>);                                        \
  template Var<T> sub(Var<T>, Var<T>);                                        \
  template Var<T> mul(Var<T>, Var<T>);                                        \
  template Var<T> scale(Var<T>, T);                                           \
  template Var<T> add_scalar(Var<T>, T);                                      \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                             \
  template Var<T> add_channel_bias(Var<T>, Var<T>);                           \
  template Var<T> conv(Var<T>, Var<T>, const ConvSpec&);                      \
  template Var<T> conv_transpose(Var<T>, Var<T>, const ConvSpec&);            \
  template Var<T> relu(Var<T>);                                               \
  template Var<T> leaky_relu(Var<T>, T);                                      \
  template Var<T> tanh(Var<T>);                                               \
  template Var<T> sigmoid(Var<T>);                                            \
  template Var<T> log_clamped(Var<T>, T, T);                                  \
  template Var<T> sum(Var<T>);                                                \
  template Var<T> mean(Var<T>);                                               \
  template Var<T> reshape(Var<T>, Shape);                                     \
  template Var<T> concat_cols(Var<T>, Var<T>);                                \
  template Var<T> batch_norm_train(Var<T>, Var<T>, Var<T>, T, Tensor<T>*,     \
                                   Tensor<T>*);                               \
  template Var<T> batch_norm_eval(Var<T>, Var<T>, Var<T>, const Tensor<T>&,   \
                                  const Tensor<T>&, T);

GRANLAB_INSTANTIATE(float)
GRANLAB_INSTANTIATE(double)
#undef GRANLAB_INSTANTIATE

}  // namespace ag

template class Graph<float>;
template class Graph<double>;

}  // namespace granlab
