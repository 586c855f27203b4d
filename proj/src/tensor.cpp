#include "granlab/tensor.hpp"

namespace granlab {

namespace {

template <typename T>
void require_matrix(const Tensor<T>& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected a matrix, got " +
                         shape_string(t.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  Tensor<T> out({m, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* col = pb + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += row[p] * col[p];
      po[i * n + j] = acc;
    }
  }
  return out;
}

template <typename T>
Tensor<T> matmul_nn(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul_nn");
  require_matrix(b, "matmul_nn");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul_nn: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor<T> out({m, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != m) {
    throw DimensionError("matmul_tn: " + shape_string(a.shape()) + "^T x " +
                         shape_string(b.shape()));
  }
  Tensor<T> out({k, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = pa + i * k;
    const T* brow = pb + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* orow = po + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  require_matrix(a, "transpose2d");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

#define GRANLAB_INSTANTIATE(T)                                       \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> matmul_nn(const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> matmul_tn(const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> transpose2d(const Tensor<T>&);

GRANLAB_INSTANTIATE(float)
GRANLAB_INSTANTIATE(double)
#undef GRANLAB_INSTANTIATE

}  // namespace granlab
