// Scalar reference kernels. These define the semantics the SIMD variants are
// tested against; keep the loop/accumulation structure simple and explicit.

#include <cmath>
#include <cstddef>

#include "gsabt/kernels.hpp"

namespace gsabt::kern {
namespace {

void s_add(const real* a, const real* b, real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void s_sub(const real* a, const real* b, real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void s_mul(const real* a, const real* b, real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void s_mul_acc(const real* a, const real* b, real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void s_scale(const real* a, real s, real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void s_axpy(real a, const real* x, real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_relu(const real* a, real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > real(0) ? a[i] : real(0);
}

void s_relu_bwd(const real* x, const real* g, real* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > real(0)) gx[i] += g[i];
}

void s_softmax_bwd_apply(const real* y, const real* g, real d, real* gx,
                         std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] * (g[i] - d);
}

real s_dot(const real* a, const real* b, std::size_t n) {
  real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

real s_sum(const real* a, std::size_t n) {
  real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

real s_sum_abs(const real* a, std::size_t n) {
  real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a[i]);
  return acc;
}

real s_sum_sq(const real* a, std::size_t n) {
  real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

real s_vmax(const real* a, std::size_t n) {
  real m = a[0];
  for (std::size_t i = 1; i < n; ++i)
    if (a[i] > m) m = a[i];
  return m;
}

// i-p-j order: each c[i][j] accumulates over p sequentially, which is the
// order the AVX2 variant reproduces exactly (it vectorizes over j only).
void s_gemm_nn(const real* a, const real* b, real* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    real* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const real aip = a[i * k + p];
      const real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void s_gemm_nt(const real* a, const real* b, real* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * n + j] += s_dot(a + i * k, b + j * k, k);
}

void s_gemm_tn(const real* a, const real* b, real* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const real* arow = a + i * k;
    const real* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const real aip = arow[p];
      real* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k = {
      "scalar", s_add,     s_sub,  s_mul,     s_mul_acc, s_scale,
      s_axpy,   s_relu,    s_relu_bwd, s_softmax_bwd_apply,
      s_dot,    s_sum,     s_sum_abs,  s_sum_sq, s_vmax,
      s_gemm_nn, s_gemm_nt, s_gemm_tn,
  };
  return k;
}

}  // namespace gsabt::kern
