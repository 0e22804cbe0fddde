#pragma once

#include <cstddef>
#include <string>

#include "gsabt/real.hpp"

// Inner-loop kernels behind the tensor ops. Every kernel exists as a scalar
// reference implementation and, on x86-64, an AVX2 variant; one of them is
// selected once at startup (env GSABT_KERNELS=scalar|avx2 overrides the
// cpuid-based choice).
//
// Equivalence contract, enforced by tests/test_kernels.cpp:
//   * map-style kernels (add, sub, mul, mul_acc, scale, axpy, relu,
//     relu_bwd, softmax_bwd_apply) and the axpy-ordered contractions
//     (gemm_nn, gemm_tn) accumulate in the same order in both variants and
//     must match the scalar reference bit for bit;
//   * lane-split reductions (dot, sum, sum_abs, sum_sq, gemm_nt) reassociate
//     the sum and must match within a small relative tolerance;
//   * vmax is exact (max is order-independent).
//
// gemm_* kernels ACCUMULATE into c; callers zero-initialize.

namespace gsabt::kern {

struct Kernels {
  const char* name;

  void (*add)(const real* a, const real* b, real* out, std::size_t n);
  void (*sub)(const real* a, const real* b, real* out, std::size_t n);
  void (*mul)(const real* a, const real* b, real* out, std::size_t n);
  // out += a * b elementwise
  void (*mul_acc)(const real* a, const real* b, real* out, std::size_t n);
  void (*scale)(const real* a, real s, real* out, std::size_t n);
  // y += a * x
  void (*axpy)(real a, const real* x, real* y, std::size_t n);
  void (*relu)(const real* a, real* out, std::size_t n);
  // gx += g where x > 0 (derivative at 0 is 0)
  void (*relu_bwd)(const real* x, const real* g, real* gx, std::size_t n);
  // gx += y * (g - d)   (softmax row backward, d = dot(y, g) precomputed)
  void (*softmax_bwd_apply)(const real* y, const real* g, real d, real* gx,
                            std::size_t n);

  real (*dot)(const real* a, const real* b, std::size_t n);
  real (*sum)(const real* a, std::size_t n);
  real (*sum_abs)(const real* a, std::size_t n);
  real (*sum_sq)(const real* a, std::size_t n);
  real (*vmax)(const real* a, std::size_t n);  // n >= 1

  // c[m x n] += a[m x k] * b[k x n], row-major
  void (*gemm_nn)(const real* a, const real* b, real* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // c[m x n] += a[m x k] * b[n x k]^T
  void (*gemm_nt)(const real* a, const real* b, real* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // c[k x n] += a[m x k]^T * b[m x n]
  void (*gemm_tn)(const real* a, const real* b, real* c, std::size_t m,
                  std::size_t k, std::size_t n);
};

const Kernels& scalar_kernels();

// AVX2 variant, or nullptr when the build or the CPU lacks it.
const Kernels* avx2_kernels();

// Runtime-selected kernel set. Resolved once; stable for the process.
const Kernels& active();

// Name of the selected set ("scalar" or "avx2"), for manifests and logs.
std::string active_name();

}  // namespace gsabt::kern
