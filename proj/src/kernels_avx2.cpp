// AVX2 kernel variants. This translation unit is compiled with -mavx2 and
// only reached after a runtime cpuid check (see kernels.cpp).
//
// Accumulation structure mirrors the scalar reference: map ops and the
// axpy-ordered gemms (nn/tn) keep the per-element accumulation order and use
// separate mul/add (no FMA), so they are bit-exact against scalar. dot/sum
// style reductions split across 4 lanes and are tolerance-equivalent.

#include "gsabt/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

namespace gsabt::kern {
namespace {

#ifndef GSABT_REAL_FLOAT

// double: 4 lanes
using vreal = __m256d;
constexpr std::size_t kLanes = 4;
inline vreal vload(const real* p) { return _mm256_loadu_pd(p); }
inline void vstore(real* p, vreal v) { _mm256_storeu_pd(p, v); }
inline vreal vset1(real x) { return _mm256_set1_pd(x); }
inline vreal vzero() { return _mm256_setzero_pd(); }
inline vreal vadd(vreal a, vreal b) { return _mm256_add_pd(a, b); }
inline vreal vsub(vreal a, vreal b) { return _mm256_sub_pd(a, b); }
inline vreal vmul(vreal a, vreal b) { return _mm256_mul_pd(a, b); }
inline vreal vmax(vreal a, vreal b) { return _mm256_max_pd(a, b); }
inline vreal vand(vreal a, vreal b) { return _mm256_and_pd(a, b); }
inline vreal vcmp_gt(vreal a, vreal b) {
  return _mm256_cmp_pd(a, b, _CMP_GT_OQ);
}
inline vreal vabs(vreal a) {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), a);
}
inline real hsum(vreal v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}
inline real hmax(vreal v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  const real a = _mm_cvtsd_f64(lo);
  const real b = _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
  return a > b ? a : b;
}

#else

// float: 8 lanes
using vreal = __m256;
constexpr std::size_t kLanes = 8;
inline vreal vload(const real* p) { return _mm256_loadu_ps(p); }
inline void vstore(real* p, vreal v) { _mm256_storeu_ps(p, v); }
inline vreal vset1(real x) { return _mm256_set1_ps(x); }
inline vreal vzero() { return _mm256_setzero_ps(); }
inline vreal vadd(vreal a, vreal b) { return _mm256_add_ps(a, b); }
inline vreal vsub(vreal a, vreal b) { return _mm256_sub_ps(a, b); }
inline vreal vmul(vreal a, vreal b) { return _mm256_mul_ps(a, b); }
inline vreal vmax(vreal a, vreal b) { return _mm256_max_ps(a, b); }
inline vreal vand(vreal a, vreal b) { return _mm256_and_ps(a, b); }
inline vreal vcmp_gt(vreal a, vreal b) {
  return _mm256_cmp_ps(a, b, _CMP_GT_OQ);
}
inline vreal vabs(vreal a) {
  return _mm256_andnot_ps(_mm256_set1_ps(-0.0f), a);
}
inline real hsum(vreal v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}
inline real hmax(vreal v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_max_ps(lo, hi);
  lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

#endif

void v_add(const real* a, const real* b, real* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    vstore(out + i, vadd(vload(a + i), vload(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void v_sub(const real* a, const real* b, real* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    vstore(out + i, vsub(vload(a + i), vload(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void v_mul(const real* a, const real* b, real* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    vstore(out + i, vmul(vload(a + i), vload(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void v_mul_acc(const real* a, const real* b, real* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    vstore(out + i, vadd(vload(out + i), vmul(vload(a + i), vload(b + i))));
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

void v_scale(const real* a, real s, real* out, std::size_t n) {
  const vreal vs = vset1(s);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    vstore(out + i, vmul(vload(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] * s;
}

void v_axpy(real a, const real* x, real* y, std::size_t n) {
  const vreal va = vset1(a);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    vstore(y + i, vadd(vload(y + i), vmul(va, vload(x + i))));
  for (; i < n; ++i) y[i] += a * x[i];
}

void v_relu(const real* a, real* out, std::size_t n) {
  const vreal z = vzero();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) vstore(out + i, vmax(vload(a + i), z));
  for (; i < n; ++i) out[i] = a[i] > real(0) ? a[i] : real(0);
}

void v_relu_bwd(const real* x, const real* g, real* gx, std::size_t n) {
  const vreal z = vzero();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const vreal pass = vand(vload(g + i), vcmp_gt(vload(x + i), z));
    vstore(gx + i, vadd(vload(gx + i), pass));
  }
  for (; i < n; ++i)
    if (x[i] > real(0)) gx[i] += g[i];
}

void v_softmax_bwd_apply(const real* y, const real* g, real d, real* gx,
                         std::size_t n) {
  const vreal vd = vset1(d);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const vreal t = vmul(vload(y + i), vsub(vload(g + i), vd));
    vstore(gx + i, vadd(vload(gx + i), t));
  }
  for (; i < n; ++i) gx[i] += y[i] * (g[i] - d);
}

real v_dot(const real* a, const real* b, std::size_t n) {
  vreal acc = vzero();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    acc = vadd(acc, vmul(vload(a + i), vload(b + i)));
  real r = hsum(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

real v_sum(const real* a, std::size_t n) {
  vreal acc = vzero();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) acc = vadd(acc, vload(a + i));
  real r = hsum(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

real v_sum_abs(const real* a, std::size_t n) {
  vreal acc = vzero();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) acc = vadd(acc, vabs(vload(a + i)));
  real r = hsum(acc);
  for (; i < n; ++i) r += std::abs(a[i]);
  return r;
}

real v_sum_sq(const real* a, std::size_t n) {
  vreal acc = vzero();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const vreal v = vload(a + i);
    acc = vadd(acc, vmul(v, v));
  }
  real r = hsum(acc);
  for (; i < n; ++i) r += a[i] * a[i];
  return r;
}

real v_vmax(const real* a, std::size_t n) {
  if (n < kLanes) {
    real m = a[0];
    for (std::size_t i = 1; i < n; ++i)
      if (a[i] > m) m = a[i];
    return m;
  }
  vreal acc = vload(a);
  std::size_t i = kLanes;
  for (; i + kLanes <= n; i += kLanes) acc = vmax(acc, vload(a + i));
  real m = hmax(acc);
  for (; i < n; ++i)
    if (a[i] > m) m = a[i];
  return m;
}

void v_gemm_nn(const real* a, const real* b, real* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    real* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      v_axpy(a[i * k + p], b + p * n, crow, n);
    }
  }
}

void v_gemm_nt(const real* a, const real* b, real* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * n + j] += v_dot(a + i * k, b + j * k, k);
}

void v_gemm_tn(const real* a, const real* b, real* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const real* arow = a + i * k;
    const real* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      v_axpy(arow[p], brow, c + p * n, n);
    }
  }
}

}  // namespace

const Kernels* avx2_kernels() {
  static const Kernels k = {
      "avx2",   v_add,     v_sub,  v_mul,     v_mul_acc, v_scale,
      v_axpy,   v_relu,    v_relu_bwd, v_softmax_bwd_apply,
      v_dot,    v_sum,     v_sum_abs,  v_sum_sq, v_vmax,
      v_gemm_nn, v_gemm_nt, v_gemm_tn,
  };
  return &k;
}

}  // namespace gsabt::kern

#else  // non-x86 build: no AVX2 variant

namespace gsabt::kern {
const Kernels* avx2_kernels() { return nullptr; }
}  // namespace gsabt::kern

#endif
