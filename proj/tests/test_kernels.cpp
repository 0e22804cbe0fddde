// Scalar-vs-AVX2 kernel equivalence. Map-style kernels and the axpy-ordered
// gemms keep the scalar accumulation order and must agree bit for bit;
// lane-split reductions agree to a tight relative tolerance.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gsabt/kernels.hpp"
#include "gsabt/rng.hpp"

using namespace gsabt;
using kern::Kernels;

namespace {

std::vector<real> random_vec(std::size_t n, Rng& rng, real lo = -2, real hi = 2) {
  std::vector<real> v(n);
  for (real& x : v) x = static_cast<real>(rng.uniform(lo, hi));
  return v;
}

bool bit_equal(const std::vector<real>& a, const std::vector<real>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

real rel_diff(real a, real b) {
  const real d = std::abs(a - b);
  const real m = std::max(real(1), std::max(std::abs(a), std::abs(b)));
  return d / m;
}

}  // namespace

TEST_CASE("active kernel set resolves") {
  CHECK(kern::active_name() == std::string(kern::active().name));
  MESSAGE("active kernels: ", kern::active_name());
}

TEST_CASE("map kernels: simd variant is bit-exact vs scalar reference") {
  const Kernels* simd = kern::avx2_kernels();
  if (simd == nullptr) {
    MESSAGE("no SIMD variant on this platform; scalar only");
    return;
  }
  const Kernels& ref = kern::scalar_kernels();
  Rng rng(7);
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 64u, 1001u}) {
    auto a = random_vec(n, rng), b = random_vec(n, rng);
    std::vector<real> r1(n), r2(n);

    ref.add(a.data(), b.data(), r1.data(), n);
    simd->add(a.data(), b.data(), r2.data(), n);
    CHECK(bit_equal(r1, r2));

    ref.sub(a.data(), b.data(), r1.data(), n);
    simd->sub(a.data(), b.data(), r2.data(), n);
    CHECK(bit_equal(r1, r2));

    ref.mul(a.data(), b.data(), r1.data(), n);
    simd->mul(a.data(), b.data(), r2.data(), n);
    CHECK(bit_equal(r1, r2));

    ref.scale(a.data(), real(1.7), r1.data(), n);
    simd->scale(a.data(), real(1.7), r2.data(), n);
    CHECK(bit_equal(r1, r2));

    ref.relu(a.data(), r1.data(), n);
    simd->relu(a.data(), r2.data(), n);
    CHECK(bit_equal(r1, r2));

    auto y1 = random_vec(n, rng);
    auto y2 = y1;
    ref.axpy(real(-0.3), a.data(), y1.data(), n);
    simd->axpy(real(-0.3), a.data(), y2.data(), n);
    CHECK(bit_equal(y1, y2));

    auto g1 = random_vec(n, rng);
    auto g2 = g1;
    ref.mul_acc(a.data(), b.data(), g1.data(), n);
    simd->mul_acc(a.data(), b.data(), g2.data(), n);
    CHECK(bit_equal(g1, g2));

    auto gx1 = random_vec(n, rng);
    auto gx2 = gx1;
    ref.relu_bwd(a.data(), b.data(), gx1.data(), n);
    simd->relu_bwd(a.data(), b.data(), gx2.data(), n);
    CHECK(bit_equal(gx1, gx2));

    auto sx1 = random_vec(n, rng);
    auto sx2 = sx1;
    ref.softmax_bwd_apply(a.data(), b.data(), real(0.25), sx1.data(), n);
    simd->softmax_bwd_apply(a.data(), b.data(), real(0.25), sx2.data(), n);
    CHECK(bit_equal(sx1, sx2));

    CHECK(ref.vmax(a.data(), n) == simd->vmax(a.data(), n));
  }
}

TEST_CASE("reductions: simd within 1e-12 relative of scalar") {
  const Kernels* simd = kern::avx2_kernels();
  if (simd == nullptr) return;
  const Kernels& ref = kern::scalar_kernels();
  Rng rng(11);
  for (std::size_t n : {1u, 5u, 8u, 63u, 64u, 4097u}) {
    auto a = random_vec(n, rng), b = random_vec(n, rng);
    CHECK(rel_diff(ref.dot(a.data(), b.data(), n), simd->dot(a.data(), b.data(), n)) < 1e-12);
    CHECK(rel_diff(ref.sum(a.data(), n), simd->sum(a.data(), n)) < 1e-12);
    CHECK(rel_diff(ref.sum_abs(a.data(), n), simd->sum_abs(a.data(), n)) < 1e-12);
    CHECK(rel_diff(ref.sum_sq(a.data(), n), simd->sum_sq(a.data(), n)) < 1e-12);
  }
}

TEST_CASE("gemm_nn / gemm_tn: bit-exact; gemm_nt: tolerance") {
  const Kernels* simd = kern::avx2_kernels();
  if (simd == nullptr) return;
  const Kernels& ref = kern::scalar_kernels();
  Rng rng(13);
  struct Case { std::size_t m, k, n; };
  for (Case c : {Case{1, 1, 1}, Case{3, 5, 7}, Case{8, 8, 8}, Case{13, 31, 9},
                 Case{40, 24, 16}}) {
    auto a = random_vec(c.m * c.k, rng);
    auto b = random_vec(c.k * c.n, rng);
    std::vector<real> r1(c.m * c.n, 0), r2(c.m * c.n, 0);
    ref.gemm_nn(a.data(), b.data(), r1.data(), c.m, c.k, c.n);
    simd->gemm_nn(a.data(), b.data(), r2.data(), c.m, c.k, c.n);
    CHECK(bit_equal(r1, r2));

    auto bt = random_vec(c.n * c.k, rng);
    std::fill(r1.begin(), r1.end(), real(0));
    std::fill(r2.begin(), r2.end(), real(0));
    ref.gemm_nt(a.data(), bt.data(), r1.data(), c.m, c.k, c.n);
    simd->gemm_nt(a.data(), bt.data(), r2.data(), c.m, c.k, c.n);
    for (std::size_t i = 0; i < r1.size(); ++i)
      CHECK(rel_diff(r1[i], r2[i]) < 1e-12);

    auto am = random_vec(c.m * c.k, rng);
    auto bm = random_vec(c.m * c.n, rng);
    std::vector<real> t1(c.k * c.n, 0), t2(c.k * c.n, 0);
    ref.gemm_tn(am.data(), bm.data(), t1.data(), c.m, c.k, c.n);
    simd->gemm_tn(am.data(), bm.data(), t2.data(), c.m, c.k, c.n);
    CHECK(bit_equal(t1, t2));
  }
}

TEST_CASE("gemm_nn matches brute-force triple loop") {
  const Kernels& k = kern::active();
  Rng rng(17);
  const std::size_t m = 4, kk = 3, n = 5;
  auto a = random_vec(m * kk, rng);
  auto b = random_vec(kk * n, rng);
  std::vector<real> c(m * n, 0);
  k.gemm_nn(a.data(), b.data(), c.data(), m, kk, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      real want = 0;
      for (std::size_t p = 0; p < kk; ++p) want += a[i * kk + p] * b[p * n + j];
      CHECK(std::abs(c[i * n + j] - want) < 1e-12);
    }
}
