#include "gsabt/metrics.hpp"

#include <cmath>

#include "gsabt/errors.hpp"

namespace gsabt {

namespace {

void check_pair(std::span<const real> a, std::span<const real> b,
                const char* what) {
  if (a.size() != b.size() || a.empty())
    throw ShapeError(std::string(what) + ": size mismatch or empty input (" +
                     std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                     ")");
}

}  // namespace

double mae(std::span<const real> truth, std::span<const real> pred) {
  check_pair(truth, pred, "mae");
  double acc = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    acc += std::abs(double(truth[i]) - double(pred[i]));
  return acc / double(truth.size());
}

double rmse(std::span<const real> truth, std::span<const real> pred) {
  check_pair(truth, pred, "rmse");
  double acc = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = double(truth[i]) - double(pred[i]);
    acc += d * d;
  }
  return std::sqrt(acc / double(truth.size()));
}

std::optional<double> pcc(std::span<const real> truth,
                          std::span<const real> pred) {
  check_pair(truth, pred, "pcc");
  const std::size_t n = truth.size();
  double mt = 0, mp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mt += truth[i];
    mp += pred[i];
  }
  mt /= double(n);
  mp /= double(n);
  double num = 0, st = 0, sp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = double(truth[i]) - mt;
    const double dp = double(pred[i]) - mp;
    num += dt * dp;
    st += dt * dt;
    sp += dp * dp;
  }
  if (st == 0 || sp == 0) return std::nullopt;  // constant series
  // single sqrt of the product keeps pcc(y, y) == 1 exact
  return num / std::sqrt(st * sp);
}

}  // namespace gsabt
