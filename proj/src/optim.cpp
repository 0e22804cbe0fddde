#include "gsabt/optim.hpp"

#include <cmath>

#include "gsabt/kernels.hpp"

namespace gsabt {

Optimizer::Optimizer(std::vector<Tensor> params, OptimConfig cfg)
    : params_(std::move(params)), cfg_(std::move(cfg)) {
  if (cfg_.kind != "adam" && cfg_.kind != "sgd")
    throw ConfigError("optimizer: unknown kind '" + cfg_.kind + "'");
  for (Tensor& p : params_) {
    p.mutable_grad();  // allocate accumulators up front
    m_.emplace_back(p.size(), real(0));
    v_.emplace_back(p.size(), real(0));
  }
}

void Optimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Optimizer::step() {
  ++t_;
  real scale = 1;
  if (cfg_.clip_norm > real(0)) {
    double sq = 0;
    for (Tensor& p : params_)
      sq += double(kern::active().sum_sq(p.grad().data(), p.size()));
    const double norm = std::sqrt(sq);
    if (norm > double(cfg_.clip_norm)) scale = real(double(cfg_.clip_norm) / norm);
  }
  if (cfg_.kind == "sgd") {
    for (Tensor& p : params_) {
      auto vals = p.mutable_data();
      auto g = p.grad();
      for (std::size_t i = 0; i < vals.size(); ++i)
        vals[i] -= cfg_.learning_rate * scale * g[i];
    }
    return;
  }
  const real bc1 = real(1) - real(std::pow(double(cfg_.beta1), double(t_)));
  const real bc2 = real(1) - real(std::pow(double(cfg_.beta2), double(t_)));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto vals = params_[pi].mutable_data();
    auto g = params_[pi].grad();
    real* m = m_[pi].data();
    real* v = v_[pi].data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const real gi = g[i] * scale;
      m[i] = cfg_.beta1 * m[i] + (real(1) - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (real(1) - cfg_.beta2) * gi * gi;
      const real mhat = m[i] / bc1;
      const real vhat = v[i] / bc2;
      vals[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

}  // namespace gsabt
