#pragma once

#include <string>
#include <vector>

#include "gsabt/tensor.hpp"

namespace gsabt {

// Adam with bias correction plus optional global-norm gradient clipping
// applied before the moment update. clip_norm <= 0 disables clipping.
struct OptimConfig {
  std::string kind = "adam";  // "adam" or "sgd"
  real learning_rate = real(5e-4);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real epsilon = real(1e-8);
  real clip_norm = real(5.0);
};

class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimConfig cfg);

  // Reads each parameter's accumulated gradient and applies one update.
  void step();
  void zero_grad();
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<real>> m_, v_;
  OptimConfig cfg_;
  std::size_t t_ = 0;
};

}  // namespace gsabt
