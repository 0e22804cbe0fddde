#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gsabt/tensor.hpp"

// Central-difference gradient verification. The forward callback must be
// deterministic (dropout off or re-seeded per call) and rebuild the full
// graph from the current parameter values each time it runs.

namespace gsabt {

struct GradCheckItem {
  std::string name;
  real max_rel_err = 0;
  std::size_t worst_index = 0;
  real analytic = 0, numeric = 0;  // at the worst element
};

struct GradCheckReport {
  std::vector<GradCheckItem> items;
  real max_rel_err = 0;
  real tol = 0;
  bool pass = false;
  // Forward pass came within kink_margin of a relu/abs kink or a top-u tie;
  // the caller should redraw inputs instead of trusting the comparison.
  bool resample_suggested = false;
  real min_kink_distance = 0;

  std::string summary() const;
};

// rel err per element: |analytic - numeric| / max(1, |analytic|, |numeric|)
GradCheckReport grad_check(
    const std::function<Tensor()>& forward,
    const std::vector<std::pair<std::string, Tensor>>& params, real h, real tol,
    real kink_margin = real(1e-3));

}  // namespace gsabt
