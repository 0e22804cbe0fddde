#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsabt/real.hpp"

// The gradcheck command's worklist: op-level probes (matmul chain, masked
// softmax, dilated conv stack, top-u attention) and every block of the
// two-modality micro model (N = [3,2], P = Q = 4, F = 1, D_h = 4, L = 1),
// each verified against central differences with input resampling near
// kinks.

namespace gsabt {

struct GradSuiteItem {
  std::string name;
  real max_rel_err = 0;
  real tol = 0;
  bool pass = false;
};

struct GradSuiteResult {
  std::vector<GradSuiteItem> items;
  bool pass = false;
  std::string report;  // printable per-block listing
};

GradSuiteResult run_gradcheck_suite(std::uint64_t seed);

}  // namespace gsabt
