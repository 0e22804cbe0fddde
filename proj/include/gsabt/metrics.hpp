#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsabt/real.hpp"

namespace gsabt {

// MAE / RMSE / Pearson correlation on denormalized predictions. PCC on a
// constant series has no defined value and is reported as an explicit
// nullopt, never as a propagated NaN.

double mae(std::span<const real> truth, std::span<const real> pred);
double rmse(std::span<const real> truth, std::span<const real> pred);
std::optional<double> pcc(std::span<const real> truth, std::span<const real> pred);

struct ModalityMetrics {
  std::string name;
  double mae = 0, rmse = 0;
  std::optional<double> pcc;
  std::size_t n = 0;
};

struct MetricsReport {
  std::vector<ModalityMetrics> per_modality;
  ModalityMetrics overall;  // name "overall", across every modality
};

}  // namespace gsabt
