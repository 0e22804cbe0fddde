#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsabt/data.hpp"
#include "gsabt/metrics.hpp"
#include "gsabt/model.hpp"
#include "gsabt/optim.hpp"

// Training loop (MAE objective, per-epoch validation, best-val selection),
// evaluation on denormalized predictions, the ablation and sweep harnesses,
// and the cross-modal attention survivor census.

namespace gsabt {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  real learning_rate = real(5e-4);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real epsilon = real(1e-8);
  real clip_norm = real(5.0);
  std::size_t patience = 0;  // 0 = run every epoch
  std::uint64_t seed = 1;
  std::string optimizer = "adam";

  void validate() const;
  std::string to_json_text() const;
  static TrainConfig from_json_text(const std::string& text);
};

// mean(|pred - target|) over all elements; subgradient at 0 is 0.
Tensor mae_loss(const Tensor& pred, const Tensor& target);

// Batch assembly from the normalized joint series. anchors index the last
// input step of each sample.
Tensor gather_inputs(const Dataset& ds, const std::vector<std::size_t>& anchors,
                     std::size_t begin, std::size_t count, std::size_t p);
Tensor gather_targets(const Dataset& ds, const std::vector<std::size_t>& anchors,
                      std::size_t begin, std::size_t count, std::size_t q);

struct EpochStats {
  std::size_t epoch = 0;
  double train_mae = 0;
  double val_mae = 0;
  double wall_ms = 0;
};

struct TrainResult {
  ModelParams params;  // best validation checkpoint
  ModelConfig config;
  std::size_t best_epoch = 0;
  double best_val_mae = 0;
  std::vector<EpochStats> history;
};

TrainResult train_model(const ModelConfig& cfg, const Dataset& ds,
                        const TrainConfig& tc);

MetricsReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                             const Dataset& ds, Split split);

// Historical average: predict each node's per-feature training mean.
MetricsReport evaluate_mean_baseline(const Dataset& ds, Split split);

struct LabeledReport {
  std::string label;
  MetricsReport report;
};

// {full, no_sa, no_agcn, no_astar, no_fstcn, no_bstcn}, one trained and
// evaluated row each, identical seed and budget.
std::vector<LabeledReport> run_ablation_suite(const ModelConfig& cfg,
                                              const Dataset& ds,
                                              const TrainConfig& tc);

std::vector<LabeledReport> run_layer_sweep(const ModelConfig& cfg,
                                           const Dataset& ds,
                                           const TrainConfig& tc,
                                           std::size_t max_layers = 5);

// values entries are Top-U settings; 0 means "full" (U = all nodes).
std::vector<LabeledReport> run_topu_sweep(const ModelConfig& cfg,
                                          const Dataset& ds,
                                          const TrainConfig& tc,
                                          const std::vector<std::size_t>& values);

// Top-U survivor counts per (source modality -> target modality) block,
// aggregated over the split and all ST-layers. pct normalizes within each
// target modality.
struct CensusCell {
  std::string source, target;
  std::uint64_t count = 0;
  double pct = 0;
};

std::vector<CensusCell> attention_census(const ModelParams& params,
                                         const ModelConfig& cfg,
                                         const Dataset& ds, Split split);

void write_history_csv(const std::string& path,
                       const std::vector<EpochStats>& history);
void write_report_csv(const std::string& path, const MetricsReport& report);
void write_table_csv(const std::string& path,
                     const std::vector<LabeledReport>& rows,
                     const std::vector<std::string>& modality_names);
void write_census_csv(const std::string& path,
                      const std::vector<CensusCell>& cells);

}  // namespace gsabt
