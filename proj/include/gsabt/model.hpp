#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gsabt/data.hpp"
#include "gsabt/spatial.hpp"
#include "gsabt/temporal.hpp"
#include "gsabt/tensor.hpp"

// End-to-end GSABT: pointwise input embedding, L stacked ST-layers (graph
// sparse attention then shared/unique BiTCN, additive residual around the
// pair), and a shared per-node MLP head mapping the flattened temporal
// features to the Q-step forecast. The hidden state keeps all four axes
// [batch, time, node, width] so the temporal stage can convolve over time
// with node*width channels.

namespace gsabt {

struct AblationFlags {
  bool no_sa = false;
  bool no_agcn = false;
  bool no_astar = false;
  bool no_fstcn = false;
  bool no_bstcn = false;
};

enum class StageOrder { spatial_first, temporal_first };

struct ModelConfig {
  std::size_t p = 12, q = 12;
  std::size_t features = 2;
  std::vector<std::string> modality_names;
  std::vector<std::size_t> node_counts;
  std::size_t d_h = 64;  // attention projection width
  std::size_t d_f = 0;   // per-node state width; 0 follows d_h
  std::size_t st_layers = 2;
  std::size_t top_u = 16;
  real dropout = real(0.1);
  AblationFlags ablation;
  GraphAttentionVariant graph_attention = GraphAttentionVariant::masked_softmax;
  StageOrder stage_order = StageOrder::spatial_first;
  std::uint64_t seed = 1;

  std::size_t width() const { return d_f == 0 ? d_h : d_f; }
  std::size_t total_nodes() const;
  std::size_t head_hidden() const { return 4 * d_h; }
  void validate() const;

  std::string to_json_text() const;
  static ModelConfig from_json_text(const std::string& text);
};

struct ModelParams {
  Tensor emb_w, emb_b;  // [F, D], [D]
  struct StLayer {
    SpatialParams spatial;
    TemporalStackParams temporal;
  };
  std::vector<StLayer> layers;
  Tensor head_w1, head_b1;  // [P*D, 4*D_h]
  Tensor head_w2, head_b2;  // [4*D_h, Q*F]

  // Weights are drawn from the config seed in census order; biases are zeros
  // unless random_biases is set (gradient checks use a generic point so relu
  // inputs do not sit exactly on their kinks).
  static ModelParams init(const ModelConfig& cfg, bool random_biases = false);

  // Fixed parameter order shared by the optimizer, checkpoints and the
  // census printout.
  std::vector<std::pair<std::string, Tensor>> census() const;
  std::size_t parameter_count() const;
  std::string census_text() const;
  ModelParams clone() const;
};

// Closed-form parameter count implied by the config.
std::size_t expected_parameter_count(const ModelConfig& cfg);

struct ForwardDiag {
  std::vector<AttentionState> attention;  // one per ST-layer
};

Tensor model_forward(const Tensor& x, const ModelParams& params,
                     const ModelConfig& cfg, const MultimodalGraph& graph,
                     bool training, Rng* dropout_rng,
                     ForwardDiag* diag = nullptr);

// Checkpoint: magic "GSAB", version, element width, embedded config JSON,
// then parameter blobs in census order. Round-trips bit-exactly.
void save_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                     const std::string& path);
std::pair<ModelParams, ModelConfig> load_checkpoint(const std::string& path);

}  // namespace gsabt
