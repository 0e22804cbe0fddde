#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gsabt/data.hpp"
#include "gsabt/tensor.hpp"

// Graph sparse attention block. Attention weights are computed once per
// sample over the node axis from per-node windows flattened across time;
// the resulting N x N weight matrices mix node features at every time step.
// Local branch: graph-masked softmax feeding a two-layer GCN. Global branch:
// Top-U sparse attention over the same scores.

namespace gsabt {

// How the joint graph combines with the attention scores: masked_softmax
// treats the graph as a softmax mask (non-edges get -inf, rows renormalize
// over neighbors); literal_product multiplies scores by the 0/1 graph
// elementwise and softmaxes densely, which leaks exp(0) weight onto every
// non-edge. The first is the default; the second exists for comparison runs.
enum class GraphAttentionVariant { masked_softmax, literal_product };

struct SpatialAblation {
  bool no_sa = false;     // drop the sparse/global branch
  bool no_agcn = false;   // drop the graph-GCN/local branch
  bool no_astar = false;  // local weights from the graph alone (uniform rows)
};

struct SpatialParams {
  Tensor w_q, b_q;  // [P*D, D_h], [D_h]
  Tensor w_k, b_k;
  Tensor w_v, b_v;    // [D, D], [D] value projection, applied per time step
  Tensor w_g0, w_g1;  // [D, D] GCN layer weights

  static SpatialParams init(std::size_t flat_in, std::size_t d_h,
                            std::size_t width, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out) const;
};

// Per-forward diagnostics for sweeps and the attention census.
struct AttentionState {
  Shape score_shape;                    // [B, N, N]
  std::vector<real> scores;             // A_M values
  std::vector<std::uint8_t> survivors;  // Top-U keep mask, empty when no_sa
};

// x[..., n, d_in] * w[d_in, d_out] + b
Tensor project_affine(const Tensor& x, const Tensor& w, const Tensor& b);

// A = Q K^T / sqrt(d_h), per sample over nodes.
Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t d_h);

// Row-stochastic local weights restricted to the graph.
Tensor graph_attention(const Tensor& scores, const MultimodalGraph& graph,
                       GraphAttentionVariant variant);

// Row-normalized adjacency tiled over the batch: the fixed node weights used
// when attention is ablated away.
Tensor uniform_graph_weights(const MultimodalGraph& graph, std::size_t batch);

// weights[B, N, N] applied over the node axis of x[B, P, N, D] (or
// x[B, N, D]) at every time step.
Tensor node_mix(const Tensor& weights, const Tensor& x);

// ReLU(G_A . ReLU(G_A . x . w0) . w1)
Tensor gcn_local(const Tensor& ga, const Tensor& x, const Tensor& w0,
                 const Tensor& w1);

// softmax over Top-U survivors times the value tensor.
Tensor sparse_global(const Tensor& sparse_scores, const Tensor& v);

// Full block: x[B, P, N, D] -> [B, P, N, D].
Tensor spatial_forward(const Tensor& x, const SpatialParams& params,
                       const MultimodalGraph& graph, std::size_t top_u,
                       GraphAttentionVariant variant, const SpatialAblation& ablation,
                       AttentionState* diag = nullptr);

}  // namespace gsabt
