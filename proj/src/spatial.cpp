#include "gsabt/spatial.hpp"

#include <cmath>
#include <limits>

namespace gsabt {

namespace {
constexpr real kNegInf = -std::numeric_limits<real>::infinity();
}

SpatialParams SpatialParams::init(std::size_t flat_in, std::size_t d_h,
                                  std::size_t width, Rng& rng) {
  SpatialParams p;
  p.w_q = glorot_uniform({flat_in, d_h}, flat_in, d_h, rng);
  p.b_q = Tensor::zeros({d_h}, true);
  p.w_k = glorot_uniform({flat_in, d_h}, flat_in, d_h, rng);
  p.b_k = Tensor::zeros({d_h}, true);
  p.w_v = glorot_uniform({width, width}, width, width, rng);
  p.b_v = Tensor::zeros({width}, true);
  p.w_g0 = glorot_uniform({width, width}, width, width, rng);
  p.w_g1 = glorot_uniform({width, width}, width, width, rng);
  return p;
}

void SpatialParams::collect(
    const std::string& prefix,
    std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".w_q", w_q);
  out.emplace_back(prefix + ".b_q", b_q);
  out.emplace_back(prefix + ".w_k", w_k);
  out.emplace_back(prefix + ".b_k", b_k);
  out.emplace_back(prefix + ".w_v", w_v);
  out.emplace_back(prefix + ".b_v", b_v);
  out.emplace_back(prefix + ".w_g0", w_g0);
  out.emplace_back(prefix + ".w_g1", w_g1);
}

Tensor project_affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ops::add_bias(ops::matmul(x, w), b);
}

Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t d_h) {
  if (q.shape() != k.shape())
    throw ShapeError("attention_scores: Q " + shape_str(q.shape()) +
                     " vs K " + shape_str(k.shape()));
  return ops::scalar_mul(ops::matmul_nt(q, k),
                         real(1) / real(std::sqrt(double(d_h))));
}

namespace {

std::vector<std::uint8_t> graph_keep_mask(const MultimodalGraph& graph) {
  return graph.adjacency;  // already 0/1 bytes over N*N
}

}  // namespace

Tensor graph_attention(const Tensor& scores, const MultimodalGraph& graph,
                       GraphAttentionVariant variant) {
  const std::size_t n = graph.total_nodes;
  if (scores.rank() < 2 || scores.dim(scores.rank() - 1) != n ||
      scores.dim(scores.rank() - 2) != n)
    throw ShapeError("graph_attention: scores " + shape_str(scores.shape()) +
                     " do not match graph with " + std::to_string(n) + " nodes");
  const auto keep = graph_keep_mask(graph);
  if (variant == GraphAttentionVariant::masked_softmax)
    return ops::softmax_rows(ops::masked_fill(scores, keep, kNegInf));
  // literal elementwise product with the 0/1 graph, then a dense softmax
  return ops::softmax_rows(ops::masked_fill(scores, keep, real(0)));
}

Tensor uniform_graph_weights(const MultimodalGraph& graph, std::size_t batch) {
  const std::size_t n = graph.total_nodes;
  std::vector<real> row(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t deg = 0;
    for (std::size_t j = 0; j < n; ++j) deg += graph.adjacency[i * n + j];
    for (std::size_t j = 0; j < n; ++j)
      if (graph.adjacency[i * n + j])
        row[i * n + j] = real(1) / real(deg);
  }
  std::vector<real> tiled(batch * n * n);
  for (std::size_t b = 0; b < batch; ++b)
    std::copy(row.begin(), row.end(), tiled.begin() + b * n * n);
  return Tensor::from_data({batch, n, n}, std::move(tiled));
}

Tensor node_mix(const Tensor& weights, const Tensor& x) {
  if (weights.rank() != 3)
    throw ShapeError("node_mix: weights must be [B,N,N], got " +
                     shape_str(weights.shape()));
  if (x.rank() == 3) return ops::matmul(weights, x);
  if (x.rank() != 4)
    throw ShapeError("node_mix: x must be [B,P,N,D] or [B,N,D], got " +
                     shape_str(x.shape()));
  const std::size_t b = x.dim(0), p = x.dim(1), n = x.dim(2), d = x.dim(3);
  // fold the time axis into the feature columns so one batched matmul mixes
  // nodes at every step
  Tensor flat = ops::reshape(ops::permute(x, {0, 2, 1, 3}), {b, n, p * d});
  Tensor mixed = ops::matmul(weights, flat);
  return ops::permute(ops::reshape(mixed, {b, n, p, d}), {0, 2, 1, 3});
}

Tensor gcn_local(const Tensor& ga, const Tensor& x, const Tensor& w0,
                 const Tensor& w1) {
  Tensor z = ops::relu(node_mix(ga, ops::matmul(x, w0)));
  return ops::relu(node_mix(ga, ops::matmul(z, w1)));
}

Tensor sparse_global(const Tensor& sparse_scores, const Tensor& v) {
  return node_mix(ops::softmax_rows(sparse_scores), v);
}

Tensor spatial_forward(const Tensor& x, const SpatialParams& params,
                       const MultimodalGraph& graph, std::size_t top_u,
                       GraphAttentionVariant variant, const SpatialAblation& ablation,
                       AttentionState* diag) {
  if (ablation.no_sa && ablation.no_agcn)
    throw ConfigError("spatial_forward: ablating both branches removes the block");
  if (x.rank() != 4)
    throw ShapeError("spatial_forward: expected x[B,P,N,D], got " +
                     shape_str(x.shape()));
  const std::size_t b = x.dim(0), p = x.dim(1), n = x.dim(2), d = x.dim(3);
  if (n != graph.total_nodes)
    throw ShapeError("spatial_forward: x has " + std::to_string(n) +
                     " nodes, graph has " + std::to_string(graph.total_nodes));

  const bool need_scores = !ablation.no_sa || !ablation.no_astar;
  Tensor scores;
  if (need_scores) {
    Tensor x_nodes = ops::reshape(ops::permute(x, {0, 2, 1, 3}), {b, n, p * d});
    Tensor q = project_affine(x_nodes, params.w_q, params.b_q);
    Tensor k = project_affine(x_nodes, params.w_k, params.b_k);
    scores = attention_scores(q, k, params.w_q.dim(1));
    if (diag != nullptr) {
      diag->score_shape = scores.shape();
      diag->scores.assign(scores.data().begin(), scores.data().end());
    }
  }

  Tensor local;
  if (!ablation.no_agcn) {
    Tensor ga = ablation.no_astar ? uniform_graph_weights(graph, b)
                                  : graph_attention(scores, graph, variant);
    local = gcn_local(ga, x, params.w_g0, params.w_g1);
  }

  Tensor global;
  if (!ablation.no_sa) {
    Tensor v = project_affine(x, params.w_v, params.b_v);
    std::vector<std::uint8_t> survivors;
    Tensor sparse = ops::top_u_sparsify(scores, top_u,
                                        diag != nullptr ? &survivors : nullptr);
    if (diag != nullptr) diag->survivors = std::move(survivors);
    global = sparse_global(sparse, v);
  } else if (diag != nullptr) {
    diag->survivors.clear();
  }

  if (ablation.no_sa) return local;
  if (ablation.no_agcn) return global;
  return ops::add(local, global);
}

}  // namespace gsabt
