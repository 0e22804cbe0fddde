#include "gsabt/temporal.hpp"

namespace gsabt {

StcnParams StcnParams::init(std::size_t channels, Rng& rng) {
  StcnParams p;
  for (ConvLayerParams& layer : p.layers) {
    const std::size_t fan = channels * kStcnKernel;
    layer.w = glorot_uniform({channels, channels, kStcnKernel}, fan, fan, rng);
    layer.b = Tensor::zeros({channels}, true);
  }
  return p;
}

void StcnParams::collect(const std::string& prefix,
                         std::vector<std::pair<std::string, Tensor>>& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".w", layers[i].w);
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".b", layers[i].b);
  }
}

BitcnParams BitcnParams::init(std::size_t channels, Rng& rng) {
  BitcnParams p;
  p.fwd = StcnParams::init(channels, rng);
  p.bwd = StcnParams::init(channels, rng);
  return p;
}

void BitcnParams::collect(const std::string& prefix,
                          std::vector<std::pair<std::string, Tensor>>& out) const {
  fwd.collect(prefix + ".fwd", out);
  bwd.collect(prefix + ".bwd", out);
}

TemporalStackParams TemporalStackParams::init(
    std::size_t total_channels, const std::vector<std::size_t>& modality_channels,
    Rng& rng) {
  std::size_t sum = 0;
  for (std::size_t c : modality_channels) sum += c;
  if (sum != total_channels)
    throw ConfigError("TemporalStackParams: modality channels sum to " +
                      std::to_string(sum) + ", expected " +
                      std::to_string(total_channels));
  TemporalStackParams p;
  p.shared = BitcnParams::init(total_channels, rng);
  for (std::size_t c : modality_channels)
    p.unique.push_back(BitcnParams::init(c, rng));
  return p;
}

void TemporalStackParams::collect(
    const std::string& prefix,
    std::vector<std::pair<std::string, Tensor>>& out) const {
  shared.collect(prefix + ".shared", out);
  for (std::size_t m = 0; m < unique.size(); ++m)
    unique[m].collect(prefix + ".unique" + std::to_string(m), out);
}

Tensor stcn_forward(const Tensor& x, const StcnParams& params, real dropout_p,
                    bool training, Rng* rng) {
  if (x.rank() != 3)
    throw ShapeError("stcn_forward: expected x[B,C,T], got " +
                     shape_str(x.shape()));
  if (training && dropout_p > real(0) && rng == nullptr)
    throw ConfigError("stcn_forward: training dropout needs an rng");
  Tensor h = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    h = ops::relu(ops::conv1d(h, params.layers[i].w, params.layers[i].b,
                              kStcnDilations[i], /*causal_pad=*/true));
    if (training && dropout_p > real(0))
      h = ops::dropout(h, dropout_p, training, *rng);
  }
  return h;
}

Tensor bitcn_forward(const Tensor& x, const BitcnParams& params,
                     const TemporalAblation& ablation, real dropout_p,
                     bool training, Rng* rng) {
  if (ablation.no_fstcn && ablation.no_bstcn)
    throw ConfigError("bitcn_forward: both branches ablated");
  Tensor fwd_out, bwd_out;
  if (!ablation.no_fstcn)
    fwd_out = stcn_forward(x, params.fwd, dropout_p, training, rng);
  if (!ablation.no_bstcn) {
    Tensor rev = ops::flip(x, 2);
    Tensor h = stcn_forward(rev, params.bwd, dropout_p, training, rng);
    bwd_out = ops::flip(h, 2);
  }
  if (ablation.no_bstcn) return fwd_out;
  if (ablation.no_fstcn) return bwd_out;
  return ops::add(fwd_out, bwd_out);
}

Tensor shared_unique_forward(const Tensor& x, const TemporalStackParams& params,
                             const std::vector<std::size_t>& channel_offsets,
                             const TemporalAblation& ablation, real dropout_p,
                             bool training, Rng* rng) {
  if (x.rank() != 3)
    throw ShapeError("shared_unique_forward: expected x[B,C,T], got " +
                     shape_str(x.shape()));
  const std::size_t c_total = x.dim(1);
  if (channel_offsets.size() != params.unique.size())
    throw ConfigError("shared_unique_forward: offsets do not match modality count");
  for (std::size_t m = 0; m < channel_offsets.size(); ++m) {
    const std::size_t expected = m == 0 ? 0
                                        : channel_offsets[m - 1] +
                                              params.unique[m - 1].fwd.layers[0].w.dim(0);
    if (channel_offsets[m] != expected)
      throw ConfigError("shared_unique_forward: channel offsets are not a partition");
  }
  const std::size_t last = channel_offsets.back() +
                           params.unique.back().fwd.layers[0].w.dim(0);
  if (last != c_total)
    throw ConfigError("shared_unique_forward: modality slices cover " +
                      std::to_string(last) + " of " + std::to_string(c_total) +
                      " channels");

  Tensor h = bitcn_forward(x, params.shared, ablation, dropout_p, training, rng);
  std::vector<Tensor> parts;
  for (std::size_t m = 0; m < params.unique.size(); ++m) {
    const std::size_t width = params.unique[m].fwd.layers[0].w.dim(0);
    Tensor sliced = ops::slice(h, 1, channel_offsets[m], width);
    parts.push_back(bitcn_forward(sliced, params.unique[m], ablation, dropout_p,
                                  training, rng));
  }
  return ops::concat(1, parts);
}

}  // namespace gsabt
