#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "gsabt/tensor.hpp"

// Stacked dilated causal temporal convolutions and their bidirectional and
// shared/unique arrangements. Four conv layers with dilations 1,2,4,4 and
// kernel 2 give a receptive field of 1 + (2-1)*(1+2+4+4) = 12 past steps,
// covering a 12-step input window.

namespace gsabt {

inline constexpr std::array<std::size_t, 4> kStcnDilations = {1, 2, 4, 4};
inline constexpr std::size_t kStcnKernel = 2;

struct ConvLayerParams {
  Tensor w;  // [C, C, K]
  Tensor b;  // [C]
};

struct StcnParams {
  std::array<ConvLayerParams, 4> layers;

  static StcnParams init(std::size_t channels, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out) const;
};

struct BitcnParams {
  StcnParams fwd;  // forward-time branch
  StcnParams bwd;  // reversed-time branch, independent weights

  static BitcnParams init(std::size_t channels, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out) const;
};

struct TemporalAblation {
  bool no_fstcn = false;  // keep only the reversed branch
  bool no_bstcn = false;  // keep only the forward branch
};

// One shared mixer over all channels plus one per-modality mixer over that
// modality's channel slice.
struct TemporalStackParams {
  BitcnParams shared;
  std::vector<BitcnParams> unique;  // per modality

  static TemporalStackParams init(std::size_t total_channels,
                                  const std::vector<std::size_t>& modality_channels,
                                  Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out) const;
};

// x[B, C, T] -> [B, C, T]; per layer: causal dilated conv, ReLU, dropout.
Tensor stcn_forward(const Tensor& x, const StcnParams& params, real dropout_p,
                    bool training, Rng* rng);

// forward branch + time-flipped reversed branch.
Tensor bitcn_forward(const Tensor& x, const BitcnParams& params,
                     const TemporalAblation& ablation, real dropout_p,
                     bool training, Rng* rng);

// Shared stage over all channels, then per-modality unique stages on channel
// slices, concatenated back in modality order. channel_offsets[m] is the
// first channel of modality m; it must partition [0, C).
Tensor shared_unique_forward(const Tensor& x, const TemporalStackParams& params,
                             const std::vector<std::size_t>& channel_offsets,
                             const TemporalAblation& ablation, real dropout_p,
                             bool training, Rng* rng);

}  // namespace gsabt
