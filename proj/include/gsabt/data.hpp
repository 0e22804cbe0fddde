#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gsabt/errors.hpp"
#include "gsabt/real.hpp"
#include "gsabt/rng.hpp"

// Modality descriptions, the block-diagonal joint graph, min-max
// normalization with exact inverse, sliding-window splits, the synthetic
// multimodal generator, and the GSTD/GADJ file formats.

namespace gsabt {

struct ModalitySpec {
  std::string name;
  std::size_t node_count = 0;
  std::size_t feature_count = 1;
  // node_count x node_count, row-major, entries in {0,1}. validate() forces
  // self-loops onto the diagonal so no attention row can end up empty.
  std::vector<std::uint8_t> adjacency;

  void validate();
};

struct MultimodalGraph {
  std::size_t total_nodes = 0;
  std::vector<std::size_t> offsets;      // start node index of each block
  std::vector<std::size_t> node_counts;  // per modality
  std::vector<std::uint8_t> adjacency;   // total_nodes^2, block-diagonal

  std::size_t modality_count() const { return node_counts.size(); }
  std::size_t modality_of(std::size_t node) const;
  bool is_block_diagonal() const;
};

// Joins per-modality graphs along the diagonal; everything off-block is 0.
MultimodalGraph extend_graphs(std::vector<ModalitySpec>& specs);

// 4-neighborhood grid adjacency with self-loops, row-major over rows*cols
// cells.
std::vector<std::uint8_t> grid_adjacency(std::size_t rows, std::size_t cols);

// Ring lattice (neighbors one step each way, wraparound) with self-loops;
// the stand-in graph for station-style modalities given only a node count.
std::vector<std::uint8_t> ring_adjacency(std::size_t nodes);

// Time-major dense series: values[t][node][feature].
struct Series {
  std::size_t steps = 0, nodes = 0, features = 0;
  std::vector<real> values;

  real& at(std::size_t t, std::size_t n, std::size_t f) {
    return values[(t * nodes + n) * features + f];
  }
  real at(std::size_t t, std::size_t n, std::size_t f) const {
    return values[(t * nodes + n) * features + f];
  }
};

// Concatenate along the node axis (same steps/features everywhere).
Series concat_series(const std::vector<Series>& parts);

enum class NormMode { minmax, zscore };

// Per-modality statistics fitted on the training span only. minmax maps the
// training range onto [0,1]; denormalize is the exact inverse. A constant
// training series normalizes to 0 and denormalizes back to the constant
// (flagged degenerate, warned once at fit time).
class Normalizer {
 public:
  struct Stats {
    real lo = 0, hi = 1;      // minmax
    real mean = 0, sdev = 1;  // zscore
    bool degenerate = false;
  };

  static Normalizer fit(const Series& joint, const MultimodalGraph& graph,
                        std::size_t train_steps, NormMode mode);

  void normalize(Series& joint, const MultimodalGraph& graph) const;
  real normalize_value(real x, std::size_t modality) const;
  real denormalize_value(real x, std::size_t modality) const;

  NormMode mode() const { return mode_; }
  const std::vector<Stats>& stats() const { return stats_; }

 private:
  NormMode mode_ = NormMode::minmax;
  std::vector<Stats> stats_;
};

enum class Split : std::size_t { train = 0, val = 1, test = 2 };

struct SplitSpec {
  std::size_t train_steps = 0, val_steps = 0, test_steps = 0;
  std::size_t total() const { return train_steps + val_steps + test_steps; }
};

// Anchor-based sliding windows. A sample anchored at t has input steps
// [t-P+1, t] and target steps [t+1, t+Q]; both windows lie entirely inside
// the sample's split, so no train target leaks into val/test.
struct WindowedDataset {
  std::size_t p = 0, q = 0;
  std::array<std::vector<std::size_t>, 3> anchors;

  const std::vector<std::size_t>& of(Split s) const {
    return anchors[static_cast<std::size_t>(s)];
  }
};

WindowedDataset make_windows(std::size_t total_steps, std::size_t p,
                             std::size_t q, const SplitSpec& splits);

struct SynthModality {
  std::string name;
  std::size_t grid_rows = 0, grid_cols = 0;  // when set, nodes = rows*cols
  std::size_t nodes = 0;                     // explicit node count otherwise
  real scale = 1;
  real coupling = 0;  // weight of the shared latent
};

struct SynthConfig {
  std::size_t days = 91;
  std::size_t steps_per_day = 48;
  std::size_t features = 1;
  real base = 1.0;
  real daily_amp = 0.6;       // a1, period = one day
  real half_daily_amp = 0.25; // a2, period = half a day, per-node phase
  real lambda_amp = 0.5;      // shared latent sine amplitude
  real lambda_noise = 0.1;    // shared latent AR noise amplitude
  real noise = 0.05;          // per-sample noise
  std::uint64_t seed = 1;
  std::vector<SynthModality> modalities;
};

// Deterministic given the seed. Values are quantized to f32 so an emitted
// series equals its on-disk representation bit for bit.
std::vector<Series> synth_generate(const SynthConfig& cfg);

// GSTD file: magic "GSTD", version u32 LE, rank u32 LE, dims rank x u64 LE,
// payload f32 LE row-major with time outermost.
void save_series(const Series& s, const std::string& path);
Series load_series(const std::string& path);

// GADJ file: magic "GADJ", node count u64 LE, then N^2 bytes in {0,1}.
void save_graph(const std::vector<std::uint8_t>& adjacency, std::size_t nodes,
                const std::string& path);
std::vector<std::uint8_t> load_graph(const std::string& path,
                                     std::size_t* nodes_out);

// Modality manifest: JSON listing per-modality name, node_count, feature
// names and file paths, plus the sampling interval.
struct ModalityFiles {
  std::string name;
  std::size_t node_count = 0;
  std::vector<std::string> feature_names;
  std::string series_path, graph_path;
};

struct DataManifest {
  std::size_t steps_per_day = 48;
  std::size_t features = 1;
  std::vector<ModalityFiles> modalities;
};

void save_data_manifest(const DataManifest& m, const std::string& path);
DataManifest load_data_manifest(const std::string& path);

// A ready-to-train dataset: joint normalized series + graph + windows.
struct Dataset {
  std::vector<ModalitySpec> specs;
  MultimodalGraph graph;
  Series joint;  // normalized
  Normalizer normalizer;
  WindowedDataset windows;
  SplitSpec splits;
};

// Loads every modality named in the manifest (optionally restricted to a
// subset), joins them, fits the normalizer on the train span and windows the
// result.
Dataset assemble_dataset(const std::string& manifest_path, std::size_t p,
                         std::size_t q, const std::array<std::size_t, 3>& split_weeks,
                         NormMode mode,
                         const std::vector<std::string>& only_modalities = {});

// FNV-1a 64 content digest, hex-encoded; used in run manifests.
std::string file_digest(const std::string& path);

}  // namespace gsabt
