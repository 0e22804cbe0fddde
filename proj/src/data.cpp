#include "gsabt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

namespace gsabt {

using nlohmann::json;

void ModalitySpec::validate() {
  if (node_count == 0) throw ConfigError("modality '" + name + "': node_count must be positive");
  if (feature_count == 0) throw ConfigError("modality '" + name + "': feature_count must be positive");
  if (adjacency.size() != node_count * node_count)
    throw ConfigError("modality '" + name + "': adjacency is not " +
                      std::to_string(node_count) + "x" + std::to_string(node_count));
  for (std::uint8_t v : adjacency)
    if (v > 1)
      throw ConfigError("modality '" + name + "': adjacency entries must be 0 or 1");
  for (std::size_t i = 0; i < node_count; ++i)
    adjacency[i * node_count + i] = 1;  // self-loops keep attention rows nonempty
}

std::size_t MultimodalGraph::modality_of(std::size_t node) const {
  for (std::size_t m = offsets.size(); m-- > 0;)
    if (node >= offsets[m]) return m;
  throw Error("modality_of: node out of range");
}

bool MultimodalGraph::is_block_diagonal() const {
  for (std::size_t i = 0; i < total_nodes; ++i) {
    const std::size_t mi = modality_of(i);
    for (std::size_t j = 0; j < total_nodes; ++j)
      if (adjacency[i * total_nodes + j] != 0 && modality_of(j) != mi)
        return false;
  }
  return true;
}

MultimodalGraph extend_graphs(std::vector<ModalitySpec>& specs) {
  if (specs.empty()) throw ConfigError("extend_graphs: need at least one modality");
  MultimodalGraph g;
  for (ModalitySpec& s : specs) {
    s.validate();
    g.offsets.push_back(g.total_nodes);
    g.node_counts.push_back(s.node_count);
    g.total_nodes += s.node_count;
  }
  g.adjacency.assign(g.total_nodes * g.total_nodes, 0);
  for (std::size_t m = 0; m < specs.size(); ++m) {
    const std::size_t off = g.offsets[m];
    const std::size_t n = specs[m].node_count;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        g.adjacency[(off + i) * g.total_nodes + (off + j)] =
            specs[m].adjacency[i * n + j];
  }
  return g;
}

std::vector<std::uint8_t> grid_adjacency(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw ConfigError("grid_adjacency: empty grid");
  const std::size_t n = rows * cols;
  std::vector<std::uint8_t> adj(n * n, 0);
  auto id = [cols](std::size_t r, std::size_t c) { return r * cols + c; };
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = id(r, c);
      adj[i * n + i] = 1;
      if (r > 0) adj[i * n + id(r - 1, c)] = 1;
      if (r + 1 < rows) adj[i * n + id(r + 1, c)] = 1;
      if (c > 0) adj[i * n + id(r, c - 1)] = 1;
      if (c + 1 < cols) adj[i * n + id(r, c + 1)] = 1;
    }
  return adj;
}

std::vector<std::uint8_t> ring_adjacency(std::size_t nodes) {
  if (nodes == 0) throw ConfigError("ring_adjacency: empty graph");
  std::vector<std::uint8_t> adj(nodes * nodes, 0);
  for (std::size_t i = 0; i < nodes; ++i) {
    adj[i * nodes + i] = 1;
    adj[i * nodes + (i + 1) % nodes] = 1;
    adj[i * nodes + (i + nodes - 1) % nodes] = 1;
  }
  return adj;
}

Series concat_series(const std::vector<Series>& parts) {
  if (parts.empty()) throw ConfigError("concat_series: no inputs");
  Series out;
  out.steps = parts[0].steps;
  out.features = parts[0].features;
  for (const Series& s : parts) {
    if (s.steps != out.steps || s.features != out.features)
      throw ConfigError("concat_series: step/feature mismatch across modalities");
    out.nodes += s.nodes;
  }
  out.values.resize(out.steps * out.nodes * out.features);
  for (std::size_t t = 0; t < out.steps; ++t) {
    std::size_t off = 0;
    for (const Series& s : parts) {
      std::copy(s.values.begin() + t * s.nodes * s.features,
                s.values.begin() + (t + 1) * s.nodes * s.features,
                out.values.begin() + (t * out.nodes + off) * out.features);
      off += s.nodes;
    }
  }
  return out;
}

Normalizer Normalizer::fit(const Series& joint, const MultimodalGraph& graph,
                           std::size_t train_steps, NormMode mode) {
  if (train_steps == 0 || train_steps > joint.steps)
    throw ConfigError("Normalizer::fit: train span empty or larger than series");
  Normalizer nz;
  nz.mode_ = mode;
  nz.stats_.resize(graph.modality_count());
  for (std::size_t m = 0; m < graph.modality_count(); ++m) {
    Stats& st = nz.stats_[m];
    real lo = std::numeric_limits<real>::infinity(), hi = -lo;
    double sum = 0, sumsq = 0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < train_steps; ++t)
      for (std::size_t n = 0; n < graph.node_counts[m]; ++n)
        for (std::size_t f = 0; f < joint.features; ++f) {
          const real v = joint.at(t, graph.offsets[m] + n, f);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          sum += v;
          sumsq += double(v) * v;
          ++count;
        }
    st.lo = lo;
    st.hi = hi;
    st.mean = real(sum / count);
    const double var = std::max(0.0, sumsq / count - double(st.mean) * st.mean);
    st.sdev = real(std::sqrt(var));
    st.degenerate = (mode == NormMode::minmax) ? (hi == lo) : (st.sdev == real(0));
    if (st.degenerate)
      std::fprintf(stderr,
                   "warning: modality %zu has a constant training series; "
                   "normalization maps it to 0\n",
                   m);
  }
  return nz;
}

real Normalizer::normalize_value(real x, std::size_t m) const {
  const Stats& st = stats_[m];
  if (st.degenerate) return real(0);
  if (mode_ == NormMode::minmax) return (x - st.lo) / (st.hi - st.lo);
  return (x - st.mean) / st.sdev;
}

real Normalizer::denormalize_value(real x, std::size_t m) const {
  const Stats& st = stats_[m];
  if (st.degenerate) return mode_ == NormMode::minmax ? st.lo : st.mean;
  if (mode_ == NormMode::minmax) return x * (st.hi - st.lo) + st.lo;
  return x * st.sdev + st.mean;
}

void Normalizer::normalize(Series& joint, const MultimodalGraph& graph) const {
  for (std::size_t t = 0; t < joint.steps; ++t)
    for (std::size_t m = 0; m < graph.modality_count(); ++m)
      for (std::size_t n = 0; n < graph.node_counts[m]; ++n)
        for (std::size_t f = 0; f < joint.features; ++f) {
          real& v = joint.at(t, graph.offsets[m] + n, f);
          v = normalize_value(v, m);
        }
}

WindowedDataset make_windows(std::size_t total_steps, std::size_t p,
                             std::size_t q, const SplitSpec& splits) {
  if (p == 0 || q == 0) throw ConfigError("make_windows: P and Q must be positive");
  if (splits.total() > total_steps)
    throw ConfigError("make_windows: splits cover " + std::to_string(splits.total()) +
                      " steps but series has " + std::to_string(total_steps));
  WindowedDataset wd;
  wd.p = p;
  wd.q = q;
  const std::size_t spans[3] = {splits.train_steps, splits.val_steps,
                                splits.test_steps};
  const char* names[3] = {"train", "val", "test"};
  std::size_t start = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t end = start + spans[s];
    if (spans[s] > 0) {
      if (spans[s] < p + q)
        throw ConfigError(std::string("make_windows: ") + names[s] + " span " +
                          std::to_string(spans[s]) + " is shorter than P+Q = " +
                          std::to_string(p + q));
      for (std::size_t t = start + p - 1; t + q <= end - 1; ++t)
        wd.anchors[s].push_back(t);
    }
    start = end;
  }
  return wd;
}

std::vector<Series> synth_generate(const SynthConfig& cfg) {
  if (cfg.days == 0) throw ConfigError("synth_generate: days must be >= 1");
  if (cfg.modalities.empty())
    throw ConfigError("synth_generate: no modalities configured");
  const std::size_t T = cfg.days * cfg.steps_per_day;
  const double period = double(cfg.steps_per_day);
  const double two_pi = 6.283185307179586477;
  Rng rng(cfg.seed);

  // Draw order is fixed: latent phase, latent AR stream, then per modality
  // the node/feature phases, then per-sample noise.
  const double psi = rng.uniform(0, two_pi);
  std::vector<double> latent(T);
  double ar = 0;
  for (std::size_t t = 0; t < T; ++t) {
    ar = 0.95 * ar + rng.uniform(-1, 1);
    latent[t] = double(cfg.lambda_amp) * std::sin(two_pi * double(t) / period + psi) +
                double(cfg.lambda_noise) * ar;
  }

  std::vector<Series> out;
  for (const SynthModality& sm : cfg.modalities) {
    const std::size_t nodes =
        sm.grid_rows > 0 ? sm.grid_rows * sm.grid_cols : sm.nodes;
    if (nodes == 0)
      throw ConfigError("synth_generate: modality '" + sm.name +
                        "' has no nodes (set nodes or grid dims)");
    Series s;
    s.steps = T;
    s.nodes = nodes;
    s.features = cfg.features;
    s.values.resize(T * nodes * cfg.features);
    std::vector<double> phase(nodes * cfg.features);
    for (double& ph : phase) ph = rng.uniform(0, two_pi);
    for (std::size_t t = 0; t < T; ++t) {
      const double daily =
          double(cfg.daily_amp) * std::sin(two_pi * double(t) / period);
      for (std::size_t n = 0; n < nodes; ++n)
        for (std::size_t f = 0; f < cfg.features; ++f) {
          const double halfday =
              double(cfg.half_daily_amp) *
              std::sin(2 * two_pi * double(t) / period + phase[n * cfg.features + f]);
          double v = double(cfg.base) + daily + halfday +
                     latent[t] * double(sm.coupling) +
                     double(cfg.noise) * rng.uniform(-1, 1);
          v *= double(sm.scale);
          if (v < 0) v = 0;
          s.at(t, n, f) = real(float(v));  // f32 grid so disk round-trips are exact
        }
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---- file formats ----

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  f.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ofstream& f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  f.write(reinterpret_cast<char*>(b), 8);
}

std::uint32_t get_u32(std::ifstream& f, const char* field) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(std::string("truncated file while reading ") + field);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& f, const char* field) {
  unsigned char b[8];
  if (!f.read(reinterpret_cast<char*>(b), 8))
    throw FormatError(std::string("truncated file while reading ") + field);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_series(const Series& s, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write("GSTD", 4);
  put_u32(f, 1);  // format version
  put_u32(f, 3);  // rank
  put_u64(f, s.steps);
  put_u64(f, s.nodes);
  put_u64(f, s.features);
  for (real v : s.values) {
    const float x = float(v);
    std::uint32_t bits;
    std::memcpy(&bits, &x, 4);
    put_u32(f, bits);
  }
  if (!f) throw IoError("write failed for " + path);
}

Series load_series(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "GSTD", 4) != 0)
    throw FormatError(path + ": bad magic (want GSTD)");
  const std::uint32_t version = get_u32(f, "version");
  if (version != 1)
    throw FormatError(path + ": unsupported version " + std::to_string(version));
  const std::uint32_t rank = get_u32(f, "rank");
  if (rank != 3)
    throw FormatError(path + ": rank " + std::to_string(rank) + ", expected 3");
  Series s;
  s.steps = get_u64(f, "dim 0 (steps)");
  s.nodes = get_u64(f, "dim 1 (nodes)");
  s.features = get_u64(f, "dim 2 (features)");
  const std::uint64_t count =
      std::uint64_t(s.steps) * s.nodes * s.features;
  if (count == 0) throw FormatError(path + ": zero-sized dims");
  s.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t bits = get_u32(f, "payload");
    float x;
    std::memcpy(&x, &bits, 4);
    s.values[i] = real(x);
  }
  f.peek();
  if (!f.eof()) throw FormatError(path + ": payload longer than header dims");
  return s;
}

void save_graph(const std::vector<std::uint8_t>& adjacency, std::size_t nodes,
                const std::string& path) {
  if (adjacency.size() != nodes * nodes)
    throw ConfigError("save_graph: adjacency is not square");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write("GADJ", 4);
  put_u64(f, nodes);
  f.write(reinterpret_cast<const char*>(adjacency.data()),
          std::streamsize(adjacency.size()));
  if (!f) throw IoError("write failed for " + path);
}

std::vector<std::uint8_t> load_graph(const std::string& path,
                                     std::size_t* nodes_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "GADJ", 4) != 0)
    throw FormatError(path + ": bad magic (want GADJ)");
  const std::uint64_t n = get_u64(f, "node count");
  std::vector<std::uint8_t> adj(n * n);
  if (!f.read(reinterpret_cast<char*>(adj.data()), std::streamsize(adj.size())))
    throw FormatError(path + ": truncated adjacency payload");
  for (std::uint8_t v : adj)
    if (v > 1) throw FormatError(path + ": adjacency entry not in {0,1}");
  if (nodes_out != nullptr) *nodes_out = n;
  return adj;
}

void save_data_manifest(const DataManifest& m, const std::string& path) {
  json j;
  j["steps_per_day"] = m.steps_per_day;
  j["features"] = m.features;
  j["modalities"] = json::array();
  for (const ModalityFiles& mf : m.modalities) {
    j["modalities"].push_back({{"name", mf.name},
                               {"node_count", mf.node_count},
                               {"feature_names", mf.feature_names},
                               {"series", mf.series_path},
                               {"graph", mf.graph_path}});
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(2) << "\n";
}

DataManifest load_data_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  static const std::set<std::string> top_keys = {"steps_per_day", "features",
                                                 "modalities"};
  static const std::set<std::string> mod_keys = {
      "name", "node_count", "feature_names", "series", "graph"};
  for (auto& [k, _] : j.items())
    if (!top_keys.contains(k))
      throw FormatError(path + ": unknown manifest key '" + k + "'");
  DataManifest m;
  try {
    m.steps_per_day = j.at("steps_per_day").get<std::size_t>();
    m.features = j.at("features").get<std::size_t>();
    for (const json& e : j.at("modalities")) {
      for (auto& [k, _] : e.items())
        if (!mod_keys.contains(k))
          throw FormatError(path + ": unknown modality key '" + k + "'");
      ModalityFiles mf;
      mf.name = e.at("name").get<std::string>();
      mf.node_count = e.at("node_count").get<std::size_t>();
      if (e.contains("feature_names"))
        mf.feature_names = e.at("feature_names").get<std::vector<std::string>>();
      mf.series_path = e.at("series").get<std::string>();
      mf.graph_path = e.at("graph").get<std::string>();
      m.modalities.push_back(std::move(mf));
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (m.modalities.empty()) throw FormatError(path + ": no modalities listed");
  return m;
}

namespace {

std::string resolve_relative(const std::string& manifest_path,
                             const std::string& file) {
  if (file.empty() || file[0] == '/') return file;
  const std::size_t slash = manifest_path.find_last_of('/');
  if (slash == std::string::npos) return file;
  return manifest_path.substr(0, slash + 1) + file;
}

}  // namespace

Dataset assemble_dataset(const std::string& manifest_path, std::size_t p,
                         std::size_t q,
                         const std::array<std::size_t, 3>& split_weeks,
                         NormMode mode,
                         const std::vector<std::string>& only_modalities) {
  const DataManifest manifest = load_data_manifest(manifest_path);
  Dataset ds;
  std::vector<Series> parts;
  for (const ModalityFiles& mf : manifest.modalities) {
    if (!only_modalities.empty() &&
        std::find(only_modalities.begin(), only_modalities.end(), mf.name) ==
            only_modalities.end())
      continue;
    std::size_t n = 0;
    ModalitySpec spec;
    spec.name = mf.name;
    spec.adjacency = load_graph(resolve_relative(manifest_path, mf.graph_path), &n);
    if (n != mf.node_count)
      throw FormatError("modality '" + mf.name + "': graph has " +
                        std::to_string(n) + " nodes, manifest says " +
                        std::to_string(mf.node_count));
    spec.node_count = n;
    spec.feature_count = manifest.features;
    Series s = load_series(resolve_relative(manifest_path, mf.series_path));
    if (s.nodes != n || s.features != manifest.features)
      throw FormatError("modality '" + mf.name + "': series dims " +
                        std::to_string(s.nodes) + "x" + std::to_string(s.features) +
                        " do not match manifest");
    parts.push_back(std::move(s));
    ds.specs.push_back(std::move(spec));
  }
  if (ds.specs.empty())
    throw ConfigError("assemble_dataset: no modalities selected from manifest");
  ds.graph = extend_graphs(ds.specs);
  ds.joint = concat_series(parts);

  const std::size_t week = 7 * manifest.steps_per_day;
  ds.splits = {split_weeks[0] * week, split_weeks[1] * week, split_weeks[2] * week};
  if (ds.splits.total() > ds.joint.steps)
    throw ConfigError("assemble_dataset: split weeks need " +
                      std::to_string(ds.splits.total()) + " steps, series has " +
                      std::to_string(ds.joint.steps));
  ds.normalizer = Normalizer::fit(ds.joint, ds.graph, ds.splits.train_steps, mode);
  ds.normalizer.normalize(ds.joint, ds.graph);
  ds.windows = make_windows(ds.joint.steps, p, q, ds.splits);
  return ds;
}

std::string file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (f.read(buf, sizeof buf) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= std::uint8_t(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (f.eof()) break;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace gsabt
