#include "gsabt/model.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gsabt {

using nlohmann::json;

std::size_t ModelConfig::total_nodes() const {
  std::size_t n = 0;
  for (std::size_t c : node_counts) n += c;
  return n;
}

void ModelConfig::validate() const {
  if (p == 0 || q == 0) throw ConfigError("model: P and Q must be positive");
  if (features == 0) throw ConfigError("model: features must be positive");
  if (node_counts.empty()) throw ConfigError("model: no modalities configured");
  if (modality_names.size() != node_counts.size())
    throw ConfigError("model: modality name/count length mismatch");
  for (std::size_t c : node_counts)
    if (c == 0) throw ConfigError("model: modality with zero nodes");
  if (d_h == 0) throw ConfigError("model: d_h must be positive");
  if (st_layers == 0) throw ConfigError("model: st_layers must be positive");
  if (top_u == 0) throw ConfigError("model: top_u must be positive");
  if (!(dropout >= real(0) && dropout < real(1)))
    throw ConfigError("model: dropout must be in [0,1)");
  if (ablation.no_sa && ablation.no_agcn)
    throw ConfigError("model: ablating both spatial branches removes the block");
  if (ablation.no_fstcn && ablation.no_bstcn)
    throw ConfigError("model: ablating both temporal directions removes the block");
}

namespace {

const char* graph_attention_name(GraphAttentionVariant v) {
  return v == GraphAttentionVariant::masked_softmax ? "masked_softmax" : "literal_product";
}

GraphAttentionVariant graph_attention_from(const std::string& s) {
  if (s == "masked_softmax") return GraphAttentionVariant::masked_softmax;
  if (s == "literal_product") return GraphAttentionVariant::literal_product;
  throw ConfigError("model.graph_attention: unknown value '" + s + "'");
}

const char* order_name(StageOrder o) {
  return o == StageOrder::spatial_first ? "spatial_first" : "temporal_first";
}

StageOrder order_from(const std::string& s) {
  if (s == "spatial_first") return StageOrder::spatial_first;
  if (s == "temporal_first") return StageOrder::temporal_first;
  throw ConfigError("model.stage_order: unknown value '" + s + "'");
}

}  // namespace

std::string ModelConfig::to_json_text() const {
  json j;
  j["p"] = p;
  j["q"] = q;
  j["features"] = features;
  j["modalities"] = json::array();
  for (std::size_t m = 0; m < modality_names.size(); ++m)
    j["modalities"].push_back({{"name", modality_names[m]},
                               {"nodes", node_counts[m]}});
  j["d_h"] = d_h;
  j["d_f"] = d_f;
  j["st_layers"] = st_layers;
  j["top_u"] = top_u;
  j["dropout"] = dropout;
  j["ablation"] = {{"no_sa", ablation.no_sa},
                   {"no_agcn", ablation.no_agcn},
                   {"no_astar", ablation.no_astar},
                   {"no_fstcn", ablation.no_fstcn},
                   {"no_bstcn", ablation.no_bstcn}};
  j["graph_attention"] = graph_attention_name(graph_attention);
  j["stage_order"] = order_name(stage_order);
  j["seed"] = seed;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  static const std::set<std::string> keys = {
      "p", "q", "features", "modalities", "d_h", "d_f", "st_layers",
      "top_u", "dropout", "ablation", "graph_attention", "stage_order", "seed"};
  static const std::set<std::string> ab_keys = {"no_sa", "no_agcn", "no_astar",
                                                "no_fstcn", "no_bstcn"};
  for (auto& [k, _] : j.items())
    if (!keys.contains(k))
      throw ConfigError("model config: unknown key '" + k + "'");
  ModelConfig c;
  try {
    if (j.contains("p")) c.p = j["p"].get<std::size_t>();
    if (j.contains("q")) c.q = j["q"].get<std::size_t>();
    if (j.contains("features")) c.features = j["features"].get<std::size_t>();
    if (j.contains("modalities")) {
      c.modality_names.clear();
      c.node_counts.clear();
      for (const json& e : j["modalities"]) {
        for (auto& [k, _] : e.items())
          if (k != "name" && k != "nodes")
            throw ConfigError("model config: unknown modality key '" + k + "'");
        c.modality_names.push_back(e.at("name").get<std::string>());
        c.node_counts.push_back(e.at("nodes").get<std::size_t>());
      }
    }
    if (j.contains("d_h")) c.d_h = j["d_h"].get<std::size_t>();
    if (j.contains("d_f")) c.d_f = j["d_f"].get<std::size_t>();
    if (j.contains("st_layers")) c.st_layers = j["st_layers"].get<std::size_t>();
    if (j.contains("top_u")) c.top_u = j["top_u"].get<std::size_t>();
    if (j.contains("dropout")) c.dropout = j["dropout"].get<real>();
    if (j.contains("ablation")) {
      for (auto& [k, _] : j["ablation"].items())
        if (!ab_keys.contains(k))
          throw ConfigError("model config: unknown ablation key '" + k + "'");
      const json& a = j["ablation"];
      if (a.contains("no_sa")) c.ablation.no_sa = a["no_sa"].get<bool>();
      if (a.contains("no_agcn")) c.ablation.no_agcn = a["no_agcn"].get<bool>();
      if (a.contains("no_astar")) c.ablation.no_astar = a["no_astar"].get<bool>();
      if (a.contains("no_fstcn")) c.ablation.no_fstcn = a["no_fstcn"].get<bool>();
      if (a.contains("no_bstcn")) c.ablation.no_bstcn = a["no_bstcn"].get<bool>();
    }
    if (j.contains("graph_attention")) c.graph_attention = graph_attention_from(j["graph_attention"].get<std::string>());
    if (j.contains("stage_order"))
      c.stage_order = order_from(j["stage_order"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

ModelParams ModelParams::init(const ModelConfig& cfg, bool random_biases) {
  cfg.validate();
  const std::size_t d = cfg.width();
  Rng rng(Rng::derive(cfg.seed, /*tag=*/0x11));
  auto bias = [&](std::size_t n) {
    if (!random_biases) return Tensor::zeros({n}, true);
    std::vector<real> v(n);
    for (real& x : v) x = static_cast<real>(rng.uniform(-0.5, 0.5));
    return Tensor::from_data({n}, std::move(v), true);
  };

  ModelParams p;
  p.emb_w = glorot_uniform({cfg.features, d}, cfg.features, d, rng);
  p.emb_b = bias(d);
  const std::size_t flat_in = cfg.p * d;
  const std::size_t c_total = cfg.total_nodes() * d;
  std::vector<std::size_t> mod_channels;
  for (std::size_t n : cfg.node_counts) mod_channels.push_back(n * d);

  for (std::size_t l = 0; l < cfg.st_layers; ++l) {
    StLayer layer;
    layer.spatial.w_q = glorot_uniform({flat_in, cfg.d_h}, flat_in, cfg.d_h, rng);
    layer.spatial.b_q = bias(cfg.d_h);
    layer.spatial.w_k = glorot_uniform({flat_in, cfg.d_h}, flat_in, cfg.d_h, rng);
    layer.spatial.b_k = bias(cfg.d_h);
    layer.spatial.w_v = glorot_uniform({d, d}, d, d, rng);
    layer.spatial.b_v = bias(d);
    layer.spatial.w_g0 = glorot_uniform({d, d}, d, d, rng);
    layer.spatial.w_g1 = glorot_uniform({d, d}, d, d, rng);

    auto init_stcn = [&](std::size_t channels) {
      StcnParams s;
      for (auto& conv : s.layers) {
        const std::size_t fan = channels * kStcnKernel;
        conv.w = glorot_uniform({channels, channels, kStcnKernel}, fan, fan, rng);
        conv.b = bias(channels);
      }
      return s;
    };
    layer.temporal.shared.fwd = init_stcn(c_total);
    layer.temporal.shared.bwd = init_stcn(c_total);
    for (std::size_t c : mod_channels) {
      BitcnParams u;
      u.fwd = init_stcn(c);
      u.bwd = init_stcn(c);
      layer.temporal.unique.push_back(std::move(u));
    }
    p.layers.push_back(std::move(layer));
  }

  const std::size_t head_in = cfg.p * d;
  const std::size_t hidden = cfg.head_hidden();
  const std::size_t head_out = cfg.q * cfg.features;
  p.head_w1 = glorot_uniform({head_in, hidden}, head_in, hidden, rng);
  p.head_b1 = bias(hidden);
  p.head_w2 = glorot_uniform({hidden, head_out}, hidden, head_out, rng);
  p.head_b2 = bias(head_out);
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::census() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("emb.w", emb_w);
  out.emplace_back("emb.b", emb_b);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    layers[l].spatial.collect(prefix + ".spatial", out);
    layers[l].temporal.collect(prefix + ".temporal", out);
  }
  out.emplace_back("head.w1", head_w1);
  out.emplace_back("head.b1", head_b1);
  out.emplace_back("head.w2", head_w2);
  out.emplace_back("head.b2", head_b2);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : census()) n += t.size();
  return n;
}

std::string ModelParams::census_text() const {
  std::ostringstream os;
  for (const auto& [name, t] : census()) {
    os << name << " " << shape_str(t.shape()) << " " << t.size() << "\n";
  }
  os << "total " << parameter_count() << "\n";
  return os.str();
}

ModelParams ModelParams::clone() const {
  auto copy_tensor = [](const Tensor& t) {
    return Tensor::from_data(t.shape(),
                             std::vector<real>(t.data().begin(), t.data().end()),
                             t.requires_grad());
  };
  ModelParams out;
  out.emb_w = copy_tensor(emb_w);
  out.emb_b = copy_tensor(emb_b);
  for (const StLayer& l : layers) {
    StLayer c;
    c.spatial.w_q = copy_tensor(l.spatial.w_q);
    c.spatial.b_q = copy_tensor(l.spatial.b_q);
    c.spatial.w_k = copy_tensor(l.spatial.w_k);
    c.spatial.b_k = copy_tensor(l.spatial.b_k);
    c.spatial.w_v = copy_tensor(l.spatial.w_v);
    c.spatial.b_v = copy_tensor(l.spatial.b_v);
    c.spatial.w_g0 = copy_tensor(l.spatial.w_g0);
    c.spatial.w_g1 = copy_tensor(l.spatial.w_g1);
    auto copy_stcn = [&](const StcnParams& s) {
      StcnParams out_s;
      for (std::size_t i = 0; i < s.layers.size(); ++i) {
        out_s.layers[i].w = copy_tensor(s.layers[i].w);
        out_s.layers[i].b = copy_tensor(s.layers[i].b);
      }
      return out_s;
    };
    c.temporal.shared.fwd = copy_stcn(l.temporal.shared.fwd);
    c.temporal.shared.bwd = copy_stcn(l.temporal.shared.bwd);
    for (const BitcnParams& u : l.temporal.unique) {
      BitcnParams cu;
      cu.fwd = copy_stcn(u.fwd);
      cu.bwd = copy_stcn(u.bwd);
      c.temporal.unique.push_back(std::move(cu));
    }
    out.layers.push_back(std::move(c));
  }
  out.head_w1 = copy_tensor(head_w1);
  out.head_b1 = copy_tensor(head_b1);
  out.head_w2 = copy_tensor(head_w2);
  out.head_b2 = copy_tensor(head_b2);
  return out;
}

std::size_t expected_parameter_count(const ModelConfig& cfg) {
  const std::size_t d = cfg.width();
  const std::size_t n = cfg.total_nodes();
  const std::size_t flat_in = cfg.p * d;
  std::size_t count = cfg.features * d + d;  // embedding
  auto stcn = [](std::size_t c) { return 4 * (c * c * kStcnKernel + c); };
  std::size_t per_layer = 2 * (flat_in * cfg.d_h + cfg.d_h)  // Q, K
                          + (d * d + d)                      // V
                          + 2 * d * d;                       // GCN
  per_layer += 2 * stcn(n * d);  // shared fwd+bwd
  for (std::size_t nm : cfg.node_counts) per_layer += 2 * stcn(nm * d);
  count += cfg.st_layers * per_layer;
  const std::size_t hidden = cfg.head_hidden();
  count += flat_in * hidden + hidden + hidden * cfg.q * cfg.features +
           cfg.q * cfg.features;
  return count;
}

Tensor model_forward(const Tensor& x, const ModelParams& params,
                     const ModelConfig& cfg, const MultimodalGraph& graph,
                     bool training, Rng* dropout_rng, ForwardDiag* diag) {
  if (x.rank() != 4)
    throw ShapeError("model_forward: expected x[B,P,N,F], got " +
                     shape_str(x.shape()));
  const std::size_t b = x.dim(0), p_len = x.dim(1), n = x.dim(2), f = x.dim(3);
  if (p_len != cfg.p || n != cfg.total_nodes() || f != cfg.features)
    throw ShapeError("model_forward: x " + shape_str(x.shape()) +
                     " does not match config [*, " + std::to_string(cfg.p) + ", " +
                     std::to_string(cfg.total_nodes()) + ", " +
                     std::to_string(cfg.features) + "]");
  if (graph.total_nodes != n)
    throw ShapeError("model_forward: graph/config node count mismatch");

  const std::size_t d = cfg.width();
  SpatialAblation sab{cfg.ablation.no_sa, cfg.ablation.no_agcn,
                      cfg.ablation.no_astar};
  TemporalAblation tab{cfg.ablation.no_fstcn, cfg.ablation.no_bstcn};
  std::vector<std::size_t> channel_offsets;
  for (std::size_t off : graph.offsets) channel_offsets.push_back(off * d);

  Tensor h = ops::add_bias(ops::matmul(x, params.emb_w), params.emb_b);
  if (diag != nullptr) diag->attention.resize(params.layers.size());

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    try {
      auto spatial_stage = [&](const Tensor& in) {
        return spatial_forward(in, params.layers[l].spatial, graph, cfg.top_u,
                               cfg.graph_attention, sab,
                               diag != nullptr ? &diag->attention[l] : nullptr);
      };
      auto temporal_stage = [&](const Tensor& in) {
        Tensor channels =
            ops::reshape(ops::permute(in, {0, 2, 3, 1}), {b, n * d, p_len});
        Tensor mixed =
            shared_unique_forward(channels, params.layers[l].temporal,
                                  channel_offsets, tab, cfg.dropout, training,
                                  dropout_rng);
        return ops::permute(ops::reshape(mixed, {b, n, d, p_len}), {0, 3, 1, 2});
      };
      Tensor block = cfg.stage_order == StageOrder::spatial_first
                         ? temporal_stage(spatial_stage(h))
                         : spatial_stage(temporal_stage(h));
      h = ops::add(block, h);
    } catch (const NumericError& e) {
      throw NumericError("st_layer " + std::to_string(l) + ": " + e.what());
    }
  }

  Tensor nodes_flat = ops::reshape(ops::permute(h, {0, 2, 1, 3}), {b, n, p_len * d});
  Tensor hidden = ops::relu(
      ops::add_bias(ops::matmul(nodes_flat, params.head_w1), params.head_b1));
  Tensor out = ops::add_bias(ops::matmul(hidden, params.head_w2), params.head_b2);
  return ops::permute(ops::reshape(out, {b, n, cfg.q, cfg.features}),
                      {0, 2, 1, 3});
}

// ---- checkpoint ----

namespace {

void put_u32f(std::ofstream& f, std::uint32_t v) {
  unsigned char bts[4];
  for (int i = 0; i < 4; ++i) bts[i] = (v >> (8 * i)) & 0xff;
  f.write(reinterpret_cast<char*>(bts), 4);
}

void put_u64f(std::ofstream& f, std::uint64_t v) {
  unsigned char bts[8];
  for (int i = 0; i < 8; ++i) bts[i] = (v >> (8 * i)) & 0xff;
  f.write(reinterpret_cast<char*>(bts), 8);
}

std::uint32_t get_u32f(std::ifstream& f, const char* field) {
  unsigned char bts[4];
  if (!f.read(reinterpret_cast<char*>(bts), 4))
    throw FormatError(std::string("checkpoint truncated at ") + field);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(bts[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64f(std::ifstream& f, const char* field) {
  unsigned char bts[8];
  if (!f.read(reinterpret_cast<char*>(bts), 8))
    throw FormatError(std::string("checkpoint truncated at ") + field);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(bts[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                     const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write("GSAB", 4);
  put_u32f(f, 1);                    // version
  put_u32f(f, sizeof(real));         // element width
  const std::string cfg_text = cfg.to_json_text();
  put_u64f(f, cfg_text.size());
  f.write(cfg_text.data(), std::streamsize(cfg_text.size()));
  const auto tensors = params.census();
  put_u64f(f, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u64f(f, t.size());
    f.write(reinterpret_cast<const char*>(t.data().data()),
            std::streamsize(t.size() * sizeof(real)));
  }
  if (!f) throw IoError("write failed for " + path);
}

std::pair<ModelParams, ModelConfig> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "GSAB", 4) != 0)
    throw FormatError(path + ": bad magic (want GSAB)");
  const std::uint32_t version = get_u32f(f, "version");
  if (version != 1)
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(version));
  const std::uint32_t width = get_u32f(f, "element width");
  if (width != sizeof(real))
    throw FormatError(path + ": element width " + std::to_string(width) +
                      " does not match this build (" +
                      std::to_string(sizeof(real)) + ")");
  const std::uint64_t cfg_len = get_u64f(f, "config length");
  std::string cfg_text(cfg_len, '\0');
  if (!f.read(cfg_text.data(), std::streamsize(cfg_len)))
    throw FormatError(path + ": checkpoint truncated in config");
  ModelConfig cfg = ModelConfig::from_json_text(cfg_text);
  cfg.validate();
  ModelParams params = ModelParams::init(cfg);
  const auto tensors = params.census();
  const std::uint64_t blob_count = get_u64f(f, "blob count");
  if (blob_count != tensors.size())
    throw FormatError(path + ": checkpoint has " + std::to_string(blob_count) +
                      " parameter blobs, config implies " +
                      std::to_string(tensors.size()));
  for (const auto& [name, t] : tensors) {
    const std::uint64_t count = get_u64f(f, "blob size");
    if (count != t.size())
      throw FormatError(path + ": blob '" + name + "' holds " +
                        std::to_string(count) + " values, expected " +
                        std::to_string(t.size()));
    Tensor mut = t;
    if (!f.read(reinterpret_cast<char*>(mut.mutable_data().data()),
                std::streamsize(count * sizeof(real))))
      throw FormatError(path + ": checkpoint truncated in blob '" + name + "'");
  }
  return {std::move(params), std::move(cfg)};
}

}  // namespace gsabt
