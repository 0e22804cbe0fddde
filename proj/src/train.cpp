#include "gsabt/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

namespace gsabt {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (learning_rate < real(0)) throw ConfigError("train: negative learning rate");
  if (optimizer != "adam" && optimizer != "sgd")
    throw ConfigError("train: unknown optimizer '" + optimizer + "'");
}

std::string TrainConfig::to_json_text() const {
  json j;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["learning_rate"] = learning_rate;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["epsilon"] = epsilon;
  j["clip_norm"] = clip_norm;
  j["patience"] = patience;
  j["seed"] = seed;
  j["optimizer"] = optimizer;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  static const std::set<std::string> keys = {
      "batch_size", "epochs",   "learning_rate", "beta1",    "beta2",
      "epsilon",    "clip_norm", "patience",     "seed",     "optimizer"};
  for (auto& [k, _] : j.items())
    if (!keys.contains(k)) throw ConfigError("train config: unknown key '" + k + "'");
  TrainConfig c;
  try {
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<real>();
    if (j.contains("beta1")) c.beta1 = j["beta1"].get<real>();
    if (j.contains("beta2")) c.beta2 = j["beta2"].get<real>();
    if (j.contains("epsilon")) c.epsilon = j["epsilon"].get<real>();
    if (j.contains("clip_norm")) c.clip_norm = j["clip_norm"].get<real>();
    if (j.contains("patience")) c.patience = j["patience"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("optimizer")) c.optimizer = j["optimizer"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

Tensor mae_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("mae_loss: shape mismatch " + shape_str(pred.shape()) +
                     " vs " + shape_str(target.shape()));
  Tensor diff = ops::abs(ops::sub(pred, target));
  return ops::scalar_mul(ops::sum(diff), real(1) / real(pred.size()));
}

namespace {

Tensor gather_window(const Dataset& ds, const std::vector<std::size_t>& anchors,
                     std::size_t begin, std::size_t count, std::size_t len,
                     bool targets) {
  const std::size_t n = ds.joint.nodes, f = ds.joint.features;
  std::vector<real> buf(count * len * n * f);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t anchor = anchors[begin + b];
    const std::size_t start = targets ? anchor + 1 : anchor + 1 - len;
    std::copy(ds.joint.values.begin() + start * n * f,
              ds.joint.values.begin() + (start + len) * n * f,
              buf.begin() + b * len * n * f);
  }
  return Tensor::from_data({count, len, n, f}, std::move(buf));
}

}  // namespace

Tensor gather_inputs(const Dataset& ds, const std::vector<std::size_t>& anchors,
                     std::size_t begin, std::size_t count, std::size_t p) {
  return gather_window(ds, anchors, begin, count, p, /*targets=*/false);
}

Tensor gather_targets(const Dataset& ds, const std::vector<std::size_t>& anchors,
                      std::size_t begin, std::size_t count, std::size_t q) {
  return gather_window(ds, anchors, begin, count, q, /*targets=*/true);
}

namespace {

void check_model_matches_dataset(const ModelConfig& cfg, const Dataset& ds) {
  if (cfg.node_counts != ds.graph.node_counts)
    throw ConfigError("model/dataset modality node counts differ");
  if (cfg.features != ds.joint.features)
    throw ConfigError("model expects " + std::to_string(cfg.features) +
                      " features, dataset has " +
                      std::to_string(ds.joint.features));
  if (cfg.modality_names.size() == ds.specs.size()) {
    for (std::size_t m = 0; m < ds.specs.size(); ++m)
      if (cfg.modality_names[m] != ds.specs[m].name)
        throw ConfigError("model modality '" + cfg.modality_names[m] +
                          "' does not match dataset modality '" +
                          ds.specs[m].name + "'");
  }
}

double eval_split_mae(const ModelParams& params, const ModelConfig& cfg,
                      const Dataset& ds, Split split, std::size_t batch_size) {
  const auto& anchors = ds.windows.of(split);
  if (anchors.empty()) return 0;
  double total_abs = 0;
  std::size_t total_count = 0;
  for (std::size_t begin = 0; begin < anchors.size(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, anchors.size() - begin);
    Tensor x = gather_inputs(ds, anchors, begin, count, cfg.p);
    Tensor y = gather_targets(ds, anchors, begin, count, cfg.q);
    Tensor pred = model_forward(x, params, cfg, ds.graph, /*training=*/false,
                                nullptr);
    for (std::size_t i = 0; i < y.size(); ++i)
      total_abs += std::abs(double(pred.data()[i]) - double(y.data()[i]));
    total_count += y.size();
  }
  return total_abs / double(total_count);
}

}  // namespace

TrainResult train_model(const ModelConfig& cfg, const Dataset& ds,
                        const TrainConfig& tc) {
  cfg.validate();
  tc.validate();
  check_model_matches_dataset(cfg, ds);
  if (!ds.graph.is_block_diagonal())
    throw Error("train: joint graph is not block-diagonal");
  if (ds.windows.of(Split::train).empty())
    throw ConfigError("train: no training windows");

  ModelParams params = ModelParams::init(cfg);
  std::vector<Tensor> opt_params;
  for (auto& [name, t] : params.census()) opt_params.push_back(t);
  OptimConfig oc;
  oc.kind = tc.optimizer;
  oc.learning_rate = tc.learning_rate;
  oc.beta1 = tc.beta1;
  oc.beta2 = tc.beta2;
  oc.epsilon = tc.epsilon;
  oc.clip_norm = tc.clip_norm;
  Optimizer opt(opt_params, oc);

  Rng shuffle_rng(Rng::derive(tc.seed, 0x21));
  Rng dropout_rng(Rng::derive(tc.seed, 0x22));

  std::vector<std::size_t> order = ds.windows.of(Split::train);
  TrainResult result;
  result.config = cfg;
  result.best_val_mae = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    shuffle(order, shuffle_rng);
    double epoch_abs = 0;
    std::size_t epoch_count = 0;
    for (std::size_t begin = 0, batch_i = 0; begin < order.size();
         begin += tc.batch_size, ++batch_i) {
      const std::size_t count = std::min(tc.batch_size, order.size() - begin);
      Tensor x = gather_inputs(ds, order, begin, count, cfg.p);
      Tensor y = gather_targets(ds, order, begin, count, cfg.q);
      Tape tape;
      double loss_val;
      {
        TapeScope scope(tape);
        Tensor pred =
            model_forward(x, params, cfg, ds.graph, /*training=*/true, &dropout_rng);
        Tensor loss = mae_loss(pred, y);
        loss_val = double(loss.item());
        if (std::isnan(loss_val) || std::isinf(loss_val))
          throw NumericError("train: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(batch_i));
        opt.zero_grad();
        tape.backward(loss);
      }
      opt.step();
      epoch_abs += loss_val * double(y.size());
      epoch_count += y.size();
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_mae = epoch_abs / double(epoch_count);
    es.val_mae = eval_split_mae(params, cfg, ds, Split::val, tc.batch_size);
    es.wall_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t_start)
                     .count();
    result.history.push_back(es);

    const double selection_mae =
        ds.windows.of(Split::val).empty() ? es.train_mae : es.val_mae;
    if (selection_mae < result.best_val_mae) {
      result.best_val_mae = selection_mae;
      result.best_epoch = epoch;
      result.params = params.clone();
    }
    if (tc.patience > 0 && epoch - result.best_epoch >= tc.patience) break;
  }
  if (std::isinf(result.best_val_mae)) result.params = params.clone();
  return result;
}

MetricsReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                             const Dataset& ds, Split split) {
  check_model_matches_dataset(cfg, ds);
  const auto& anchors = ds.windows.of(split);
  if (anchors.empty()) throw ConfigError("evaluate: split has no samples");
  const std::size_t n = ds.joint.nodes, f = ds.joint.features;
  const std::size_t mods = ds.graph.modality_count();
  std::vector<std::vector<real>> truth(mods), pred(mods);

  const std::size_t batch = 64;
  for (std::size_t begin = 0; begin < anchors.size(); begin += batch) {
    const std::size_t count = std::min(batch, anchors.size() - begin);
    Tensor x = gather_inputs(ds, anchors, begin, count, cfg.p);
    Tensor y = gather_targets(ds, anchors, begin, count, cfg.q);
    Tensor out = model_forward(x, params, cfg, ds.graph, false, nullptr);
    for (std::size_t b = 0; b < count; ++b)
      for (std::size_t t = 0; t < cfg.q; ++t)
        for (std::size_t m = 0; m < mods; ++m)
          for (std::size_t nn = 0; nn < ds.graph.node_counts[m]; ++nn)
            for (std::size_t ff = 0; ff < f; ++ff) {
              const std::size_t at =
                  ((b * cfg.q + t) * n + ds.graph.offsets[m] + nn) * f + ff;
              truth[m].push_back(
                  ds.normalizer.denormalize_value(y.data()[at], m));
              pred[m].push_back(
                  ds.normalizer.denormalize_value(out.data()[at], m));
            }
  }

  MetricsReport report;
  std::vector<real> all_truth, all_pred;
  for (std::size_t m = 0; m < mods; ++m) {
    ModalityMetrics mm;
    mm.name = ds.specs[m].name;
    mm.n = truth[m].size();
    mm.mae = mae(truth[m], pred[m]);
    mm.rmse = rmse(truth[m], pred[m]);
    mm.pcc = pcc(truth[m], pred[m]);
    report.per_modality.push_back(std::move(mm));
    all_truth.insert(all_truth.end(), truth[m].begin(), truth[m].end());
    all_pred.insert(all_pred.end(), pred[m].begin(), pred[m].end());
  }
  report.overall.name = "overall";
  report.overall.n = all_truth.size();
  report.overall.mae = mae(all_truth, all_pred);
  report.overall.rmse = rmse(all_truth, all_pred);
  report.overall.pcc = pcc(all_truth, all_pred);
  return report;
}

MetricsReport evaluate_mean_baseline(const Dataset& ds, Split split) {
  const auto& anchors = ds.windows.of(split);
  if (anchors.empty()) throw ConfigError("baseline: split has no samples");
  const std::size_t n = ds.joint.nodes, f = ds.joint.features;
  const std::size_t mods = ds.graph.modality_count();
  // per-node, per-feature mean over the (normalized) training span
  std::vector<double> mean(n * f, 0);
  for (std::size_t t = 0; t < ds.splits.train_steps; ++t)
    for (std::size_t i = 0; i < n * f; ++i)
      mean[i] += ds.joint.values[t * n * f + i];
  for (double& v : mean) v /= double(ds.splits.train_steps);

  std::vector<std::vector<real>> truth(mods), pred(mods);
  const std::size_t q = ds.windows.q;
  for (std::size_t anchor : anchors)
    for (std::size_t t = 0; t < q; ++t)
      for (std::size_t m = 0; m < mods; ++m)
        for (std::size_t nn = 0; nn < ds.graph.node_counts[m]; ++nn)
          for (std::size_t ff = 0; ff < f; ++ff) {
            const std::size_t col = (ds.graph.offsets[m] + nn) * f + ff;
            truth[m].push_back(ds.normalizer.denormalize_value(
                ds.joint.values[(anchor + 1 + t) * n * f + col], m));
            pred[m].push_back(
                ds.normalizer.denormalize_value(real(mean[col]), m));
          }

  MetricsReport report;
  std::vector<real> all_truth, all_pred;
  for (std::size_t m = 0; m < mods; ++m) {
    ModalityMetrics mm;
    mm.name = ds.specs[m].name;
    mm.n = truth[m].size();
    mm.mae = mae(truth[m], pred[m]);
    mm.rmse = rmse(truth[m], pred[m]);
    mm.pcc = pcc(truth[m], pred[m]);
    report.per_modality.push_back(std::move(mm));
    all_truth.insert(all_truth.end(), truth[m].begin(), truth[m].end());
    all_pred.insert(all_pred.end(), pred[m].begin(), pred[m].end());
  }
  report.overall.name = "overall";
  report.overall.n = all_truth.size();
  report.overall.mae = mae(all_truth, all_pred);
  report.overall.rmse = rmse(all_truth, all_pred);
  report.overall.pcc = pcc(all_truth, all_pred);
  return report;
}

std::vector<LabeledReport> run_ablation_suite(const ModelConfig& cfg,
                                              const Dataset& ds,
                                              const TrainConfig& tc) {
  struct Variant {
    const char* label;
    AblationFlags flags;
  };
  const Variant variants[] = {
      {"full", {}},
      {"no_sa", {.no_sa = true}},
      {"no_agcn", {.no_agcn = true}},
      {"no_astar", {.no_astar = true}},
      {"no_fstcn", {.no_fstcn = true}},
      {"no_bstcn", {.no_bstcn = true}},
  };
  std::vector<LabeledReport> rows;
  for (const Variant& v : variants) {
    ModelConfig variant_cfg = cfg;
    variant_cfg.ablation = v.flags;
    TrainResult tr = train_model(variant_cfg, ds, tc);
    rows.push_back({v.label, evaluate_model(tr.params, variant_cfg, ds, Split::test)});
  }
  return rows;
}

std::vector<LabeledReport> run_layer_sweep(const ModelConfig& cfg,
                                           const Dataset& ds,
                                           const TrainConfig& tc,
                                           std::size_t max_layers) {
  std::vector<LabeledReport> rows;
  for (std::size_t layers = 1; layers <= max_layers; ++layers) {
    ModelConfig variant_cfg = cfg;
    variant_cfg.st_layers = layers;
    TrainResult tr = train_model(variant_cfg, ds, tc);
    rows.push_back({std::to_string(layers),
                    evaluate_model(tr.params, variant_cfg, ds, Split::test)});
  }
  return rows;
}

std::vector<LabeledReport> run_topu_sweep(const ModelConfig& cfg,
                                          const Dataset& ds,
                                          const TrainConfig& tc,
                                          const std::vector<std::size_t>& values) {
  std::vector<LabeledReport> rows;
  for (std::size_t u : values) {
    ModelConfig variant_cfg = cfg;
    variant_cfg.top_u = u == 0 ? cfg.total_nodes() : u;
    TrainResult tr = train_model(variant_cfg, ds, tc);
    rows.push_back({u == 0 ? std::string("full") : std::to_string(u),
                    evaluate_model(tr.params, variant_cfg, ds, Split::test)});
  }
  return rows;
}

std::vector<CensusCell> attention_census(const ModelParams& params,
                                         const ModelConfig& cfg,
                                         const Dataset& ds, Split split) {
  if (cfg.ablation.no_sa)
    throw ConfigError("attention_census: the sparse branch is ablated away");
  check_model_matches_dataset(cfg, ds);
  const auto& anchors = ds.windows.of(split);
  if (anchors.empty()) throw ConfigError("attention_census: split has no samples");
  const std::size_t mods = ds.graph.modality_count();
  const std::size_t n = ds.graph.total_nodes;
  std::vector<std::uint64_t> counts(mods * mods, 0);

  const std::size_t batch = 64;
  for (std::size_t begin = 0; begin < anchors.size(); begin += batch) {
    const std::size_t count = std::min(batch, anchors.size() - begin);
    Tensor x = gather_inputs(ds, anchors, begin, count, cfg.p);
    ForwardDiag diag;
    model_forward(x, params, cfg, ds.graph, false, nullptr, &diag);
    for (const AttentionState& att : diag.attention) {
      if (att.survivors.empty()) continue;
      for (std::size_t b = 0; b < count; ++b)
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t ti = ds.graph.modality_of(i);
          const std::uint8_t* row = att.survivors.data() + (b * n + i) * n;
          for (std::size_t j = 0; j < n; ++j)
            if (row[j]) ++counts[ti * mods + ds.graph.modality_of(j)];
        }
    }
  }

  std::vector<CensusCell> cells;
  for (std::size_t ti = 0; ti < mods; ++ti) {
    std::uint64_t target_total = 0;
    for (std::size_t si = 0; si < mods; ++si) target_total += counts[ti * mods + si];
    for (std::size_t si = 0; si < mods; ++si) {
      CensusCell cell;
      cell.source = ds.specs[si].name;
      cell.target = ds.specs[ti].name;
      cell.count = counts[ti * mods + si];
      cell.pct = target_total == 0
                     ? 0
                     : 100.0 * double(cell.count) / double(target_total);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// ---- CSV emission ----

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_pcc(const std::optional<double>& v) {
  return v.has_value() ? fmt_double(*v) : "NA";
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  return f;
}

}  // namespace

void write_history_csv(const std::string& path,
                       const std::vector<EpochStats>& history) {
  auto f = open_csv(path);
  f << "epoch,train_mae,val_mae,wall_ms\n";
  for (const EpochStats& e : history)
    f << e.epoch << ',' << fmt_double(e.train_mae) << ',' << fmt_double(e.val_mae)
      << ',' << fmt_double(e.wall_ms) << '\n';
}

void write_report_csv(const std::string& path, const MetricsReport& report) {
  auto f = open_csv(path);
  f << "modality,mae,rmse,pcc,n\n";
  for (const ModalityMetrics& m : report.per_modality)
    f << m.name << ',' << fmt_double(m.mae) << ',' << fmt_double(m.rmse) << ','
      << fmt_pcc(m.pcc) << ',' << m.n << '\n';
  f << report.overall.name << ',' << fmt_double(report.overall.mae) << ','
    << fmt_double(report.overall.rmse) << ',' << fmt_pcc(report.overall.pcc)
    << ',' << report.overall.n << '\n';
}

void write_table_csv(const std::string& path,
                     const std::vector<LabeledReport>& rows,
                     const std::vector<std::string>& modality_names) {
  auto f = open_csv(path);
  f << "variant";
  for (const std::string& m : modality_names)
    f << ',' << m << "_mae," << m << "_rmse," << m << "_pcc";
  f << '\n';
  for (const LabeledReport& row : rows) {
    f << row.label;
    for (const std::string& m : modality_names) {
      const ModalityMetrics* found = nullptr;
      for (const ModalityMetrics& mm : row.report.per_modality)
        if (mm.name == m) found = &mm;
      if (found == nullptr)
        throw Error("write_table_csv: modality '" + m + "' missing from report");
      f << ',' << fmt_double(found->mae) << ',' << fmt_double(found->rmse) << ','
        << fmt_pcc(found->pcc);
    }
    f << '\n';
  }
}

void write_census_csv(const std::string& path,
                      const std::vector<CensusCell>& cells) {
  auto f = open_csv(path);
  f << "target,source,count,pct\n";
  for (const CensusCell& c : cells)
    f << c.target << ',' << c.source << ',' << c.count << ','
      << fmt_double(c.pct) << '\n';
}

}  // namespace gsabt
