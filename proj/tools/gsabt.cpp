// gsabt command line: synthetic data generation, training, evaluation,
// ablations, sweeps, gradient checks and the attention census. Every command
// reads one JSON config (sections: model, train, data, generate), honors
// --override KEY=VALUE flags, and writes a run manifest sufficient to
// reproduce its artifacts bit for bit on the same platform.
//
// Exit codes: 0 ok, 1 runtime, 2 usage/config, 3 numeric failure,
// 4 gradcheck failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "gsabt/config.hpp"
#include "gsabt/gradsuite.hpp"
#include "gsabt/kernels.hpp"
#include "gsabt/train.hpp"

namespace fs = std::filesystem;
using namespace gsabt;

namespace {

constexpr const char* kConfigKeysFooter = R"(Config keys (JSON, all optional unless noted):
  model.p, model.q              input/forecast window lengths (default 12/12)
  model.features                features per node (default 2)
  model.modalities              [{name, nodes}]; filled from the dataset when omitted
  model.d_h, model.d_f          attention width / per-node state width (d_f=0 follows d_h)
  model.st_layers               stacked spatial-temporal layers (default 2)
  model.top_u                   sparse attention row survivors (default 16)
  model.dropout                 dropout rate (default 0.1)
  model.ablation.{no_sa,no_agcn,no_astar,no_fstcn,no_bstcn}
  model.graph_attention             masked_softmax | literal_product
  model.stage_order             spatial_first | temporal_first
  model.seed                    parameter init seed
  train.batch_size              default 64
  train.epochs                  default 100
  train.learning_rate           default 0.0005
  train.beta1/beta2/epsilon     Adam moments (0.9 / 0.999 / 1e-8)
  train.clip_norm               global gradient clip (5.0; 0 disables)
  train.patience                early stop on stale validation (0 = off)
  train.seed                    shuffle/dropout seed
  train.optimizer               adam | sgd
  data.manifest                 modality manifest path (required for data commands)
  data.split_weeks              [train, val, test] weeks (default [9,2,2])
  data.normalization            minmax | zscore
  data.modalities               subset of manifest modalities to load
  generate.days/steps_per_day/features, generate.base, generate.daily_amp,
  generate.half_daily_amp, generate.lambda_amp, generate.lambda_noise,
  generate.noise, generate.seed,
  generate.modalities           [{name, grid_rows, grid_cols | nodes, scale, coupling}]
Unknown keys are rejected. --override model.top_u=8 style flags win over the file.)";

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path,
                              "JSON config file (or a run manifest)");
  if (config_required) opt->required();
  cmd->add_option("--out", args.out_dir, "output directory (default: out)");
  cmd->add_option("--override", args.overrides,
                  "KEY=VALUE config override, repeatable");
  cmd->add_option("--seed", args.seed, "override every per-section seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->footer(kConfigKeysFooter);
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg =
      args.config_path.empty() ? RunConfig{} : RunConfig::load(args.config_path);
  for (const std::string& o : args.overrides) cfg.apply_override(o);
  if (args.seed_set) cfg.set_seed(args.seed);
  return cfg;
}

std::string out_path(const CommonArgs& args, const std::string& name) {
  fs::create_directories(args.out_dir);
  return (fs::path(args.out_dir) / name).string();
}

double wall_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

Dataset load_dataset_for(const RunConfig& cfg) {
  if (cfg.data.manifest.empty())
    throw ConfigError("data.manifest is required for this command");
  try {
    return assemble_dataset(cfg.data.manifest, cfg.model.p, cfg.model.q,
                            cfg.data.split_weeks, cfg.data.mode(),
                            cfg.data.modalities);
  } catch (const IoError& e) {
    throw ConfigError(std::string(e.what()) +
                      " (check data.manifest and the paths inside it)");
  }
}

// When the model section names no modalities, adopt them (and the feature
// count) from the dataset.
void adopt_modalities(ModelConfig& m, const Dataset& ds) {
  if (!m.modality_names.empty()) return;
  for (const ModalitySpec& s : ds.specs) {
    m.modality_names.push_back(s.name);
    m.node_counts.push_back(s.node_count);
  }
  m.features = ds.joint.features;
}

int cmd_generate(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = resolve_config(args);
  if (cfg.generate.modalities.empty())
    throw ConfigError("generate.modalities: no modalities configured");
  auto series = synth_generate(cfg.generate);
  DataManifest manifest;
  manifest.steps_per_day = cfg.generate.steps_per_day;
  manifest.features = cfg.generate.features;
  std::vector<std::string> outputs;
  for (std::size_t m = 0; m < cfg.generate.modalities.size(); ++m) {
    const SynthModality& sm = cfg.generate.modalities[m];
    const std::string series_file = sm.name + ".gstd";
    const std::string graph_file = sm.name + ".gadj";
    save_series(series[m], out_path(args, series_file));
    const std::size_t nodes = series[m].nodes;
    const auto adj = sm.grid_rows > 0
                         ? grid_adjacency(sm.grid_rows, sm.grid_cols)
                         : ring_adjacency(nodes);
    save_graph(adj, nodes, out_path(args, graph_file));
    ModalityFiles mf;
    mf.name = sm.name;
    mf.node_count = nodes;
    for (std::size_t f = 0; f < cfg.generate.features; ++f)
      mf.feature_names.push_back("f" + std::to_string(f));
    mf.series_path = series_file;
    mf.graph_path = graph_file;
    manifest.modalities.push_back(std::move(mf));
    outputs.push_back(out_path(args, series_file));
    outputs.push_back(out_path(args, graph_file));
    std::printf("generated %-12s %zu nodes, %zu steps -> %s\n", sm.name.c_str(),
                nodes, series[m].steps, series_file.c_str());
  }
  save_data_manifest(manifest, out_path(args, "manifest.json"));
  outputs.push_back(out_path(args, "manifest.json"));
  write_run_manifest(out_path(args, "run_manifest.json"), "generate", cfg, {},
                     outputs, wall_since(t0));
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = resolve_config(args);
  Dataset ds = load_dataset_for(cfg);
  adopt_modalities(cfg.model, ds);
  TrainResult result = train_model(cfg.model, ds, cfg.train);
  save_checkpoint(result.params, cfg.model, out_path(args, "checkpoint.gsab"));
  write_history_csv(out_path(args, "history.csv"), result.history);
  {
    std::ofstream census(out_path(args, "parameter_census.txt"));
    census << result.params.census_text();
  }
  write_run_manifest(out_path(args, "run_manifest.json"), "train", cfg,
                     {cfg.data.manifest},
                     {out_path(args, "checkpoint.gsab"),
                      out_path(args, "history.csv")},
                     wall_since(t0));
  std::printf("trained %zu epochs; best val MAE %.6f at epoch %zu\n",
              result.history.size(), result.best_val_mae, result.best_epoch);
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint,
             const std::string& split_name) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = resolve_config(args);
  auto [params, model_cfg] = load_checkpoint(checkpoint);
  cfg.model = model_cfg;  // checkpoint is self-describing
  Dataset ds = load_dataset_for(cfg);
  Split split = Split::test;
  if (split_name == "train") split = Split::train;
  else if (split_name == "val") split = Split::val;
  else if (split_name != "test")
    throw ConfigError("--split must be train, val or test");
  MetricsReport report = evaluate_model(params, model_cfg, ds, split);
  write_report_csv(out_path(args, "report.csv"), report);
  write_run_manifest(out_path(args, "run_manifest.json"), "eval", cfg,
                     {cfg.data.manifest, checkpoint},
                     {out_path(args, "report.csv")}, wall_since(t0));
  for (const ModalityMetrics& m : report.per_modality)
    std::printf("%-12s MAE %.6f  RMSE %.6f  PCC %s\n", m.name.c_str(), m.mae,
                m.rmse, m.pcc ? std::to_string(*m.pcc).c_str() : "NA");
  std::printf("%-12s MAE %.6f  RMSE %.6f\n", "overall", report.overall.mae,
              report.overall.rmse);
  return 0;
}

int cmd_ablate(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = resolve_config(args);
  Dataset ds = load_dataset_for(cfg);
  adopt_modalities(cfg.model, ds);
  auto rows = run_ablation_suite(cfg.model, ds, cfg.train);
  write_table_csv(out_path(args, "ablation.csv"), rows, cfg.model.modality_names);
  write_run_manifest(out_path(args, "run_manifest.json"), "ablate", cfg,
                     {cfg.data.manifest}, {out_path(args, "ablation.csv")},
                     wall_since(t0));
  for (const LabeledReport& row : rows)
    std::printf("%-10s overall MAE %.6f\n", row.label.c_str(),
                row.report.overall.mae);
  std::printf("reference full-scale runs report the full model leading every "
              "ablation on all metrics\n");
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& param) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = resolve_config(args);
  Dataset ds = load_dataset_for(cfg);
  adopt_modalities(cfg.model, ds);
  std::vector<LabeledReport> rows;
  std::string out_name;
  if (param == "st_layers") {
    rows = run_layer_sweep(cfg.model, ds, cfg.train, 5);
    out_name = "sweep_st_layers.csv";
  } else if (param == "top_u") {
    rows = run_topu_sweep(cfg.model, ds, cfg.train, {8, 16, 32, 64, 128, 0});
    out_name = "sweep_top_u.csv";
  } else {
    throw ConfigError("--param must be st_layers or top_u");
  }
  write_table_csv(out_path(args, out_name), rows, cfg.model.modality_names);
  write_run_manifest(out_path(args, "run_manifest.json"), "sweep " + param, cfg,
                     {cfg.data.manifest}, {out_path(args, out_name)},
                     wall_since(t0));
  for (const LabeledReport& row : rows)
    std::printf("%-8s overall MAE %.6f\n", row.label.c_str(),
                row.report.overall.mae);
  std::printf("reference full-scale optimum: %s\n",
              param == "st_layers" ? "2 layers lead most metrics"
                                   : "Top-U = 16 leads most metrics");
  return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = resolve_config(args);
  const std::uint64_t seed = args.seed_set ? args.seed : cfg.model.seed;
  GradSuiteResult result = run_gradcheck_suite(seed);
  std::printf("%s\n", result.report.c_str());
  {
    std::ofstream f(out_path(args, "gradcheck.txt"));
    f << result.report << "\n";
  }
  write_run_manifest(out_path(args, "run_manifest.json"), "gradcheck", cfg, {},
                     {out_path(args, "gradcheck.txt")}, wall_since(t0));
  return result.pass ? 0 : 4;
}

int cmd_census(const CommonArgs& args, const std::string& checkpoint,
               const std::string& split_name) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = resolve_config(args);
  auto [params, model_cfg] = load_checkpoint(checkpoint);
  cfg.model = model_cfg;
  Dataset ds = load_dataset_for(cfg);
  Split split = Split::test;
  if (split_name == "train") split = Split::train;
  else if (split_name == "val") split = Split::val;
  else if (split_name != "test")
    throw ConfigError("--split must be train, val or test");
  auto cells = attention_census(params, model_cfg, ds, split);
  write_census_csv(out_path(args, "census.csv"), cells);
  write_run_manifest(out_path(args, "run_manifest.json"), "census", cfg,
                     {cfg.data.manifest, checkpoint},
                     {out_path(args, "census.csv")}, wall_since(t0));
  for (const CensusCell& c : cells)
    std::printf("%s <- %s: %llu survivors (%.2f%%)\n", c.target.c_str(),
                c.source.c_str(), static_cast<unsigned long long>(c.count),
                c.pct);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "gsabt: multimodal traffic forecasting with graph sparse attention and "
      "bidirectional temporal convolutions"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, ablate_args, sweep_args,
      grad_args, census_args;
  std::string eval_checkpoint, eval_split = "test";
  std::string census_checkpoint, census_split = "test";
  std::string sweep_param;

  add_common(app.add_subcommand("generate", "write synthetic series + graphs"),
             gen_args);
  add_common(app.add_subcommand("train", "train a model on a dataset"),
             train_args);
  auto* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")
      ->required();
  eval_cmd->add_option("--split", eval_split, "train|val|test (default test)");
  add_common(app.add_subcommand("ablate",
                                "train/evaluate all six module ablations"),
             ablate_args);
  auto* sweep_cmd = app.add_subcommand("sweep", "layer count or Top-U sweep");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--param", sweep_param, "st_layers or top_u")->required();
  add_common(app.add_subcommand(
                 "gradcheck", "finite-difference verification of every block"),
             grad_args, /*config_required=*/false);
  auto* census_cmd = app.add_subcommand(
      "census", "Top-U survivor distribution across modality blocks");
  add_common(census_cmd, census_args);
  census_cmd->add_option("--checkpoint", census_checkpoint, "checkpoint file")
      ->required();
  census_cmd->add_option("--split", census_split,
                         "train|val|test (default test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand("generate")) return cmd_generate(gen_args);
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("eval"))
      return cmd_eval(eval_args, eval_checkpoint, eval_split);
    if (app.got_subcommand("ablate")) return cmd_ablate(ablate_args);
    if (app.got_subcommand("sweep")) return cmd_sweep(sweep_args, sweep_param);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(grad_args);
    if (app.got_subcommand("census"))
      return cmd_census(census_args, census_checkpoint, census_split);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
