#include "gsabt/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "gsabt/kernels.hpp"

namespace gsabt {

using nlohmann::json;

NormMode DataConfig::mode() const {
  if (normalization == "minmax") return NormMode::minmax;
  if (normalization == "zscore") return NormMode::zscore;
  throw ConfigError("data.normalization: unknown value '" + normalization + "'");
}

namespace {

json data_to_json(const DataConfig& d) {
  json j;
  j["manifest"] = d.manifest;
  j["split_weeks"] = d.split_weeks;
  j["normalization"] = d.normalization;
  j["modalities"] = d.modalities;
  return j;
}

DataConfig data_from_json(const json& j) {
  static const std::set<std::string> keys = {"manifest", "split_weeks",
                                             "normalization", "modalities"};
  for (auto& [k, _] : j.items())
    if (!keys.contains(k)) throw ConfigError("data config: unknown key '" + k + "'");
  DataConfig d;
  try {
    if (j.contains("manifest")) d.manifest = j["manifest"].get<std::string>();
    if (j.contains("split_weeks")) {
      const auto v = j["split_weeks"].get<std::vector<std::size_t>>();
      if (v.size() != 3)
        throw ConfigError("data.split_weeks must have exactly 3 entries");
      d.split_weeks = {v[0], v[1], v[2]};
    }
    if (j.contains("normalization"))
      d.normalization = j["normalization"].get<std::string>();
    if (j.contains("modalities"))
      d.modalities = j["modalities"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("data config: ") + e.what());
  }
  d.mode();  // validates the normalization name
  return d;
}

json synth_to_json(const SynthConfig& s) {
  json j;
  j["days"] = s.days;
  j["steps_per_day"] = s.steps_per_day;
  j["features"] = s.features;
  j["base"] = s.base;
  j["daily_amp"] = s.daily_amp;
  j["half_daily_amp"] = s.half_daily_amp;
  j["lambda_amp"] = s.lambda_amp;
  j["lambda_noise"] = s.lambda_noise;
  j["noise"] = s.noise;
  j["seed"] = s.seed;
  j["modalities"] = json::array();
  for (const SynthModality& m : s.modalities)
    j["modalities"].push_back({{"name", m.name},
                               {"grid_rows", m.grid_rows},
                               {"grid_cols", m.grid_cols},
                               {"nodes", m.nodes},
                               {"scale", m.scale},
                               {"coupling", m.coupling}});
  return j;
}

SynthConfig synth_from_json(const json& j) {
  static const std::set<std::string> keys = {
      "days",       "steps_per_day", "features",     "base",
      "daily_amp",  "half_daily_amp", "lambda_amp",  "lambda_noise",
      "noise",      "seed",           "modalities"};
  static const std::set<std::string> mod_keys = {"name", "grid_rows", "grid_cols",
                                                 "nodes", "scale", "coupling"};
  for (auto& [k, _] : j.items())
    if (!keys.contains(k))
      throw ConfigError("generate config: unknown key '" + k + "'");
  SynthConfig s;
  try {
    if (j.contains("days")) s.days = j["days"].get<std::size_t>();
    if (j.contains("steps_per_day")) s.steps_per_day = j["steps_per_day"].get<std::size_t>();
    if (j.contains("features")) s.features = j["features"].get<std::size_t>();
    if (j.contains("base")) s.base = j["base"].get<real>();
    if (j.contains("daily_amp")) s.daily_amp = j["daily_amp"].get<real>();
    if (j.contains("half_daily_amp")) s.half_daily_amp = j["half_daily_amp"].get<real>();
    if (j.contains("lambda_amp")) s.lambda_amp = j["lambda_amp"].get<real>();
    if (j.contains("lambda_noise")) s.lambda_noise = j["lambda_noise"].get<real>();
    if (j.contains("noise")) s.noise = j["noise"].get<real>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("modalities")) {
      for (const json& e : j["modalities"]) {
        for (auto& [k, _] : e.items())
          if (!mod_keys.contains(k))
            throw ConfigError("generate config: unknown modality key '" + k + "'");
        SynthModality m;
        m.name = e.at("name").get<std::string>();
        if (e.contains("grid_rows")) m.grid_rows = e["grid_rows"].get<std::size_t>();
        if (e.contains("grid_cols")) m.grid_cols = e["grid_cols"].get<std::size_t>();
        if (e.contains("nodes")) m.nodes = e["nodes"].get<std::size_t>();
        if (e.contains("scale")) m.scale = e["scale"].get<real>();
        if (e.contains("coupling")) m.coupling = e["coupling"].get<real>();
        s.modalities.push_back(std::move(m));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("generate config: ") + e.what());
  }
  return s;
}

json run_to_json(const RunConfig& c) {
  json j;
  j["model"] = json::parse(c.model.to_json_text());
  j["train"] = json::parse(c.train.to_json_text());
  j["data"] = data_to_json(c.data);
  j["generate"] = synth_to_json(c.generate);
  return j;
}

RunConfig run_from_json(const json& j) {
  static const std::set<std::string> keys = {"model", "train", "data", "generate"};
  for (auto& [k, _] : j.items())
    if (!keys.contains(k)) throw ConfigError("config: unknown section '" + k + "'");
  RunConfig c;
  if (j.contains("model")) c.model = ModelConfig::from_json_text(j["model"].dump());
  if (j.contains("train")) c.train = TrainConfig::from_json_text(j["train"].dump());
  if (j.contains("data")) c.data = data_from_json(j["data"]);
  if (j.contains("generate")) c.generate = synth_from_json(j["generate"]);
  return c;
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  // a run manifest embeds the resolved config under "config"
  if (j.is_object() && j.contains("command") && j.contains("config"))
    return run_from_json(j["config"]);
  return run_from_json(j);
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f)
    throw ConfigError("cannot read config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string RunConfig::to_json_text() const { return run_to_json(*this).dump(2); }

void RunConfig::apply_override(const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must be KEY=VALUE, got '" + spec + "'");
  const std::string key = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);
  json doc = run_to_json(*this);
  json* at = &doc;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot - pos);
    if (part.empty()) throw ConfigError("override: empty path element in '" + key + "'");
    if (dot == std::string::npos) {
      json parsed;
      try {
        parsed = json::parse(value);
      } catch (const json::exception&) {
        parsed = value;  // plain string
      }
      (*at)[part] = parsed;
      break;
    }
    if (!at->contains(part) || !(*at)[part].is_object())
      (*at)[part] = json::object();
    at = &(*at)[part];
    pos = dot + 1;
  }
  *this = run_from_json(doc);
}

void RunConfig::set_seed(std::uint64_t seed) {
  model.seed = seed;
  train.seed = seed;
  generate.seed = seed;
}

void write_run_manifest(const std::string& path, const std::string& command,
                        const RunConfig& resolved,
                        const std::vector<std::string>& input_paths,
                        const std::vector<std::string>& output_paths,
                        double wall_ms) {
  json j;
  j["command"] = command;
  j["config"] = json::parse(resolved.to_json_text());
  j["kernels"] = kern::active_name();
  j["precision"] = sizeof(real) == 8 ? "f64" : "f32";
  json inputs = json::object();
  for (const std::string& p : input_paths) inputs[p] = file_digest(p);
  j["inputs"] = inputs;
  json outputs = json::object();
  for (const std::string& p : output_paths) outputs[p] = file_digest(p);
  j["outputs"] = outputs;
  j["wall_ms"] = wall_ms;
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(2) << "\n";
}

}  // namespace gsabt
