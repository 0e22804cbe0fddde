#pragma once

#include <array>
#include <string>
#include <vector>

#include "gsabt/data.hpp"
#include "gsabt/model.hpp"
#include "gsabt/train.hpp"

// CLI run configuration: one JSON file with model / train / data / generate
// sections, dotted-path flag overrides, and a resolved echo that run
// manifests embed so any artifact can be reproduced from its manifest alone.

namespace gsabt {

struct DataConfig {
  std::string manifest;  // path to the modality manifest JSON
  std::array<std::size_t, 3> split_weeks = {9, 2, 2};
  std::string normalization = "minmax";  // or "zscore"
  std::vector<std::string> modalities;   // subset filter; empty = all

  NormMode mode() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  SynthConfig generate;

  // Parses the file (strict keys). A run-manifest file is accepted too: its
  // embedded resolved config is used.
  static RunConfig load(const std::string& path);
  static RunConfig from_json_text(const std::string& text);
  std::string to_json_text() const;

  // key=value with a dotted path, e.g. model.top_u=8 or
  // data.split_weeks=[9,2,2]; values parse as JSON with a string fallback.
  void apply_override(const std::string& spec);

  // Sets every per-section seed at once (the --seed flag).
  void set_seed(std::uint64_t seed);
};

// Reproduction record written next to every command's artifacts.
void write_run_manifest(const std::string& path, const std::string& command,
                        const RunConfig& resolved,
                        const std::vector<std::string>& input_paths,
                        const std::vector<std::string>& output_paths,
                        double wall_ms);

}  // namespace gsabt
