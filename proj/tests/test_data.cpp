#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gsabt/data.hpp"

using namespace gsabt;

namespace {

ModalitySpec full_graph(const std::string& name, std::size_t n) {
  return {name, n, 1, std::vector<std::uint8_t>(n * n, 1)};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) { ma += a[i]; mb += b[i]; }
  ma /= n; mb /= n;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("extend_graphs: block structure and offsets") {
  std::vector<ModalitySpec> specs = {full_graph("a", 2),
                                     full_graph("b", 1)};
  MultimodalGraph g = extend_graphs(specs);
  CHECK(g.total_nodes == 3);
  CHECK(g.offsets == std::vector<std::size_t>{0, 2});
  // zeros at (0..1, 2) and (2, 0..1)
  CHECK(g.adjacency[0 * 3 + 2] == 0);
  CHECK(g.adjacency[1 * 3 + 2] == 0);
  CHECK(g.adjacency[2 * 3 + 0] == 0);
  CHECK(g.adjacency[2 * 3 + 1] == 0);
  CHECK(g.adjacency[2 * 3 + 2] == 1);
  CHECK(g.is_block_diagonal());
}

TEST_CASE("extend_graphs: single modality reproduces its graph") {
  std::vector<ModalitySpec> specs = {full_graph("solo", 3)};
  MultimodalGraph g = extend_graphs(specs);
  CHECK(g.total_nodes == 3);
  for (std::size_t i = 0; i < 9; ++i) CHECK(g.adjacency[i] == 1);
}

TEST_CASE("extend_graphs: off-block zero count for sizes 2,3,1") {
  std::vector<ModalitySpec> specs = {full_graph("a", 2), full_graph("b", 3),
                                     full_graph("c", 1)};
  MultimodalGraph g = extend_graphs(specs);
  CHECK(g.total_nodes == 6);
  CHECK(g.offsets == std::vector<std::size_t>{0, 2, 5});
  std::size_t off_block_zeros = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (g.modality_of(i) != g.modality_of(j)) {
        CHECK(g.adjacency[i * 6 + j] == 0);
        ++off_block_zeros;
      }
  CHECK(off_block_zeros == 22);  // 2*(2*3 + 2*1 + 3*1)
}

TEST_CASE("extend_graphs rejects non-binary adjacency") {
  ModalitySpec bad{"x", 2, 1, {1, 2, 0, 1}};
  std::vector<ModalitySpec> specs = {bad};
  CHECK_THROWS_AS(extend_graphs(specs), ConfigError);
}

TEST_CASE("modality validate forces self-loops") {
  ModalitySpec s{"x", 2, 1, {0, 1, 1, 0}};
  s.validate();
  CHECK(s.adjacency[0] == 1);
  CHECK(s.adjacency[3] == 1);
}

TEST_CASE("grid_adjacency: 1x1, 2x2 corner degrees, 16x16 edge count") {
  CHECK(grid_adjacency(1, 1) == std::vector<std::uint8_t>{1});

  auto g2 = grid_adjacency(2, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    std::size_t deg = 0;
    for (std::size_t j = 0; j < 4; ++j) deg += g2[i * 4 + j];
    CHECK(deg == 3);  // 2 neighbors + self
  }

  auto g16 = grid_adjacency(16, 16);
  std::size_t off_diag = 0;
  for (std::size_t i = 0; i < 256; ++i)
    for (std::size_t j = 0; j < 256; ++j)
      if (i != j) off_diag += g16[i * 256 + j];
  CHECK(off_diag == 960);  // 2 * (16 * 15 * 2) directed entries
}

TEST_CASE("normalizer: [0,10] maps 5 to 0.5; round-trip exact to 1e-12") {
  Series s;
  s.steps = 2; s.nodes = 1; s.features = 1;
  s.values = {0, 10};
  std::vector<ModalitySpec> specs = {full_graph("a", 1)};
  MultimodalGraph g = extend_graphs(specs);
  Normalizer nz = Normalizer::fit(s, g, 2, NormMode::minmax);
  CHECK(nz.normalize_value(5, 0) == doctest::Approx(0.5).epsilon(1e-15));
  for (real x : {real(0), real(3.7), real(10), real(8.25)}) {
    const real rt = nz.denormalize_value(nz.normalize_value(x, 0), 0);
    CHECK(std::abs(rt - x) <= 1e-12 * std::max<real>(1, std::abs(x)));
  }
}

TEST_CASE("normalizer: constant series flags degenerate and returns constant") {
  Series s;
  s.steps = 3; s.nodes = 1; s.features = 1;
  s.values = {4, 4, 4};
  std::vector<ModalitySpec> specs = {full_graph("a", 1)};
  MultimodalGraph g = extend_graphs(specs);
  Normalizer nz = Normalizer::fit(s, g, 3, NormMode::minmax);
  CHECK(nz.stats()[0].degenerate);
  CHECK(nz.normalize_value(4, 0) == 0);
  CHECK(nz.denormalize_value(0, 0) == 4);
}

TEST_CASE("normalizer: disparate modality scales land in [0,1] together") {
  SynthConfig cfg;
  cfg.days = 7;
  cfg.seed = 3;
  cfg.modalities = {{"big", 0, 0, 4, 400.0, 1.0}, {"small", 0, 0, 3, 12.0, 1.0}};
  auto series = synth_generate(cfg);
  std::vector<ModalitySpec> specs = {full_graph("big", 4), full_graph("small", 3)};
  MultimodalGraph g = extend_graphs(specs);
  Series joint = concat_series(series);
  Normalizer nz = Normalizer::fit(joint, g, joint.steps, NormMode::minmax);
  Series norm = joint;
  nz.normalize(norm, g);
  real lo0 = 1e30, hi0 = -1e30, lo1 = 1e30, hi1 = -1e30;
  for (std::size_t t = 0; t < norm.steps; ++t) {
    for (std::size_t n = 0; n < 4; ++n) {
      lo0 = std::min(lo0, norm.at(t, n, 0));
      hi0 = std::max(hi0, norm.at(t, n, 0));
    }
    for (std::size_t n = 4; n < 7; ++n) {
      lo1 = std::min(lo1, norm.at(t, n, 0));
      hi1 = std::max(hi1, norm.at(t, n, 0));
    }
  }
  CHECK(lo0 >= 0); CHECK(hi0 <= 1);
  CHECK(lo1 >= 0); CHECK(hi1 <= 1);
  CHECK(hi0 - lo0 > 0.5);  // both modalities actually span the range
  CHECK(hi1 - lo1 > 0.5);
}

TEST_CASE("make_windows: boundary counts") {
  SplitSpec one{24, 0, 0};
  CHECK(make_windows(24, 12, 12, one).of(Split::train).size() == 1);

  SplitSpec seven{30, 0, 0};
  CHECK(make_windows(30, 12, 12, seven).of(Split::train).size() == 7);

  // 9/2/2 weeks at 48 steps/day
  SplitSpec paper{9 * 7 * 48, 2 * 7 * 48, 2 * 7 * 48};
  auto wd = make_windows(paper.total(), 12, 12, paper);
  CHECK(wd.of(Split::train).size() == 3024 - 24 + 1);
  CHECK(wd.of(Split::val).size() == 672 - 24 + 1);
  CHECK(wd.of(Split::test).size() == 672 - 24 + 1);

  CHECK_THROWS_AS(make_windows(23, 12, 12, SplitSpec{23, 0, 0}), ConfigError);
}

TEST_CASE("make_windows: train targets never reach past the train span") {
  SplitSpec sp{40, 30, 0};
  auto wd = make_windows(70, 6, 4, sp);
  for (std::size_t t : wd.of(Split::train)) CHECK(t + 4 <= 39);
  for (std::size_t t : wd.of(Split::val)) {
    CHECK(t >= 40 + 5);
    CHECK(t + 4 <= 69);
  }
}

TEST_CASE("synth_generate: deterministic under the seed") {
  SynthConfig cfg;
  cfg.days = 2;
  cfg.seed = 77;
  cfg.modalities = {{"a", 0, 0, 3, 10.0, 0.5}, {"b", 2, 2, 0, 5.0, 0.5}};
  auto s1 = synth_generate(cfg);
  auto s2 = synth_generate(cfg);
  REQUIRE(s1.size() == 2);
  CHECK(s1[0].values == s2[0].values);
  CHECK(s1[1].values == s2[1].values);
  CHECK(s1[1].nodes == 4);  // 2x2 grid
}

TEST_CASE("synth_generate: coupled modalities correlate above 0.5") {
  SynthConfig cfg;
  cfg.days = 7;
  cfg.seed = 5;
  cfg.modalities = {{"a", 0, 0, 6, 100.0, 1.0}, {"b", 0, 0, 4, 8.0, 1.0}};
  auto series = synth_generate(cfg);
  std::vector<double> mean_a(series[0].steps), mean_b(series[1].steps);
  for (std::size_t t = 0; t < series[0].steps; ++t) {
    double sa = 0, sb = 0;
    for (std::size_t n = 0; n < 6; ++n) sa += series[0].at(t, n, 0);
    for (std::size_t n = 0; n < 4; ++n) sb += series[1].at(t, n, 0);
    mean_a[t] = sa / 6;
    mean_b[t] = sb / 4;
  }
  CHECK(pearson(mean_a, mean_b) >= 0.5);
}

TEST_CASE("synth_generate: flat configuration gives scale*base everywhere") {
  SynthConfig cfg;
  cfg.days = 1;
  cfg.daily_amp = 0;
  cfg.half_daily_amp = 0;
  cfg.lambda_amp = 0;
  cfg.lambda_noise = 0;
  cfg.noise = 0;
  cfg.base = 2.0;
  cfg.modalities = {{"a", 0, 0, 2, 3.0, 1.0}};
  auto s = synth_generate(cfg);
  for (real v : s[0].values) CHECK(v == 6.0);
}

TEST_CASE("synth_generate: zero-noise output is exactly periodic at one day") {
  SynthConfig cfg;
  cfg.days = 3;
  cfg.noise = 0;
  cfg.lambda_noise = 0;
  cfg.seed = 9;
  cfg.modalities = {{"a", 0, 0, 2, 7.0, 0.8}};
  auto s = synth_generate(cfg);
  const std::size_t day = cfg.steps_per_day;
  for (std::size_t t = 0; t + day < s[0].steps; ++t)
    for (std::size_t n = 0; n < 2; ++n)
      CHECK(s[0].at(t, n, 0) == s[0].at(t + day, n, 0));
}

TEST_CASE("series file: save/load round-trip is bit-exact, checksum stable") {
  SynthConfig cfg;
  cfg.days = 1;
  cfg.seed = 123;
  cfg.modalities = {{"a", 0, 0, 3, 10.0, 0.5}};
  auto s = synth_generate(cfg);
  const std::string path = "test_series.gstd";
  save_series(s[0], path);
  Series r = load_series(path);
  CHECK(r.steps == s[0].steps);
  CHECK(r.nodes == 3);
  CHECK(r.values == s[0].values);  // exact: generator emits f32-representable values
  const std::string d1 = file_digest(path);
  save_series(r, "test_series2.gstd");
  CHECK(file_digest("test_series2.gstd") == d1);
  std::remove(path.c_str());
  std::remove("test_series2.gstd");
}

TEST_CASE("series file: header/payload mismatch raises a format error") {
  // hand-build a file whose dims promise more data than the payload holds
  const std::string path = "test_bad.gstd";
  {
    std::ofstream f(path, std::ios::binary);
    f.write("GSTD", 4);
    const unsigned char v1[4] = {1, 0, 0, 0};
    const unsigned char rank[4] = {3, 0, 0, 0};
    f.write(reinterpret_cast<const char*>(v1), 4);
    f.write(reinterpret_cast<const char*>(rank), 4);
    const unsigned char dim[8] = {2, 0, 0, 0, 0, 0, 0, 0};
    f.write(reinterpret_cast<const char*>(dim), 8);
    f.write(reinterpret_cast<const char*>(dim), 8);
    f.write(reinterpret_cast<const char*>(dim), 8);
    const float one = 1.0f;  // 8 promised, 1 provided
    f.write(reinterpret_cast<const char*>(&one), 4);
  }
  CHECK_THROWS_AS(load_series(path), FormatError);
  std::remove(path.c_str());

  const std::string bad_magic = "test_badmagic.gstd";
  {
    std::ofstream f(bad_magic, std::ios::binary);
    f.write("NOPE", 4);
  }
  CHECK_THROWS_WITH_AS(load_series(bad_magic), doctest::Contains("magic"),
                       FormatError);
  std::remove(bad_magic.c_str());
}

TEST_CASE("graph file round-trip") {
  auto adj = grid_adjacency(3, 2);
  save_graph(adj, 6, "test_graph.gadj");
  std::size_t n = 0;
  auto r = load_graph("test_graph.gadj", &n);
  CHECK(n == 6);
  CHECK(r == adj);
  std::remove("test_graph.gadj");
}

TEST_CASE("data manifest: round-trip and unknown-key rejection") {
  DataManifest m;
  m.steps_per_day = 48;
  m.features = 1;
  m.modalities = {{"taxi", 4, {"flow"}, "taxi.gstd", "taxi.gadj"}};
  save_data_manifest(m, "test_manifest.json");
  DataManifest r = load_data_manifest("test_manifest.json");
  CHECK(r.modalities.size() == 1);
  CHECK(r.modalities[0].name == "taxi");
  CHECK(r.modalities[0].node_count == 4);
  std::remove("test_manifest.json");

  {
    std::ofstream f("test_manifest_bad.json");
    f << R"({"steps_per_day":48,"features":1,"modalitees":[]})";
  }
  CHECK_THROWS_AS(load_data_manifest("test_manifest_bad.json"), FormatError);
  std::remove("test_manifest_bad.json");
}

TEST_CASE("assemble_dataset: end-to-end with generated files") {
  SynthConfig cfg;
  cfg.days = 14;  // 2 train + 1 val + 1 test weeks worth? use 14 days = 2 weeks
  cfg.days = 28;
  cfg.seed = 21;
  cfg.modalities = {{"a", 0, 0, 3, 10.0, 1.0}, {"b", 2, 1, 0, 4.0, 1.0}};
  auto series = synth_generate(cfg);
  save_series(series[0], "ds_a.gstd");
  save_series(series[1], "ds_b.gstd");
  save_graph(std::vector<std::uint8_t>(9, 1), 3, "ds_a.gadj");
  save_graph(grid_adjacency(2, 1), 2, "ds_b.gadj");
  DataManifest m;
  m.steps_per_day = 48;
  m.features = 1;
  m.modalities = {{"a", 3, {}, "ds_a.gstd", "ds_a.gadj"},
                  {"b", 2, {}, "ds_b.gstd", "ds_b.gadj"}};
  save_data_manifest(m, "ds_manifest.json");

  Dataset ds = assemble_dataset("ds_manifest.json", 12, 12, {2, 1, 1},
                                NormMode::minmax);
  CHECK(ds.graph.total_nodes == 5);
  CHECK(ds.graph.is_block_diagonal());
  CHECK(ds.windows.of(Split::train).size() == 2 * 7 * 48 - 24 + 1);
  // normalized train span sits in [0,1]
  for (std::size_t t = 0; t < ds.splits.train_steps; ++t)
    for (std::size_t n = 0; n < 5; ++n) {
      CHECK(ds.joint.at(t, n, 0) >= 0);
      CHECK(ds.joint.at(t, n, 0) <= 1);
    }

  // single-modality restriction
  Dataset solo = assemble_dataset("ds_manifest.json", 12, 12, {2, 1, 1},
                                  NormMode::minmax, {"b"});
  CHECK(solo.graph.total_nodes == 2);

  for (const char* p : {"ds_a.gstd", "ds_b.gstd", "ds_a.gadj", "ds_b.gadj",
                        "ds_manifest.json"})
    std::remove(p);
}
