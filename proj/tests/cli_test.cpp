#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "objattr/image_io.hpp"
#include "test_util.hpp"

namespace objattr::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string manifest_line(const std::string& id, const std::string& image, const BBox& b,
                          const std::string& category, const std::string& kind = "correct") {
  return json{{"id", id}, {"image", image}, {"box", {b.x1, b.y1, b.x2, b.y2}},
              {"category", category}, {"kind", kind}}
      .dump();
}

TEST(Manifest, ParsesEntries) {
  const std::string text =
      manifest_line("a", "img/a.png", {1, 2, 10, 12}, "dog") + "\n\n" +
      R"({"image": "/abs/b.png", "box": [0, 0, 5, 5], "category": "cat", "kind": "undetected"})" +
      "\n";
  const auto e = parse_manifest(text, "/data");
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].id, "a");
  EXPECT_EQ(e[0].image_path, fs::path("/data/img/a.png"));
  EXPECT_EQ(e[0].target_box.y2, 12);
  EXPECT_EQ(e[0].kind, SampleKind::correct);
  EXPECT_EQ(e[1].id, "sample-3");
  EXPECT_EQ(e[1].image_path, fs::path("/abs/b.png"));
  EXPECT_EQ(e[1].kind, SampleKind::undetected);
}

TEST(Manifest, RejectsMalformedLines) {
  const char* bad[] = {
      "{not json}",
      R"({"box": [0,0,1,1], "category": "dog"})",
      R"({"image": "a.png", "box": [0,0,1], "category": "dog"})",
      R"({"image": "a.png", "box": [3,0,1,1], "category": "dog"})",
      R"({"image": "a.png", "box": [0,0,1,1], "category": ""})",
      R"({"image": "a.png", "box": [0,0,1,1], "category": "dog", "kind": "other"})",
      R"({"id": "x/y", "image": "a.png", "box": [0,0,1,1], "category": "dog"})",
  };
  for (const char* line : bad) {
    EXPECT_THROW(parse_manifest(line, "."), InvalidInput) << line;
  }
  const std::string dup = manifest_line("a", "x.png", {0, 0, 1, 1}, "dog") + "\n" +
                          manifest_line("a", "y.png", {0, 0, 1, 1}, "dog");
  try {
    parse_manifest(dup, ".");
    FAIL() << "duplicate id accepted";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("manifest line 2"), std::string::npos);
  }
}

TEST(RunConfigTest, Validation) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  c.regions = 1;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.workers = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.threshold = 1.5;
  EXPECT_THROW(c.validate(), InvalidInput);
}

/// Writes a synthetic sample's image and world to `dir`.
struct SampleFiles {
  fs::path image;
  fs::path world;
  ManifestEntry entry;
};

SampleFiles write_sample(const fs::path& dir, const SyntheticSample& s, const std::string& id) {
  SampleFiles f;
  f.image = dir / (id + ".png");
  f.world = dir / (id + "-world.json");
  write_png(f.image, s.image);
  write_file_atomic(f.world, s.world.to_json().dump());
  f.entry = {id, f.image, s.target.box, s.target.category, SampleKind::correct};
  return f;
}

SyntheticSample first_sample(std::uint64_t seed) {
  SuiteSpec spec;
  spec.samples = 1;
  spec.seed = seed;
  return make_blob_suite(spec).front();
}

RunConfig grid_config(const fs::path& dir, const fs::path& world, const std::string& grid = "4x4") {
  RunConfig c;
  c.detector = "blob:" + world.string();
  c.partition = "grid:" + grid;
  c.out_dir = dir / "out";
  return c;
}

TEST(Attribute, SingleSampleWritesArtifactsAndCountsEvaluations) {
  const auto dir = testing::scratch_dir("cli-single");
  const auto f = write_sample(dir, first_sample(3), "s0");
  const RunConfig config = grid_config(dir, f.world);
  const CommandResult r = cmd_attribute(config, {f.entry});
  EXPECT_EQ(r.exit_code, kExitOk);
  ASSERT_EQ(r.samples.size(), 1u);
  const SampleOutcome& s = r.samples[0];
  ASSERT_TRUE(s.ok) << s.error;
  EXPECT_EQ(s.f_evaluations, 136);
  EXPECT_TRUE(fs::exists(s.artifacts.partition));
  EXPECT_TRUE(fs::exists(s.artifacts.attribution));
  EXPECT_TRUE(fs::exists(s.artifacts.saliency_png));
  EXPECT_TRUE(fs::exists(s.artifacts.saliency_raw));
  EXPECT_TRUE(fs::exists(s.artifacts.curves));
  EXPECT_EQ(s.artifacts.partition.parent_path(), config.out_dir / "s0");

  const json summary = json::parse(read_text_file(r.summary));
  EXPECT_EQ(summary.at("failed"), 0);
  EXPECT_EQ(summary.at("samples")[0].at("artifacts").at("attribution"), "s0/attribution.json");
  EXPECT_EQ(summary.at("samples")[0].at("f_evaluations"), 136);

  const json record = json::parse(read_text_file(s.artifacts.attribution));
  EXPECT_EQ(record.at("order").size(), 16u);
  EXPECT_EQ(record.at("sample"), "s0");
}

TEST(Attribute, EmptyManifestWarnsAndWritesNothing) {
  const auto dir = testing::scratch_dir("cli-empty");
  RunConfig config;
  config.detector = "blob:/nonexistent.json";
  config.out_dir = dir / "out";
  const CommandResult r = cmd_attribute(config, {});
  EXPECT_EQ(r.exit_code, kExitOk);
  EXPECT_TRUE(r.samples.empty());
  EXPECT_EQ(r.warnings.size(), 1u);
  EXPECT_FALSE(fs::exists(config.out_dir));
}

TEST(Attribute, UnreadableImageFailsOnlyThatSample) {
  const auto dir = testing::scratch_dir("cli-isolation");
  const auto f = write_sample(dir, first_sample(3), "good");
  ManifestEntry bad = f.entry;
  bad.id = "bad";
  bad.image_path = dir / "missing.png";
  ManifestEntry good2 = f.entry;
  good2.id = "good2";
  RunConfig config = grid_config(dir, f.world);
  config.workers = 3;
  const CommandResult r = cmd_attribute(config, {f.entry, bad, good2});
  EXPECT_EQ(r.exit_code, kExitSampleFailures);
  ASSERT_EQ(r.samples.size(), 3u);
  EXPECT_TRUE(r.samples[0].ok);
  EXPECT_FALSE(r.samples[1].ok);
  EXPECT_NE(r.samples[1].error.find("missing.png"), std::string::npos);
  EXPECT_TRUE(r.samples[2].ok);
  EXPECT_FALSE(fs::exists(config.out_dir / "bad"));
  const json summary = json::parse(read_text_file(r.summary));
  EXPECT_EQ(summary.at("failed"), 1);
  EXPECT_EQ(summary.at("samples")[1].at("id"), "bad");
}

TEST(Attribute, TargetOutsideImageFailsSample) {
  const auto dir = testing::scratch_dir("cli-outside");
  auto f = write_sample(dir, first_sample(3), "s");
  f.entry.target_box = {40, 40, 60, 60};
  const CommandResult r = cmd_attribute(grid_config(dir, f.world), {f.entry});
  EXPECT_EQ(r.exit_code, kExitSampleFailures);
}

TEST(Attribute, ConfigErrorsThrow) {
  const auto dir = testing::scratch_dir("cli-config");
  const auto f = write_sample(dir, first_sample(3), "s");
  RunConfig c = grid_config(dir, f.world);
  c.detector = "magic:thing";
  EXPECT_THROW(cmd_attribute(c, {f.entry}), InvalidInput);
  c = grid_config(dir, f.world);
  c.partition = "grid:4by4";
  EXPECT_EQ(cmd_attribute(c, {f.entry}).exit_code, kExitSampleFailures);
}

TEST(Evaluate, OneSampleMatchesModuleValuesExactly) {
  const auto dir = testing::scratch_dir("cli-eval-exact");
  const SyntheticSample s = first_sample(11);
  const auto f = write_sample(dir, s, "s0");
  const RunConfig config = grid_config(dir, f.world);
  ASSERT_EQ(cmd_attribute(config, {f.entry}).exit_code, kExitOk);
  const EvaluationResult ev = cmd_evaluate(config, {f.entry});
  ASSERT_EQ(ev.exit_code, kExitOk);
  ASSERT_TRUE(ev.rows[0].present) << ev.rows[0].error;

  const BlobDetector det(s.world);
  const auto g = greedy_search(det, s.image, s.partition, s.target);
  const MetricReport direct = evaluate_metrics(det, s.image, s.partition, g.order, g.saliency, s.target);
  const MetricReport& got = ev.rows[0].report;
  EXPECT_EQ(got.insertion_clue, direct.insertion_clue);
  EXPECT_EQ(got.deletion_clue, direct.deletion_clue);
  EXPECT_EQ(got.insertion_iou, direct.insertion_iou);
  EXPECT_EQ(got.avg_highest_score, direct.avg_highest_score);
  EXPECT_EQ(got.point_game, direct.point_game);
  EXPECT_EQ(got.energy_pg, direct.energy_pg);
  EXPECT_EQ(got.esr->minimal_t, direct.esr->minimal_t);

  // Insertion curve against the pixel-walking blob oracle.
  const json curves = json::parse(read_text_file(config.out_dir / "s0" / "curves.json"));
  const auto& region = s.world.objects[0].region;
  RegionSet shown(16);
  for (int t = 0; t <= 16; ++t) {
    if (t > 0) shown.insert(g.order[t - 1]);
    const auto o = testing::blob_oracle(reveal(s.image, s.partition, shown), int(region.x1),
                                        int(region.y1), int(region.x2), int(region.y2));
    const double expected =
        o.any ? testing::cell_iou(o.visible_box, region) *
                    std::pow(o.visible_fraction, s.world.objects[0].exponent)
              : 0.0;
    EXPECT_NEAR(curves.at("insertion").at("clue")[t].get<double>(), expected, 1e-12) << t;
  }
}

TEST(Evaluate, AggregatesGroupByKindAndSkipAbsentRows) {
  const auto dir = testing::scratch_dir("cli-eval-agg");
  const auto f = write_sample(dir, first_sample(5), "a");
  const auto other = write_sample(dir, first_sample(6), "m");
  RunConfig config = grid_config(dir, f.world);

  ManifestEntry b = f.entry;
  b.id = "b";
  ManifestEntry gone = f.entry;
  gone.id = "gone";
  ASSERT_EQ(cmd_attribute(config, {f.entry, b, gone}).exit_code, kExitOk);
  fs::remove(config.out_dir / "gone" / "attribution.json");

  const EvaluationResult ev = cmd_evaluate(config, {f.entry, b, gone});
  EXPECT_EQ(ev.exit_code, kExitSampleFailures);
  EXPECT_FALSE(ev.rows[2].present);
  EXPECT_EQ(ev.aggregates.at("absent"), 1);
  EXPECT_EQ(ev.aggregates.at("all").at("count"), 2);
  EXPECT_EQ(ev.aggregates.at("all").at("means").at("insertion").get<double>(),
            ev.rows[0].report.insertion_clue);

  // Mixed kinds: the second world has its own detector, so evaluate one kind per call.
  RunConfig other_cfg = grid_config(dir, other.world);
  other_cfg.out_dir = dir / "out2";
  ManifestEntry m1 = other.entry, m2 = other.entry;
  m1.kind = SampleKind::correct;
  m2.id = "m2";
  m2.kind = SampleKind::misclassified;
  m2.category = "cat";
  ASSERT_EQ(cmd_attribute(other_cfg, {m1, m2}).exit_code, kExitOk);
  const EvaluationResult mixed = cmd_evaluate(other_cfg, {m1, m2});
  const auto& kinds = mixed.aggregates.at("by_kind");
  ASSERT_TRUE(kinds.contains("correct"));
  ASSERT_TRUE(kinds.contains("misclassified"));
  EXPECT_EQ(kinds.at("correct").at("count"), 1);
  EXPECT_EQ(kinds.at("misclassified").at("means").at("insertion").get<double>(), 0.0);
  EXPECT_GT(kinds.at("correct").at("means").at("insertion").get<double>(), 0.5);

  const std::string csv = read_text_file(mixed.csv_path);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "id,kind,present,insertion,deletion,insertion_class,deletion_class,insertion_iou,"
            "deletion_iou,avg_highest_score,point_game,energy_pg,esr_success,esr_minimal_t");
}

TEST(Evaluate, MismatchedTargetIsAbsent) {
  const auto dir = testing::scratch_dir("cli-eval-mismatch");
  const auto f = write_sample(dir, first_sample(5), "a");
  const RunConfig config = grid_config(dir, f.world);
  ASSERT_EQ(cmd_attribute(config, {f.entry}).exit_code, kExitOk);
  ManifestEntry moved = f.entry;
  moved.target_box = {0, 0, 4, 4};
  const EvaluationResult ev = cmd_evaluate(config, {moved});
  EXPECT_FALSE(ev.rows[0].present);
  EXPECT_EQ(ev.exit_code, kExitSampleFailures);
}

TEST(Benchmark, ZeroRandomOrderingsListsGreedyAndReverse) {
  const auto dir = testing::scratch_dir("cli-bench-r0");
  RunConfig config;
  config.out_dir = dir;
  config.seed = 3;
  BenchmarkSpec spec;
  spec.suite.samples = 4;
  spec.random_orderings = 0;
  const BenchmarkResult r = cmd_benchmark(config, spec);
  EXPECT_NE(r.table.find("\ngreedy "), std::string::npos);
  EXPECT_NE(r.table.find("\nreverse "), std::string::npos);
  EXPECT_EQ(r.table.find("random "), std::string::npos);
  EXPECT_EQ(read_text_file(r.table_path), r.table);
}

TEST(Benchmark, RerunIsByteIdentical) {
  const auto dir = testing::scratch_dir("cli-bench-det");
  RunConfig config;
  config.seed = 42;
  config.workers = 2;
  BenchmarkSpec spec;
  spec.suite.samples = 5;
  spec.random_orderings = 3;
  config.out_dir = dir / "a";
  const auto a = cmd_benchmark(config, spec);
  config.out_dir = dir / "b";
  config.workers = 1;
  const auto b = cmd_benchmark(config, spec);
  EXPECT_EQ(read_text_file(a.table_path), read_text_file(b.table_path));
  EXPECT_EQ(read_text_file(a.csv_path), read_text_file(b.csv_path));
  config.seed = 43;
  config.out_dir = dir / "c";
  EXPECT_NE(cmd_benchmark(config, spec).csv, a.csv);
}

/// Mean of a named column in the aggregate table.
double table_value(const std::string& table, const std::string& row, int column) {
  std::istringstream in(table);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string name;
    cells >> name;
    if (name != row) continue;
    std::string cell;
    for (int i = 0; i < column; ++i) cells >> cell;
    return std::stod(cell);
  }
  throw std::runtime_error("row not found: " + row);
}

TEST(Benchmark, GreedyBeatsRandomOnTwentySamples) {
  const auto dir = testing::scratch_dir("cli-bench-suite");
  RunConfig config;
  config.out_dir = dir;
  config.seed = 7;
  BenchmarkSpec spec;
  const auto r = cmd_benchmark(config, spec);
  const double greedy_ins = table_value(r.table, "greedy", 2);
  const double random_ins = table_value(r.table, "random", 2);
  EXPECT_GE(greedy_ins, random_ins + 0.05) << r.table;
  EXPECT_EQ(table_value(r.table, "random", 1), 200);
}

class Bruteforce : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = testing::scratch_dir("cli-bruteforce");
    SuiteSpec spec;
    spec.samples = 1;
    spec.seed = 2;
    spec.height = 32;
    spec.width = 64;
    spec.grid_rows = 2;
    spec.grid_cols = 4;
    files = write_sample(dir, make_blob_suite(spec).front(), "s");
    config = grid_config(dir, files.world, "2x4");
  }
  fs::path dir;
  SampleFiles files;
  RunConfig config;
};

TEST_F(Bruteforce, FullSetGivesRatioOne) {
  const auto r = cmd_bruteforce(config, files.entry, 8);
  EXPECT_DOUBLE_EQ(r.ratio, 1.0);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.m, 8);
}

TEST_F(Bruteforce, EmptySetPasses) {
  const auto r = cmd_bruteforce(config, files.entry, 0);
  EXPECT_EQ(r.f_greedy, r.f_optimal);
  EXPECT_TRUE(r.pass);
}

TEST_F(Bruteforce, ThreeOfEightMeetsTheBound) {
  const auto r = cmd_bruteforce(config, files.entry, 3);
  EXPECT_GE(r.ratio, 1.0 - 1.0 / std::numbers::e);
  EXPECT_LE(r.f_greedy, r.f_optimal + 1e-12);
  EXPECT_EQ(r.to_json().at("greedy_subset").size(), 3u);
}

TEST_F(Bruteforce, RefusesLargePartitionsAndBadK) {
  config.partition = "grid:3x6";
  EXPECT_THROW(cmd_bruteforce(config, files.entry, 2), CostGuardError);
  config.partition = "grid:2x4";
  EXPECT_THROW(cmd_bruteforce(config, files.entry, 9), InvalidInput);
}

// ---------------------------------------------------------------------------
// Binary-level checks: exit codes and config file handling.

int run(const std::string& args) {
  const std::string cmd = std::string(OBJATTR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Binary, ExitCodes) {
  const auto dir = testing::scratch_dir("cli-binary");
  const auto f = write_sample(dir, first_sample(3), "s");
  const std::string common = "--image " + f.image.string() + " --box " +
                             std::to_string(int(f.entry.target_box.x1)) + "," +
                             std::to_string(int(f.entry.target_box.y1)) + "," +
                             std::to_string(int(f.entry.target_box.x2)) + "," +
                             std::to_string(int(f.entry.target_box.y2)) +
                             " --category " + f.entry.category + " --detector blob:" +
                             f.world.string() + " --partition grid:4x4";
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), kExitConfigError);
  EXPECT_EQ(run("attribute --regions 1 " + common), kExitConfigError);
  EXPECT_EQ(run("attribute --detector nope " + common), kExitConfigError);
  EXPECT_EQ(run("attribute --box 1,2,3 --image x.png --category dog --detector blob:x"),
            kExitConfigError);
  EXPECT_EQ(run("attribute " + common + " --out " + (dir / "out").string()), kExitOk);
  EXPECT_TRUE(fs::exists(dir / "out" / "sample" / "attribution.json"));
  EXPECT_EQ(run("evaluate " + common + " --out " + (dir / "out").string()), kExitOk);
  EXPECT_TRUE(fs::exists(dir / "out" / "metrics.csv"));

  const fs::path manifest = dir / "manifest.ndjson";
  write_file_atomic(manifest, manifest_line("ok", f.image.string(), f.entry.target_box,
                                            f.entry.category) +
                                  "\n" +
                                  manifest_line("broken", "nothing.png", f.entry.target_box,
                                                f.entry.category) +
                                  "\n");
  EXPECT_EQ(run("attribute --manifest " + manifest.string() + " --detector blob:" +
                f.world.string() + " --partition grid:4x4 --out " + (dir / "m").string()),
            kExitSampleFailures);
  EXPECT_EQ(run("bruteforce --k 2 " + common + " --out " + (dir / "bf").string()), kExitOk);
  EXPECT_EQ(run("bruteforce --k 2 " + common + " --partition grid:5x5 --out " +
                (dir / "bf").string()),
            kExitConfigError);
}

TEST(Binary, ConfigFileWithFlagOverride) {
  const auto dir = testing::scratch_dir("cli-config-file");
  const fs::path cfg = dir / "run.toml";
  write_file_atomic(cfg, "seed = 9\nout = \"" + (dir / "from-config").string() +
                             "\"\n[benchmark]\nsamples = 2\norderings = 1\n");
  EXPECT_EQ(run("--config " + cfg.string() + " benchmark"), kExitOk);
  const std::string table = read_text_file(dir / "from-config" / "benchmark.txt");
  EXPECT_NE(table.find("samples=2 seed=9"), std::string::npos) << table;

  EXPECT_EQ(run("--config " + cfg.string() + " --seed 10 benchmark"), kExitOk);
  EXPECT_NE(read_text_file(dir / "from-config" / "benchmark.txt").find("seed=10"),
            std::string::npos);
}

}  // namespace
}  // namespace objattr::cli
