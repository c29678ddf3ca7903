#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "objattr/detector.hpp"
#include "objattr/evaluation.hpp"
#include "objattr/search.hpp"
#include "objattr/synthetic.hpp"

namespace objattr::cli {

/// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitSampleFailures = 1;
inline constexpr int kExitConfigError = 2;

enum class SampleKind { correct, misclassified, undetected, grounding_failure };

const char* to_string(SampleKind kind);
SampleKind sample_kind_from_string(const std::string& s);

struct ManifestEntry {
  std::string id;
  std::filesystem::path image_path;
  BBox target_box;
  CategoryId category;
  SampleKind kind = SampleKind::correct;

  ExplanationTarget target() const { return {target_box, category}; }
};

/// One JSON object per line: {"id"?, "image", "box", "category", "kind"?}.
/// Relative image paths resolve against the manifest's directory. Blank lines
/// are skipped; ids default to "sample-<line>" and must be unique.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
std::vector<ManifestEntry> parse_manifest(const std::string& text,
                                          const std::filesystem::path& base_dir);

struct RunConfig {
  int regions = 100;
  std::uint8_t baseline = 0;
  /// "blob:<world.json>" or "wire:<http://host:port | stdio:command>".
  std::string detector;
  /// "slico", "grid:RxC" or "file:<labels.pgm>".
  std::string partition = "slico";
  int workers = 1;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  std::optional<double> threshold;
  bool iou_only = false;
  int n_max = 300;
  int timeout_ms = 30000;
  bool faithfulness = true;
  bool location = true;
  bool explaining_success = true;
  double esr_threshold = 0.35;

  void validate() const;
};

/// Builds the configured backend, wrapped with the threshold / IoU-only
/// decorators when requested. `categories` is sent to wire backends.
std::shared_ptr<const Detector> make_detector(const RunConfig& config,
                                              const std::vector<CategoryId>& categories);

RegionPartition make_partition(const RunConfig& config, const Image& image);

struct SampleArtifacts {
  std::filesystem::path partition;
  std::filesystem::path attribution;
  std::filesystem::path saliency_png;
  std::filesystem::path saliency_raw;
  std::filesystem::path curves;
};

struct SampleOutcome {
  std::string id;
  bool ok = false;
  std::string error;
  SampleArtifacts artifacts;
  long long f_evaluations = 0;
  long long detector_calls = 0;
};

struct CommandResult {
  int exit_code = kExitOk;
  std::vector<SampleOutcome> samples;
  std::vector<std::string> warnings;
  std::filesystem::path summary;
};

/// Directory holding a sample's artifacts: <out>/<id>.
std::filesystem::path sample_dir(const RunConfig& config, const std::string& id);

/// Greedy attribution per sample. Writes partition, attribution JSON,
/// saliency PNG + raw dump and curve JSON under <out>/<id>/, and
/// <out>/run_summary.json indexing them.
CommandResult cmd_attribute(const RunConfig& config, const std::vector<ManifestEntry>& entries);

struct EvaluationRow {
  std::string id;
  SampleKind kind = SampleKind::correct;
  bool present = false;
  std::string error;
  MetricReport report;
};

struct EvaluationResult {
  int exit_code = kExitOk;
  std::vector<EvaluationRow> rows;
  nlohmann::json aggregates;
  std::filesystem::path json_path;
  std::filesystem::path csv_path;
};

/// Metric battery over artifacts written by cmd_attribute. Missing or
/// unreadable artifacts mark the row absent and leave it out of the means.
/// Writes <out>/metrics.json and <out>/metrics.csv.
EvaluationResult cmd_evaluate(const RunConfig& config, const std::vector<ManifestEntry>& entries);

struct BenchmarkSpec {
  SuiteSpec suite;
  int random_orderings = 10;
};

struct BenchmarkResult {
  std::string table;  // aggregate table, fixed formatting
  std::string csv;    // per-sample, per-ordering AUCs and deltas vs greedy
  std::filesystem::path table_path;
  std::filesystem::path csv_path;
};

/// Greedy vs random x R vs reversed-greedy orderings on a synthetic blob
/// suite. Orderings are searched with the configured threshold / IoU-only
/// decorators and always scored with the undecorated blob detector. All
/// randomness derives from config.seed.
BenchmarkResult cmd_benchmark(const RunConfig& config, const BenchmarkSpec& spec);

struct BoundReport {
  int k = 0;
  int m = 0;
  double f_greedy = 0;
  double f_optimal = 0;
  double ratio = 1;
  bool pass = true;
  std::vector<int> greedy_subset;
  std::vector<int> optimal_subset;

  nlohmann::json to_json() const;
};

/// Compares the greedy size-k prefix with the exhaustive optimum. Refuses
/// partitions with more than 16 regions (CostGuardError).
BoundReport cmd_bruteforce(const RunConfig& config, const ManifestEntry& sample, int k);

}  // namespace objattr::cli
