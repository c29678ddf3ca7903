#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "objattr/image_io.hpp"

namespace {

using namespace objattr;
using namespace objattr::cli;

struct TargetFlags {
  std::string manifest;
  std::string image;
  std::string box;
  std::string category;
  std::string kind = "correct";
};

BBox parse_box(const std::string& s) {
  std::vector<double> v;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string part = s.substr(start, comma == std::string::npos ? std::string::npos
                                                                        : comma - start);
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw InvalidInput("--box expects x1,y1,x2,y2, got '" + s + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (v.size() != 4) throw InvalidInput("--box expects x1,y1,x2,y2, got '" + s + "'");
  return BBox::make(v[0], v[1], v[2], v[3]);
}

ManifestEntry single_target(const TargetFlags& t) {
  if (t.image.empty() || t.box.empty() || t.category.empty()) {
    throw InvalidInput("--image, --box and --category are required without --manifest");
  }
  return {"sample", t.image, parse_box(t.box), t.category, sample_kind_from_string(t.kind)};
}

std::vector<ManifestEntry> load_entries(const TargetFlags& t) {
  if (!t.manifest.empty()) {
    if (!t.image.empty()) throw InvalidInput("--manifest and --image are mutually exclusive");
    return read_manifest(t.manifest);
  }
  return {single_target(t)};
}

void report_samples(const CommandResult& r) {
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& s : r.samples) {
    if (s.ok) {
      std::cout << s.id << ": ok, " << s.f_evaluations << " F-evaluations, "
                << s.detector_calls << " detector calls\n";
    } else {
      std::cerr << s.id << ": failed: " << s.error << '\n';
    }
  }
  if (!r.summary.empty()) std::cout << "summary: " << r.summary.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Greedy region attribution for black-box object detectors"};
  app.set_config("--config", "", "TOML-style config file; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig config;
  TargetFlags target;
  int baseline = 0;

  app.add_option("--manifest", target.manifest, "NDJSON manifest of samples");
  app.add_option("--image", target.image, "Single image (PNG or PPM)");
  app.add_option("--box", target.box, "Target box x1,y1,x2,y2");
  app.add_option("--category", target.category, "Target category");
  app.add_option("--kind", target.kind, "Sample kind for --image runs")
      ->check(CLI::IsMember({"correct", "misclassified", "undetected", "grounding_failure"}));
  app.add_option("--regions", config.regions, "Target sub-region count m")->capture_default_str();
  app.add_option("--baseline", baseline, "Baseline pixel value")
      ->check(CLI::Range(0, 255))
      ->capture_default_str();
  app.add_option("--detector", config.detector, "blob:<world.json> | wire:<http://... | stdio:cmd>");
  app.add_option("--partition", config.partition, "slico | grid:RxC | file:<labels.pgm>")
      ->capture_default_str();
  app.add_option("--workers", config.workers, "Worker budget")->capture_default_str();
  app.add_option("--seed", config.seed, "64-bit seed")->capture_default_str();
  app.add_option("--out", config.out_dir, "Output directory")->capture_default_str();
  app.add_option("--threshold", config.threshold, "Drop detections below this confidence");
  app.add_flag("--iou-only", config.iou_only, "Ignore confidences; score boxes by IoU");
  app.add_option("--n-max", config.n_max, "Detections requested per call")->capture_default_str();
  app.add_option("--timeout-ms", config.timeout_ms, "Wire backend timeout")->capture_default_str();
  app.add_option("--esr-threshold", config.esr_threshold, "Confidence threshold for ESR")
      ->capture_default_str();
  bool no_faithfulness = false, no_location = false, no_esr = false;
  app.add_flag("--no-faithfulness", no_faithfulness, "Skip insertion/deletion metrics");
  app.add_flag("--no-location", no_location, "Skip point game metrics");
  app.add_flag("--no-esr", no_esr, "Skip explaining success rate");

  auto* attribute = app.add_subcommand("attribute", "Compute attributions and write artifacts");
  auto* evaluate = app.add_subcommand("evaluate", "Score attribution artifacts");

  auto* benchmark = app.add_subcommand("benchmark", "Compare orderings on a synthetic suite");
  BenchmarkSpec bench;
  std::string grid = "4x4", size = "48x48";
  benchmark->add_option("--samples", bench.suite.samples, "Suite size")->capture_default_str();
  benchmark->add_option("--orderings", bench.random_orderings, "Random orderings per sample")
      ->capture_default_str();
  benchmark->add_option("--grid", grid, "Grid partition RxC")->capture_default_str();
  benchmark->add_option("--size", size, "Image size HxW")->capture_default_str();

  auto* bruteforce = app.add_subcommand("bruteforce", "Check the greedy bound against exhaustive search");
  int k = 0;
  bruteforce->add_option("--k", k, "Subset size")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    config.baseline = static_cast<std::uint8_t>(baseline);
    config.faithfulness = !no_faithfulness;
    config.location = !no_location;
    config.explaining_success = !no_esr;

    if (attribute->parsed()) {
      const CommandResult r = cmd_attribute(config, load_entries(target));
      report_samples(r);
      return r.exit_code;
    }
    if (evaluate->parsed()) {
      const EvaluationResult r = cmd_evaluate(config, load_entries(target));
      for (const auto& row : r.rows) {
        if (!row.present) std::cerr << row.id << ": absent: " << row.error << '\n';
      }
      std::cout << r.aggregates.dump(2) << '\n';
      return r.exit_code;
    }
    if (benchmark->parsed()) {
      const auto [rows, cols] = [&] {
        const auto x = grid.find('x');
        if (x == std::string::npos) throw InvalidInput("--grid expects RxC");
        return std::pair{std::stoi(grid.substr(0, x)), std::stoi(grid.substr(x + 1))};
      }();
      const auto [h, w] = [&] {
        const auto x = size.find('x');
        if (x == std::string::npos) throw InvalidInput("--size expects HxW");
        return std::pair{std::stoi(size.substr(0, x)), std::stoi(size.substr(x + 1))};
      }();
      bench.suite.grid_rows = rows;
      bench.suite.grid_cols = cols;
      bench.suite.height = h;
      bench.suite.width = w;
      const BenchmarkResult r = cmd_benchmark(config, bench);
      std::cout << r.table;
      return kExitOk;
    }
    if (bruteforce->parsed()) {
      const BoundReport r = cmd_bruteforce(config, single_target(target), k);
      std::filesystem::create_directories(config.out_dir);
      write_file_atomic(config.out_dir / "bruteforce.json", r.to_json().dump(2) + "\n");
      std::printf("k=%d m=%d F(greedy)=%.6f F(opt)=%.6f ratio=%.6f %s\n", r.k, r.m, r.f_greedy,
                  r.f_optimal, r.ratio, r.pass ? "PASS" : "FAIL");
      return r.pass ? kExitOk : kExitSampleFailures;
    }
  } catch (const std::exception& e) {
    // Invalid configuration, unreadable inputs, or a backend failure outside a sample.
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  return kExitConfigError;
}
