#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "objattr/image_io.hpp"
#include "objattr/parallel.hpp"

namespace objattr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(SampleKind kind) {
  switch (kind) {
    case SampleKind::correct: return "correct";
    case SampleKind::misclassified: return "misclassified";
    case SampleKind::undetected: return "undetected";
    case SampleKind::grounding_failure: return "grounding_failure";
  }
  return "?";
}

SampleKind sample_kind_from_string(const std::string& s) {
  if (s == "correct") return SampleKind::correct;
  if (s == "misclassified") return SampleKind::misclassified;
  if (s == "undetected") return SampleKind::undetected;
  if (s == "grounding_failure") return SampleKind::grounding_failure;
  throw InvalidInput("unknown sample kind '" + s + "'");
}

std::vector<ManifestEntry> parse_manifest(const std::string& text, const fs::path& base_dir) {
  std::vector<ManifestEntry> entries;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no) + ": ";
    ManifestEntry e;
    try {
      const json j = json::parse(line);
      e.id = j.value("id", "sample-" + std::to_string(line_no));
      e.image_path = j.at("image").get<std::string>();
      if (e.image_path.is_relative()) e.image_path = base_dir / e.image_path;
      const auto& b = j.at("box");
      if (!b.is_array() || b.size() != 4) throw InvalidInput("box must be [x1,y1,x2,y2]");
      e.target_box = BBox::make(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                b[3].get<double>());
      e.category = j.at("category").get<std::string>();
      e.kind = sample_kind_from_string(j.value("kind", std::string("correct")));
    } catch (const json::exception& ex) {
      throw InvalidInput(where + ex.what());
    } catch (const InvalidInput& ex) {
      throw InvalidInput(where + ex.what());
    }
    if (e.id.empty() || e.id.find('/') != std::string::npos || e.id == "." || e.id == "..") {
      throw InvalidInput(where + "id must be a non-empty file name");
    }
    if (e.category.empty()) throw InvalidInput(where + "category must be non-empty");
    if (!ids.insert(e.id).second) throw InvalidInput(where + "duplicate id '" + e.id + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  return parse_manifest(read_text_file(path), path.parent_path());
}

void RunConfig::validate() const {
  if (regions < 2) throw InvalidInput("regions must be >= 2");
  if (workers < 1) throw InvalidInput("workers must be >= 1");
  if (n_max < 1) throw InvalidInput("n_max must be >= 1");
  if (timeout_ms < 1) throw InvalidInput("timeout must be >= 1 ms");
  if (threshold && !(*threshold >= 0 && *threshold <= 1)) {
    throw InvalidInput("threshold must lie in [0,1]");
  }
  if (!(esr_threshold > 0 && esr_threshold <= 1)) {
    throw InvalidInput("ESR threshold must lie in (0,1]");
  }
  if (out_dir.empty()) throw InvalidInput("output directory must be set");
}

namespace {

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

json config_to_json(const RunConfig& c) {
  json j = {{"regions", c.regions},   {"baseline", c.baseline}, {"detector", c.detector},
            {"partition", c.partition}, {"workers", c.workers}, {"seed", c.seed},
            {"iou_only", c.iou_only}, {"n_max", c.n_max},       {"esr_threshold", c.esr_threshold}};
  j["threshold"] = c.threshold ? json(*c.threshold) : json(nullptr);
  return j;
}

std::pair<int, int> parse_pair(const std::string& s, char sep, const std::string& what) {
  const auto pos = s.find(sep);
  try {
    if (pos == std::string::npos) throw std::invalid_argument(what);
    std::size_t a_end = 0, b_end = 0;
    const int a = std::stoi(s.substr(0, pos), &a_end);
    const int b = std::stoi(s.substr(pos + 1), &b_end);
    if (a_end != pos || b_end != s.size() - pos - 1) throw std::invalid_argument(what);
    return {a, b};
  } catch (const std::logic_error&) {
    throw InvalidInput("malformed " + what + " '" + s + "'");
  }
}

/// Splits the per-run worker budget between samples and candidates.
std::pair<int, int> split_workers(int workers, std::size_t samples) {
  if (samples > 1) return {workers, 1};
  return {1, workers};
}

}  // namespace

std::shared_ptr<const Detector> make_detector(const RunConfig& config,
                                              const std::vector<CategoryId>& categories) {
  std::shared_ptr<const Detector> det;
  if (starts_with(config.detector, "blob:")) {
    const fs::path world_path = config.detector.substr(5);
    BlobWorld world;
    try {
      world = BlobWorld::from_json(json::parse(read_text_file(world_path)));
    } catch (const json::exception& e) {
      throw InvalidInput("blob world " + world_path.string() + ": " + e.what());
    }
    det = std::make_shared<BlobDetector>(std::move(world), config.baseline, config.n_max);
  } else if (starts_with(config.detector, "wire:")) {
    det = WireDetector::connect(config.detector.substr(5), categories, config.n_max,
                                std::chrono::milliseconds(config.timeout_ms));
  } else {
    throw InvalidInput("detector must be blob:<world.json> or wire:<endpoint>, got '" +
                       config.detector + "'");
  }
  if (config.threshold) det = std::make_shared<ThresholdDetector>(det, *config.threshold);
  if (config.iou_only) det = std::make_shared<IouOnlyDetector>(det);
  return det;
}

RegionPartition make_partition(const RunConfig& config, const Image& image) {
  const std::string& p = config.partition;
  if (p == "slico") return segment_slico(image, config.regions);
  if (starts_with(p, "grid:")) {
    const auto [rows, cols] = parse_pair(p.substr(5), 'x', "grid spec");
    return grid_partition(image.height(), image.width(), rows, cols);
  }
  if (starts_with(p, "file:")) {
    RegionPartition part = load_partition(p.substr(5));
    if (part.height() != image.height() || part.width() != image.width()) {
      throw InvalidInput("partition file does not match image dimensions");
    }
    return part;
  }
  throw InvalidInput("partition must be slico, grid:RxC or file:<path>, got '" + p + "'");
}

fs::path sample_dir(const RunConfig& config, const std::string& id) { return config.out_dir / id; }

namespace {

std::vector<CategoryId> categories_of(const std::vector<ManifestEntry>& entries) {
  std::set<CategoryId> s;
  for (const auto& e : entries) s.insert(e.category);
  return {s.begin(), s.end()};
}

void check_target_in_image(const ManifestEntry& e, const Image& image) {
  const BBox& b = e.target_box;
  if (b.x1 < 0 || b.y1 < 0 || b.x2 > image.width() || b.y2 > image.height()) {
    throw InvalidInput("target box lies outside the image");
  }
}

SampleOutcome attribute_one(const RunConfig& config, const Detector& detector,
                            const ManifestEntry& entry, int inner_workers) {
  SampleOutcome out;
  out.id = entry.id;
  const fs::path dir = sample_dir(config, entry.id);
  try {
    const Image image = read_image(entry.image_path);
    check_target_in_image(entry, image);
    const RegionPartition partition = make_partition(config, image);
    const ExplanationTarget target = entry.target();

    SearchOptions options;
    options.baseline = config.baseline;
    options.workers = inner_workers;
    const AttributionResult result =
        greedy_search(detector, image, partition, target, options);
    const ResponseCurve ins = response_curve(detector, image, partition, result.order, target,
                                             Direction::insertion, config.baseline, inner_workers);
    const ResponseCurve del = response_curve(detector, image, partition, result.order, target,
                                             Direction::deletion, config.baseline, inner_workers);

    fs::create_directories(dir);
    out.artifacts = {dir / "partition.pgm", dir / "attribution.json", dir / "saliency.png",
                     dir / "saliency.f32", dir / "curves.json"};
    save_partition(out.artifacts.partition, partition,
                   {{"method", config.partition},
                    {"requested_regions", config.regions},
                    {"image", entry.image_path.string()}});
    json record = attribution_to_json(result, target, detector.fingerprint());
    record["sample"] = entry.id;
    record["baseline"] = config.baseline;
    write_json(out.artifacts.attribution, record);
    write_saliency_png(out.artifacts.saliency_png, result.saliency);
    write_saliency_raw(out.artifacts.saliency_raw, result.saliency);
    write_json(out.artifacts.curves, curves_to_json(ins, del));

    out.ok = true;
    out.f_evaluations = result.counters.evaluations;
    out.detector_calls = result.counters.detector_calls;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
    out.artifacts = {};
  }
  return out;
}

json outcome_to_json(const SampleOutcome& s, const fs::path& root) {
  json j = {{"id", s.id}, {"ok", s.ok}};
  if (!s.ok) {
    j["error"] = s.error;
    return j;
  }
  auto rel = [&](const fs::path& p) { return p.lexically_relative(root).generic_string(); };
  j["artifacts"] = {{"partition", rel(s.artifacts.partition)},
                    {"attribution", rel(s.artifacts.attribution)},
                    {"saliency_png", rel(s.artifacts.saliency_png)},
                    {"saliency_raw", rel(s.artifacts.saliency_raw)},
                    {"curves", rel(s.artifacts.curves)}};
  j["f_evaluations"] = s.f_evaluations;
  j["detector_calls"] = s.detector_calls;
  return j;
}

}  // namespace

CommandResult cmd_attribute(const RunConfig& config, const std::vector<ManifestEntry>& entries) {
  config.validate();
  CommandResult result;
  if (entries.empty()) {
    result.warnings.push_back("manifest is empty; nothing to attribute");
    return result;
  }
  const auto detector = make_detector(config, categories_of(entries));
  const auto [outer, inner] = split_workers(config.workers, entries.size());

  result.samples.resize(entries.size());
  parallel_for(entries.size(), outer, [&](std::size_t i) {
    result.samples[i] = attribute_one(config, *detector, entries[i], inner);
  });

  json samples = json::array();
  int failed = 0;
  for (const auto& s : result.samples) {
    samples.push_back(outcome_to_json(s, config.out_dir));
    if (!s.ok) ++failed;
  }
  fs::create_directories(config.out_dir);
  result.summary = config.out_dir / "run_summary.json";
  write_json(result.summary, {{"command", "attribute"},
                              {"config", config_to_json(config)},
                              {"detector_fingerprint", detector->fingerprint()},
                              {"samples", samples},
                              {"failed", failed}});
  result.exit_code = failed > 0 ? kExitSampleFailures : kExitOk;
  return result;
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

EvaluationRow evaluate_one(const RunConfig& config, const Detector& detector,
                           const ManifestEntry& entry, int inner_workers) {
  EvaluationRow row;
  row.id = entry.id;
  row.kind = entry.kind;
  const fs::path dir = sample_dir(config, entry.id);
  try {
    const json record = json::parse(read_text_file(dir / "attribution.json"));
    const AttributionResult attribution = attribution_from_json(record);
    const ExplanationTarget recorded = target_from_json(record.at("target"));
    if (!(recorded.box == entry.target_box) || recorded.category != entry.category) {
      throw InvalidInput("attribution target does not match the manifest entry");
    }
    const RegionPartition partition = load_partition(dir / "partition.pgm");
    const Image image = read_image(entry.image_path);
    if (partition.height() != image.height() || partition.width() != image.width()) {
      throw InvalidInput("partition does not match the image");
    }
    if (partition.region_count() != attribution.region_count()) {
      throw InvalidInput("attribution and partition disagree on the region count");
    }
    const SaliencyMap saliency = rasterize(partition, attribution.order, attribution.normalized);

    MetricOptions options;
    options.baseline = config.baseline;
    options.workers = inner_workers;
    options.faithfulness = config.faithfulness;
    options.location = config.location;
    options.explaining_success = config.explaining_success;
    options.esr_threshold = config.esr_threshold;
    row.report = evaluate_metrics(detector, image, partition, attribution.order, saliency,
                                  entry.target(), options);
    row.present = true;
  } catch (const std::exception& e) {
    row.present = false;
    row.error = e.what();
  }
  return row;
}

json means_of(const std::vector<const EvaluationRow*>& rows) {
  const auto& cols = metric_columns();
  std::vector<double> sums(cols.size(), 0.0);
  std::vector<int> counts(cols.size(), 0);
  for (const auto* r : rows) {
    const auto vals = metric_values(r->report);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (vals[c]) {
        sums[c] += *vals[c];
        ++counts[c];
      }
    }
  }
  json means = json::object();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    means[cols[c]] = counts[c] > 0 ? json(sums[c] / counts[c]) : json(nullptr);
  }
  return {{"count", rows.size()}, {"means", means}};
}

std::string csv_cell(const std::optional<double>& v) { return v ? fmt(*v, "%.17g") : ""; }

}  // namespace

EvaluationResult cmd_evaluate(const RunConfig& config, const std::vector<ManifestEntry>& entries) {
  config.validate();
  EvaluationResult result;
  std::shared_ptr<const Detector> detector;
  if (!entries.empty()) detector = make_detector(config, categories_of(entries));
  const auto [outer, inner] = split_workers(config.workers, entries.size());

  result.rows.resize(entries.size());
  parallel_for(entries.size(), outer, [&](std::size_t i) {
    result.rows[i] = evaluate_one(config, *detector, entries[i], inner);
  });

  std::vector<const EvaluationRow*> present;
  std::map<std::string, std::vector<const EvaluationRow*>> by_kind;
  int absent = 0;
  for (const auto& r : result.rows) {
    if (!r.present) {
      ++absent;
      continue;
    }
    present.push_back(&r);
    by_kind[to_string(r.kind)].push_back(&r);
  }
  json kinds = json::object();
  for (const auto& [kind, rows] : by_kind) kinds[kind] = means_of(rows);
  result.aggregates = {{"all", means_of(present)}, {"by_kind", kinds}, {"absent", absent}};

  json rows = json::array();
  std::ostringstream csv;
  csv << "id,kind,present";
  for (const auto& c : metric_columns()) csv << ',' << c;
  csv << '\n';
  for (const auto& r : result.rows) {
    json jr = {{"id", r.id}, {"kind", to_string(r.kind)}, {"present", r.present}};
    csv << r.id << ',' << to_string(r.kind) << ',' << (r.present ? 1 : 0);
    if (r.present) {
      jr["metrics"] = metrics_to_json(r.report);
      for (const auto& v : metric_values(r.report)) csv << ',' << csv_cell(v);
    } else {
      jr["error"] = r.error;
      for (std::size_t c = 0; c < metric_columns().size(); ++c) csv << ',';
    }
    csv << '\n';
    rows.push_back(std::move(jr));
  }

  fs::create_directories(config.out_dir);
  result.json_path = config.out_dir / "metrics.json";
  result.csv_path = config.out_dir / "metrics.csv";
  write_json(result.json_path, {{"command", "evaluate"},
                                {"config", config_to_json(config)},
                                {"rows", rows},
                                {"aggregates", result.aggregates}});
  write_file_atomic(result.csv_path, csv.str());
  result.exit_code = absent > 0 ? kExitSampleFailures : kExitOk;
  return result;
}

// ---------------------------------------------------------------------------
// benchmark

namespace {

struct OrderingScore {
  std::string name;
  double insertion = 0;
  double deletion = 0;
};

}  // namespace

BenchmarkResult cmd_benchmark(const RunConfig& config, const BenchmarkSpec& spec) {
  config.validate();
  if (spec.random_orderings < 0) throw InvalidInput("random ordering count must be >= 0");
  SuiteSpec suite_spec = spec.suite;
  suite_spec.seed = config.seed;
  const std::vector<SyntheticSample> suite = make_blob_suite(suite_spec);
  const int m = suite_spec.grid_rows * suite_spec.grid_cols;

  // Random orderings come from their own stream so R does not perturb the suite.
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32), 0x6f72646eU};
  std::mt19937_64 order_rng(seq);
  std::vector<std::vector<std::vector<int>>> random_orders(suite.size());
  for (auto& per_sample : random_orders) {
    for (int r = 0; r < spec.random_orderings; ++r) {
      per_sample.push_back(random_ordering(m, order_rng));
    }
  }

  std::vector<std::vector<OrderingScore>> scores(suite.size());
  parallel_for(suite.size(), config.workers, [&](std::size_t i) {
    const SyntheticSample& s = suite[i];
    auto base = std::make_shared<BlobDetector>(s.world, config.baseline, config.n_max);
    std::shared_ptr<const Detector> search_det = base;
    if (config.threshold) search_det = std::make_shared<ThresholdDetector>(search_det, *config.threshold);
    if (config.iou_only) search_det = std::make_shared<IouOnlyDetector>(search_det);

    SearchOptions options;
    options.baseline = config.baseline;
    const auto greedy = greedy_search(*search_det, s.image, s.partition, s.target, options);
    auto score = [&](const std::string& name, const std::vector<int>& order) {
      return OrderingScore{
          name,
          auc(curve(*base, s.image, s.partition, order, s.target, Direction::insertion,
                    Variant::clue, config.baseline)),
          auc(curve(*base, s.image, s.partition, order, s.target, Direction::deletion,
                    Variant::clue, config.baseline))};
    };
    auto& out = scores[i];
    out.push_back(score("greedy", greedy.order));
    for (int r = 0; r < spec.random_orderings; ++r) {
      out.push_back(score("random-" + std::to_string(r), random_orders[i][r]));
    }
    out.push_back(score("reverse", reversed(greedy.order)));
  });

  BenchmarkResult result;
  std::ostringstream csv;
  csv << "sample,ordering,insertion,deletion,delta_insertion,delta_deletion\n";
  struct Agg {
    double ins = 0, del = 0, d_ins = 0, d_del = 0;
    int n = 0, greedy_better_ins = 0, greedy_better_del = 0;
  };
  std::map<std::string, Agg> agg;
  const std::vector<std::string> groups = spec.random_orderings > 0
                                              ? std::vector<std::string>{"greedy", "random", "reverse"}
                                              : std::vector<std::string>{"greedy", "reverse"};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const OrderingScore& g = scores[i].front();
    for (const auto& sc : scores[i]) {
      const double d_ins = sc.insertion - g.insertion;
      const double d_del = sc.deletion - g.deletion;
      csv << i << ',' << sc.name << ',' << fmt(sc.insertion, "%.17g") << ','
          << fmt(sc.deletion, "%.17g") << ',' << fmt(d_ins, "%.17g") << ','
          << fmt(d_del, "%.17g") << '\n';
      Agg& a = agg[starts_with(sc.name, "random-") ? "random" : sc.name];
      a.ins += sc.insertion;
      a.del += sc.deletion;
      a.d_ins += d_ins;
      a.d_del += d_del;
      a.greedy_better_ins += g.insertion > sc.insertion;
      a.greedy_better_del += g.deletion < sc.deletion;
      ++a.n;
    }
  }

  std::ostringstream table;
  table << "suite samples=" << suite_spec.samples << " seed=" << config.seed
        << " grid=" << suite_spec.grid_rows << 'x' << suite_spec.grid_cols
        << " image=" << suite_spec.height << 'x' << suite_spec.width
        << " random_orderings=" << spec.random_orderings
        << " threshold=" << (config.threshold ? fmt(*config.threshold, "%.3f") : "none")
        << " iou_only=" << (config.iou_only ? 1 : 0) << '\n';
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %6s %10s %10s %12s %12s %10s %10s\n", "ordering",
                "runs", "insertion", "deletion", "d_ins_mean", "d_del_mean", "g_wins_ins",
                "g_wins_del");
  table << line;
  for (const auto& name : groups) {
    const Agg& a = agg[name];
    const double n = a.n > 0 ? a.n : 1;
    std::snprintf(line, sizeof line, "%-10s %6d %10.6f %10.6f %12.6f %12.6f %10d %10d\n",
                  name.c_str(), a.n, a.ins / n, a.del / n, a.d_ins / n, a.d_del / n,
                  a.greedy_better_ins, a.greedy_better_del);
    table << line;
  }
  result.table = table.str();
  result.csv = csv.str();

  fs::create_directories(config.out_dir);
  result.table_path = config.out_dir / "benchmark.txt";
  result.csv_path = config.out_dir / "benchmark.csv";
  write_file_atomic(result.table_path, result.table);
  write_file_atomic(result.csv_path, result.csv);
  return result;
}

// ---------------------------------------------------------------------------
// bruteforce

json BoundReport::to_json() const {
  return {{"k", k},
          {"m", m},
          {"f_greedy", f_greedy},
          {"f_optimal", f_optimal},
          {"ratio", ratio},
          {"bound", 1.0 - 1.0 / std::numbers::e},
          {"pass", pass},
          {"greedy_subset", greedy_subset},
          {"optimal_subset", optimal_subset}};
}

BoundReport cmd_bruteforce(const RunConfig& config, const ManifestEntry& sample, int k) {
  config.validate();
  const Image image = read_image(sample.image_path);
  check_target_in_image(sample, image);
  const RegionPartition partition = make_partition(config, image);
  const int m = partition.region_count();
  if (m > kBruteForceMaxRegions) {
    throw CostGuardError("exhaustive search refused: " + std::to_string(m) +
                         " regions exceeds the limit of " + std::to_string(kBruteForceMaxRegions));
  }
  if (k < 0 || k > m) throw InvalidInput("k must lie in [0, m]");
  const auto detector = make_detector(config, {sample.category});
  SubmodularObjective objective(*detector, image, partition, sample.target(),
                                {ObjectiveMode::combined, config.baseline, true});
  const AttributionResult greedy = greedy_search(objective, partition, config.workers);
  const SubsetOptimum best = brute_force_best(objective, k);

  BoundReport r;
  r.k = k;
  r.m = m;
  r.greedy_subset.assign(greedy.order.begin(), greedy.order.begin() + k);
  std::sort(r.greedy_subset.begin(), r.greedy_subset.end());
  r.f_greedy = k == 0 ? objective.evaluate(RegionSet(m)).total : greedy.f_trace[k - 1];
  r.f_optimal = best.value;
  r.optimal_subset = best.subset;
  r.ratio = r.f_optimal > 0 ? r.f_greedy / r.f_optimal : 1.0;
  r.pass = r.f_greedy >= (1.0 - 1.0 / std::numbers::e) * r.f_optimal;
  return r;
}

}  // namespace objattr::cli
