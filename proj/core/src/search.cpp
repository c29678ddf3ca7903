#include "objattr/search.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "objattr/image_io.hpp"
#include "objattr/parallel.hpp"

namespace objattr {

SearchAborted::SearchAborted(const BackendError& cause, AttributionResult partial)
    : BackendError(cause.kind(),
                   cause.cause() + " (search aborted after " +
                       std::to_string(partial.order.size()) + " ranks)"),
      partial_(std::move(partial)) {}

std::vector<double> attribution_scores(std::span<const double> f_trace, double base_score) {
  std::vector<double> a;
  a.reserve(f_trace.size());
  for (std::size_t i = 0; i < f_trace.size(); ++i) {
    if (i == 0) {
      a.push_back(base_score);
    } else {
      a.push_back(a.back() - std::abs(f_trace[i] - f_trace[i - 1]));
    }
  }
  return a;
}

std::vector<double> normalize_attribution(std::span<const double> raw_scores) {
  std::vector<double> out(raw_scores.size(), 1.0);
  if (raw_scores.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(raw_scores.begin(), raw_scores.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  if (span <= 0) return out;
  for (std::size_t i = 0; i < raw_scores.size(); ++i) out[i] = (raw_scores[i] - lo) / span;
  return out;
}

SaliencyMap rasterize(const RegionPartition& partition, std::span<const int> order,
                      std::span<const double> normalized) {
  const int m = partition.region_count();
  if (static_cast<int>(order.size()) != m || static_cast<int>(normalized.size()) != m) {
    throw InvalidInput("order and scores must have one entry per region");
  }
  std::vector<double> by_region(m, -1.0);
  for (int rank = 0; rank < m; ++rank) {
    const int r = order[rank];
    if (r < 0 || r >= m || by_region[r] >= 0) throw InvalidInput("order is not a permutation");
    by_region[r] = normalized[rank];
  }
  SaliencyMap map;
  map.height = partition.height();
  map.width = partition.width();
  map.values.resize(partition.labels().size());
  const auto labels = partition.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) map.values[i] = by_region[labels[i]];
  return map;
}

AttributionResult greedy_search(const SubmodularObjective& objective,
                                const RegionPartition& partition, int workers,
                                double base_score) {
  const int m = partition.region_count();
  if (objective.region_count() != m) throw InvalidInput("objective/partition mismatch");

  AttributionResult result;
  result.order.reserve(m);
  RegionSet selected(m);
  std::vector<int> remaining(m);
  for (int i = 0; i < m; ++i) remaining[i] = i;

  try {
    for (int rank = 0; rank < m; ++rank) {
      std::vector<ScoreBreakdown> values(remaining.size());
      parallel_for(remaining.size(), workers, [&](std::size_t j) {
        values[j] = objective.evaluate(selected.with(remaining[j]));
      });
      // Remaining ids are ascending, so strict '>' keeps the lowest id on ties.
      std::size_t best = 0;
      for (std::size_t j = 1; j < values.size(); ++j) {
        if (values[j].total > values[best].total) best = j;
      }
      const int chosen = remaining[best];
      selected.insert(chosen);
      result.order.push_back(chosen);
      result.f_trace.push_back(values[best].total);
      result.clue_trace.push_back(values[best].clue);
      result.collaboration_trace.push_back(values[best].collaboration);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    }
  } catch (const BackendError& e) {
    result.raw_scores = attribution_scores(result.f_trace, base_score);
    result.counters = objective.counters();
    throw SearchAborted(e, std::move(result));
  }

  result.raw_scores = attribution_scores(result.f_trace, base_score);
  result.normalized = normalize_attribution(result.raw_scores);
  result.saliency = rasterize(partition, result.order, result.normalized);
  result.counters = objective.counters();
  return result;
}

AttributionResult greedy_search(const Detector& detector, const Image& image,
                                const RegionPartition& partition,
                                const ExplanationTarget& target, const SearchOptions& options) {
  SubmodularObjective objective(detector, image, partition, target,
                                {options.mode, options.baseline, options.memoize});
  return greedy_search(objective, partition, options.workers, options.base_score);
}

SubsetOptimum brute_force_best(const SubmodularObjective& objective, int k) {
  const int m = objective.region_count();
  if (m > kBruteForceMaxRegions) {
    throw CostGuardError("exhaustive search refused: " + std::to_string(m) +
                         " regions exceeds the limit of " +
                         std::to_string(kBruteForceMaxRegions));
  }
  if (k < 0 || k > m) throw InvalidInput("k must lie in [0, m]");

  SubsetOptimum best;
  bool have = false;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  // Combinations in lexicographic order; strict '>' keeps the first maximiser.
  for (;;) {
    const double v = objective.evaluate(RegionSet::of(m, idx)).total;
    if (!have || v > best.value) {
      best = {idx, v};
      have = true;
    }
    int i = k - 1;
    while (i >= 0 && idx[i] == m - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

SubsetOptimum brute_force_best(const Detector& detector, const Image& image,
                               const RegionPartition& partition, const ExplanationTarget& target,
                               int k, std::uint8_t baseline) {
  if (partition.region_count() > kBruteForceMaxRegions) {
    throw CostGuardError("exhaustive search refused: " + std::to_string(partition.region_count()) +
                         " regions exceeds the limit of " +
                         std::to_string(kBruteForceMaxRegions));
  }
  SubmodularObjective objective(detector, image, partition, target,
                                {ObjectiveMode::combined, baseline, true});
  return brute_force_best(objective, k);
}

// ---------------------------------------------------------------------------
// Serialisation

nlohmann::json target_to_json(const ExplanationTarget& target) {
  return {{"box", {target.box.x1, target.box.y1, target.box.x2, target.box.y2}},
          {"category", target.category}};
}

ExplanationTarget target_from_json(const nlohmann::json& j) {
  const auto& b = j.at("box");
  if (!b.is_array() || b.size() != 4) throw InvalidInput("target box must be [x1,y1,x2,y2]");
  return {BBox::make(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                     b[3].get<double>()),
          j.at("category").get<std::string>()};
}

nlohmann::json attribution_to_json(const AttributionResult& result,
                                   const ExplanationTarget& target,
                                   const std::string& detector_fingerprint) {
  return {{"m", result.region_count()},
          {"order", result.order},
          {"raw_scores", result.raw_scores},
          {"f_trace", result.f_trace},
          {"clue_trace", result.clue_trace},
          {"collaboration_trace", result.collaboration_trace},
          {"normalized", result.normalized},
          {"target", target_to_json(target)},
          {"detector_fingerprint", detector_fingerprint},
          {"counters",
           {{"f_evaluations", result.counters.evaluations},
            {"detector_calls", result.counters.detector_calls},
            {"memo_hits", result.counters.memo_hits}}}};
}

AttributionResult attribution_from_json(const nlohmann::json& j) {
  AttributionResult r;
  try {
    r.order = j.at("order").get<std::vector<int>>();
    r.raw_scores = j.at("raw_scores").get<std::vector<double>>();
    r.f_trace = j.at("f_trace").get<std::vector<double>>();
    r.normalized = j.at("normalized").get<std::vector<double>>();
    r.clue_trace = j.value("clue_trace", std::vector<double>{});
    r.collaboration_trace = j.value("collaboration_trace", std::vector<double>{});
    if (j.contains("counters")) {
      const auto& c = j.at("counters");
      r.counters = {c.value("f_evaluations", 0LL), c.value("detector_calls", 0LL),
                    c.value("memo_hits", 0LL)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("attribution record: ") + e.what());
  }
  if (j.value("m", -1) != static_cast<int>(r.order.size())) {
    throw InvalidInput("attribution record: m does not match order length");
  }
  return r;
}

void write_saliency_png(const std::filesystem::path& path, const SaliencyMap& saliency) {
  std::vector<std::uint8_t> gray(saliency.values.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(saliency.values[i], 0.0, 1.0)));
  }
  write_png_gray(path, saliency.height, saliency.width, gray);
}

void write_saliency_raw(const std::filesystem::path& path, const SaliencyMap& saliency) {
  std::ostringstream header;
  header << "OBJATTR-SALIENCY-F32 " << saliency.width << " " << saliency.height << "\n";
  std::string out = header.str();
  out.reserve(out.size() + saliency.values.size() * 4);
  for (double v : saliency.values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
  write_file_atomic(path, out);
}

SaliencyMap read_saliency_raw(const std::filesystem::path& path) {
  const std::string data = read_text_file(path);
  const auto nl = data.find('\n');
  if (nl == std::string::npos) throw IoError("saliency dump: missing header");
  std::istringstream header(data.substr(0, nl));
  std::string magic;
  SaliencyMap map;
  header >> magic >> map.width >> map.height;
  if (magic != "OBJATTR-SALIENCY-F32" || map.width < 1 || map.height < 1) {
    throw IoError("saliency dump: bad header");
  }
  const std::size_t n = static_cast<std::size_t>(map.width) * map.height;
  if (data.size() - nl - 1 != n * 4) throw IoError("saliency dump: size mismatch");
  map.values.resize(n);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + nl + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
    map.values[i] = std::bit_cast<float>(bits);
  }
  return map;
}

}  // namespace objattr
