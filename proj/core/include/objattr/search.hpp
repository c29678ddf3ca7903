#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "objattr/scoring.hpp"

namespace objattr {

/// Greedy ordering of all sub-regions with marginal-effect attribution.
///
/// order[i] is the region chosen at rank i; f_trace[i] = F(S_[i+1]) where
/// S_[j] is the set of the first j chosen regions. raw_scores follow
///   A_1 = base,  A_i = A_{i-1} - |F(S_[i]) - F(S_[i-1])|
/// and are min-max normalised into `normalized`, which is painted onto the
/// partition to give the saliency map.
struct AttributionResult {
  std::vector<int> order;
  std::vector<double> raw_scores;
  std::vector<double> f_trace;
  std::vector<double> clue_trace;
  std::vector<double> collaboration_trace;
  std::vector<double> normalized;
  SaliencyMap saliency;
  ObjectiveCounters counters;

  int region_count() const { return static_cast<int>(order.size()); }
};

struct SearchOptions {
  ObjectiveMode mode = ObjectiveMode::combined;
  std::uint8_t baseline = 0;
  /// Candidate evaluations within one rank run on up to this many threads.
  int workers = 1;
  double base_score = 0.0;
  bool memoize = true;
};

/// Raised when a backend fails mid-search; carries the ranks completed so far.
class SearchAborted : public BackendError {
 public:
  SearchAborted(const BackendError& cause, AttributionResult partial);
  const AttributionResult& partial() const { return partial_; }

 private:
  AttributionResult partial_;
};

/// Greedy ranking over an existing objective. Performs exactly m(m+1)/2
/// objective evaluations; ties go to the lowest region id.
AttributionResult greedy_search(const SubmodularObjective& objective,
                                const RegionPartition& partition, int workers = 1,
                                double base_score = 0.0);

AttributionResult greedy_search(const Detector& detector, const Image& image,
                                const RegionPartition& partition,
                                const ExplanationTarget& target, const SearchOptions& options = {});

/// A_1 = base; A_i = A_{i-1} - |f_trace[i] - f_trace[i-1]|.
std::vector<double> attribution_scores(std::span<const double> f_trace, double base_score = 0.0);

/// Min-max normalisation; constant input maps to all ones.
std::vector<double> normalize_attribution(std::span<const double> raw_scores);

/// Paints normalized[rank] onto every pixel of region order[rank].
SaliencyMap rasterize(const RegionPartition& partition, std::span<const int> order,
                      std::span<const double> normalized);

struct SubsetOptimum {
  std::vector<int> subset;  // ascending region ids
  double value = 0;
};

/// Regions beyond which exhaustive search is refused.
inline constexpr int kBruteForceMaxRegions = 16;

/// Exhaustive maximum of F over all size-k subsets; ties keep the
/// lexicographically smallest subset. Throws CostGuardError when m > 16.
SubsetOptimum brute_force_best(const SubmodularObjective& objective, int k);

SubsetOptimum brute_force_best(const Detector& detector, const Image& image,
                               const RegionPartition& partition, const ExplanationTarget& target,
                               int k, std::uint8_t baseline = 0);

/// JSON record: order, raw_scores, f_trace, normalized, m, target,
/// detector_fingerprint (plus component traces and evaluation counters).
nlohmann::json attribution_to_json(const AttributionResult& result,
                                   const ExplanationTarget& target,
                                   const std::string& detector_fingerprint);
/// Reads the ranking back; the saliency map is not part of the record.
AttributionResult attribution_from_json(const nlohmann::json& j);

nlohmann::json target_to_json(const ExplanationTarget& target);
ExplanationTarget target_from_json(const nlohmann::json& j);

/// 8-bit grayscale PNG, value = round(255 * saliency).
void write_saliency_png(const std::filesystem::path& path, const SaliencyMap& saliency);

/// Header line "OBJATTR-SALIENCY-F32 <width> <height>\n" followed by
/// little-endian float32 values in row-major order.
void write_saliency_raw(const std::filesystem::path& path, const SaliencyMap& saliency);
SaliencyMap read_saliency_raw(const std::filesystem::path& path);

}  // namespace objattr
