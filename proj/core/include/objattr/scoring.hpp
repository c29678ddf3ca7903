#pragma once

#include <atomic>
#include <cstdint>
#include <shared_mutex>
#include <unordered_map>

#include "objattr/detector.hpp"
#include "objattr/region_set.hpp"
#include "objattr/segmentation.hpp"
#include "objattr/types.hpp"

namespace objattr {

/// The detection that maximises IoU(target, box) * s_c, with its parts.
/// `found` is false for an empty set (all parts 0).
struct BoxResponse {
  double product = 0;
  double class_score = 0;
  double iou = 0;
  bool found = false;
};

/// Ties keep the earliest detection. When the set is confidence-free, boxes
/// carrying the target category key count with confidence 1.
BoxResponse best_response(const DetectionSet& detections, const ExplanationTarget& target);

/// Best IoU * confidence when only S is visible; 0 when nothing is detected.
double clue_score(const DetectionSet& detections, const ExplanationTarget& target);

/// One minus the best IoU * confidence on the complement image; 1 when the
/// complement yields nothing.
double collaboration_score(const DetectionSet& detections_on_complement,
                           const ExplanationTarget& target);

struct ScoreBreakdown {
  double clue = 0;
  double collaboration = 0;
  double total = 0;
};

/// Which terms enter the objective. Disabled terms report 0 and cost no
/// detector call.
enum class ObjectiveMode { combined, clue_only, collaboration_only };

const char* to_string(ObjectiveMode mode);

/// F(S) = clue(S) + collaboration(S) from two detector calls.
ScoreBreakdown submodular_value(const Detector& detector, const Image& image,
                                const RegionPartition& partition, const RegionSet& subset,
                                const ExplanationTarget& target, std::uint8_t baseline = 0);

struct ObjectiveOptions {
  ObjectiveMode mode = ObjectiveMode::combined;
  std::uint8_t baseline = 0;
  /// Cache F by subset and detections by revealed set.
  bool memoize = true;
};

struct ObjectiveCounters {
  long long evaluations = 0;    // requests for F(S), memo hits included
  long long detector_calls = 0; // forward passes actually issued
  long long memo_hits = 0;      // F(S) requests answered from cache
};

/// Set-function view of one explanation problem. evaluate() is safe to call
/// concurrently; caches tolerate concurrent insertion of distinct keys.
class SubmodularObjective {
 public:
  SubmodularObjective(const Detector& detector, const Image& image,
                      const RegionPartition& partition, ExplanationTarget target,
                      ObjectiveOptions options = {});

  ScoreBreakdown evaluate(const RegionSet& subset) const;

  int region_count() const { return partition_.region_count(); }
  const ExplanationTarget& target() const { return target_; }
  const ObjectiveOptions& options() const { return options_; }
  ObjectiveCounters counters() const;

 private:
  DetectionSet detections_for(const RegionSet& revealed) const;

  const Detector& detector_;
  const Image& image_;
  const RegionPartition& partition_;
  ExplanationTarget target_;
  ObjectiveOptions options_;

  mutable std::shared_mutex value_mutex_;
  mutable std::unordered_map<RegionSet, ScoreBreakdown, RegionSetHash> values_;
  mutable std::shared_mutex detection_mutex_;
  mutable std::unordered_map<RegionSet, DetectionSet, RegionSetHash> detections_;

  mutable std::atomic<long long> evaluations_{0};
  mutable std::atomic<long long> detector_calls_{0};
  mutable std::atomic<long long> memo_hits_{0};
};

}  // namespace objattr
