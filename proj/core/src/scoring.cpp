#include "objattr/scoring.hpp"

#include <algorithm>
#include <mutex>

namespace objattr {

BoxResponse best_response(const DetectionSet& detections, const ExplanationTarget& target) {
  BoxResponse best;
  for (const auto& d : detections.detections) {
    double s = 0;
    if (detections.scores_available) {
      s = d.score_for(target.category);
    } else {
      s = d.scores.contains(target.category) ? 1.0 : 0.0;
    }
    const double overlap = iou(target.box, d.box);
    const double product = overlap * s;
    if (!best.found || product > best.product) {
      best = {product, s, overlap, true};
    }
  }
  return best;
}

double clue_score(const DetectionSet& detections, const ExplanationTarget& target) {
  return best_response(detections, target).product;
}

double collaboration_score(const DetectionSet& detections_on_complement,
                           const ExplanationTarget& target) {
  return 1.0 - best_response(detections_on_complement, target).product;
}

const char* to_string(ObjectiveMode mode) {
  switch (mode) {
    case ObjectiveMode::combined: return "combined";
    case ObjectiveMode::clue_only: return "clue";
    case ObjectiveMode::collaboration_only: return "collaboration";
  }
  return "?";
}

ScoreBreakdown submodular_value(const Detector& detector, const Image& image,
                                const RegionPartition& partition, const RegionSet& subset,
                                const ExplanationTarget& target, std::uint8_t baseline) {
  ScoreBreakdown out;
  out.clue = clue_score(detector.detect(reveal(image, partition, subset, baseline)), target);
  out.collaboration = collaboration_score(
      detector.detect(reveal(image, partition, subset.complement(), baseline)), target);
  out.total = out.clue + out.collaboration;
  return out;
}

SubmodularObjective::SubmodularObjective(const Detector& detector, const Image& image,
                                         const RegionPartition& partition,
                                         ExplanationTarget target, ObjectiveOptions options)
    : detector_(detector),
      image_(image),
      partition_(partition),
      target_(std::move(target)),
      options_(options) {
  if (image.height() != partition.height() || image.width() != partition.width()) {
    throw InvalidInput("partition does not match image dimensions");
  }
}

DetectionSet SubmodularObjective::detections_for(const RegionSet& revealed) const {
  if (options_.memoize) {
    std::shared_lock lock(detection_mutex_);
    if (auto it = detections_.find(revealed); it != detections_.end()) return it->second;
  }
  detector_calls_.fetch_add(1);
  DetectionSet result = detector_.detect(reveal(image_, partition_, revealed, options_.baseline));
  if (options_.memoize) {
    std::unique_lock lock(detection_mutex_);
    detections_.emplace(revealed, result);
  }
  return result;
}

ScoreBreakdown SubmodularObjective::evaluate(const RegionSet& subset) const {
  if (subset.universe() != partition_.region_count()) {
    throw InvalidInput("subset universe does not match region count");
  }
  evaluations_.fetch_add(1);
  if (options_.memoize) {
    std::shared_lock lock(value_mutex_);
    if (auto it = values_.find(subset); it != values_.end()) {
      memo_hits_.fetch_add(1);
      return it->second;
    }
  }

  ScoreBreakdown out;
  if (options_.mode != ObjectiveMode::collaboration_only) {
    out.clue = clue_score(detections_for(subset), target_);
  }
  if (options_.mode != ObjectiveMode::clue_only) {
    out.collaboration = collaboration_score(detections_for(subset.complement()), target_);
  }
  out.total = out.clue + out.collaboration;

  if (options_.memoize) {
    std::unique_lock lock(value_mutex_);
    values_.emplace(subset, out);
  }
  return out;
}

ObjectiveCounters SubmodularObjective::counters() const {
  return {evaluations_.load(), detector_calls_.load(), memo_hits_.load()};
}

}  // namespace objattr
