#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "objattr/scoring.hpp"

namespace objattr {

enum class Direction { insertion, deletion };
enum class Variant { clue, class_score, iou };

const char* to_string(Direction d);
const char* to_string(Variant v);

/// Best-box responses along an ordering, one step per region: step i reveals
/// (insertion) or removes (deletion) the top-i regions, i = 0..m.
struct ResponseCurve {
  Direction direction = Direction::insertion;
  std::vector<int> steps;
  std::vector<BoxResponse> responses;
};

ResponseCurve response_curve(const Detector& detector, const Image& image,
                             const RegionPartition& partition, std::span<const int> order,
                             const ExplanationTarget& target, Direction direction,
                             std::uint8_t baseline = 0, int workers = 1);

struct StepCurve {
  Direction direction = Direction::insertion;
  Variant variant = Variant::clue;
  std::vector<int> steps;      // T_0 = 0 < T_1 < ... < T_n
  std::vector<double> values;  // in [0, 1]
};

/// clue: IoU * confidence of the best box; class: its confidence; iou: its IoU.
StepCurve select_variant(const ResponseCurve& responses, Variant variant);

StepCurve curve(const Detector& detector, const Image& image, const RegionPartition& partition,
                std::span<const int> order, const ExplanationTarget& target, Direction direction,
                Variant variant, std::uint8_t baseline = 0);

/// Trapezoidal area normalised by T_n.
double auc(const StepCurve& curve);

/// Highest class confidence over steps whose best box has IoU > 0.5; 0 if none.
double average_highest_score(std::span<const BoxResponse> insertion_steps);

/// 1 iff the first (row-major) maximum-saliency pixel lies in gt_box.
int point_game(const SaliencyMap& saliency, const BBox& gt_box);

/// Saliency mass inside gt_box over total mass. Throws UndefinedMetric on an
/// all-zero map.
double energy_point_game(const SaliencyMap& saliency, const BBox& gt_box);

struct EsrResult {
  bool success = false;
  std::optional<int> minimal_t;
};

/// Searches prefixes T = 1..budget of `order` for one whose reveal makes the
/// detector report a box with IoU > 0.5 to the target and target confidence
/// >= threshold.
EsrResult esr(const Detector& detector, const Image& image, const RegionPartition& partition,
              std::span<const int> order, const ExplanationTarget& target,
              double confidence_threshold, int budget, std::uint8_t baseline = 0);

struct MetricOptions {
  std::uint8_t baseline = 0;
  int workers = 1;
  bool faithfulness = true;
  bool location = true;
  bool explaining_success = true;
  double esr_threshold = 0.35;
  /// Defaults to m.
  std::optional<int> esr_budget;
};

struct MetricReport {
  double insertion_clue = 0, deletion_clue = 0;
  double insertion_class = 0, deletion_class = 0;
  double insertion_iou = 0, deletion_iou = 0;
  double avg_highest_score = 0;
  std::optional<int> point_game;
  std::optional<double> energy_pg;
  std::optional<EsrResult> esr;
  ResponseCurve insertion;
  ResponseCurve deletion;
};

MetricReport evaluate_metrics(const Detector& detector, const Image& image,
                              const RegionPartition& partition, std::span<const int> order,
                              const SaliencyMap& saliency, const ExplanationTarget& target,
                              const MetricOptions& options = {});

nlohmann::json metrics_to_json(const MetricReport& report);
nlohmann::json curves_to_json(const ResponseCurve& insertion, const ResponseCurve& deletion);

/// Names of the scalar metric columns, in CSV order.
const std::vector<std::string>& metric_columns();
/// Scalar metric values keyed by metric_columns(); absent metrics are omitted.
std::vector<std::optional<double>> metric_values(const MetricReport& report);

/// Line plot of curves (x = fraction of regions, y in [0,1]) as an RGB image.
Image render_curve_plot(std::span<const StepCurve> curves, int height = 240, int width = 320);

}  // namespace objattr
