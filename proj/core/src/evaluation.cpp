#include "objattr/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "objattr/parallel.hpp"

namespace objattr {

const char* to_string(Direction d) { return d == Direction::insertion ? "insertion" : "deletion"; }

const char* to_string(Variant v) {
  switch (v) {
    case Variant::clue: return "clue";
    case Variant::class_score: return "class";
    case Variant::iou: return "iou";
  }
  return "?";
}

namespace {

void check_order(const RegionPartition& partition, std::span<const int> order) {
  const int m = partition.region_count();
  if (static_cast<int>(order.size()) != m) throw InvalidInput("order must list every region");
  std::vector<char> seen(m, 0);
  for (int r : order) {
    if (r < 0 || r >= m || seen[r]) throw InvalidInput("order is not a permutation");
    seen[r] = 1;
  }
}

RegionSet prefix(int m, std::span<const int> order, int t) {
  RegionSet s(m);
  for (int i = 0; i < t; ++i) s.insert(order[i]);
  return s;
}

}  // namespace

ResponseCurve response_curve(const Detector& detector, const Image& image,
                             const RegionPartition& partition, std::span<const int> order,
                             const ExplanationTarget& target, Direction direction,
                             std::uint8_t baseline, int workers) {
  check_order(partition, order);
  const int m = partition.region_count();
  ResponseCurve out;
  out.direction = direction;
  out.steps.resize(m + 1);
  out.responses.resize(m + 1);
  parallel_for(static_cast<std::size_t>(m + 1), workers, [&](std::size_t i) {
    const int t = static_cast<int>(i);
    RegionSet top = prefix(m, order, t);
    const RegionSet shown = direction == Direction::insertion ? top : top.complement();
    out.steps[i] = t;
    out.responses[i] = best_response(detector.detect(reveal(image, partition, shown, baseline)), target);
  });
  return out;
}

StepCurve select_variant(const ResponseCurve& responses, Variant variant) {
  StepCurve c;
  c.direction = responses.direction;
  c.variant = variant;
  c.steps = responses.steps;
  c.values.reserve(responses.responses.size());
  for (const auto& r : responses.responses) {
    switch (variant) {
      case Variant::clue: c.values.push_back(r.product); break;
      case Variant::class_score: c.values.push_back(r.class_score); break;
      case Variant::iou: c.values.push_back(r.iou); break;
    }
  }
  return c;
}

StepCurve curve(const Detector& detector, const Image& image, const RegionPartition& partition,
                std::span<const int> order, const ExplanationTarget& target, Direction direction,
                Variant variant, std::uint8_t baseline) {
  return select_variant(
      response_curve(detector, image, partition, order, target, direction, baseline), variant);
}

double auc(const StepCurve& c) {
  if (c.steps.size() != c.values.size() || c.steps.size() < 2) {
    throw InvalidInput("curve needs at least two matching steps");
  }
  if (c.steps.front() != 0) throw InvalidInput("curve must start at T_0 = 0");
  double sum = 0;
  for (std::size_t i = 1; i < c.steps.size(); ++i) {
    const int dt = c.steps[i] - c.steps[i - 1];
    if (dt <= 0) throw InvalidInput("curve steps must be strictly increasing");
    sum += (c.values[i] + c.values[i - 1]) * dt;
  }
  return sum / (2.0 * c.steps.back());
}

double average_highest_score(std::span<const BoxResponse> insertion_steps) {
  double best = 0;
  for (const auto& r : insertion_steps) {
    if (r.found && r.iou > 0.5) best = std::max(best, r.class_score);
  }
  return best;
}

int point_game(const SaliencyMap& saliency, const BBox& gt_box) {
  if (saliency.values.empty()) throw InvalidInput("empty saliency map");
  const auto it = std::max_element(saliency.values.begin(), saliency.values.end());
  const auto idx = static_cast<std::size_t>(it - saliency.values.begin());
  const int y = static_cast<int>(idx / saliency.width);
  const int x = static_cast<int>(idx % saliency.width);
  return gt_box.contains_pixel(x, y) ? 1 : 0;
}

double energy_point_game(const SaliencyMap& saliency, const BBox& gt_box) {
  double inside = 0;
  double total = 0;
  for (int y = 0; y < saliency.height; ++y) {
    for (int x = 0; x < saliency.width; ++x) {
      const double v = saliency.at(y, x);
      if (v < 0) throw InvalidInput("saliency must be non-negative");
      total += v;
      if (gt_box.contains_pixel(x, y)) inside += v;
    }
  }
  if (total <= 0) throw UndefinedMetric("energy point game undefined for an all-zero saliency map");
  return inside / total;
}

EsrResult esr(const Detector& detector, const Image& image, const RegionPartition& partition,
              std::span<const int> order, const ExplanationTarget& target,
              double confidence_threshold, int budget, std::uint8_t baseline) {
  check_order(partition, order);
  const int m = partition.region_count();
  if (!(confidence_threshold > 0 && confidence_threshold <= 1)) {
    throw InvalidInput("ESR threshold must lie in (0,1]");
  }
  if (budget < 0 || budget > m) throw InvalidInput("ESR budget must lie in [0, m]");
  RegionSet shown(m);
  for (int t = 1; t <= budget; ++t) {
    shown.insert(order[t - 1]);
    const DetectionSet dets = detector.detect(reveal(image, partition, shown, baseline));
    for (const auto& d : dets.detections) {
      const double conf = dets.scores_available ? d.score_for(target.category)
                                                : (d.scores.contains(target.category) ? 1.0 : 0.0);
      if (iou(d.box, target.box) > 0.5 && conf >= confidence_threshold) {
        return {true, t};
      }
    }
  }
  return {false, std::nullopt};
}

MetricReport evaluate_metrics(const Detector& detector, const Image& image,
                              const RegionPartition& partition, std::span<const int> order,
                              const SaliencyMap& saliency, const ExplanationTarget& target,
                              const MetricOptions& options) {
  MetricReport r;
  if (options.faithfulness) {
    r.insertion = response_curve(detector, image, partition, order, target, Direction::insertion,
                                 options.baseline, options.workers);
    r.deletion = response_curve(detector, image, partition, order, target, Direction::deletion,
                                options.baseline, options.workers);
    r.insertion_clue = auc(select_variant(r.insertion, Variant::clue));
    r.deletion_clue = auc(select_variant(r.deletion, Variant::clue));
    r.insertion_class = auc(select_variant(r.insertion, Variant::class_score));
    r.deletion_class = auc(select_variant(r.deletion, Variant::class_score));
    r.insertion_iou = auc(select_variant(r.insertion, Variant::iou));
    r.deletion_iou = auc(select_variant(r.deletion, Variant::iou));
    r.avg_highest_score = average_highest_score(r.insertion.responses);
  }
  if (options.location) {
    r.point_game = point_game(saliency, target.box);
    try {
      r.energy_pg = energy_point_game(saliency, target.box);
    } catch (const UndefinedMetric&) {
      r.energy_pg.reset();
    }
  }
  if (options.explaining_success) {
    r.esr = esr(detector, image, partition, order, target, options.esr_threshold,
                options.esr_budget.value_or(partition.region_count()), options.baseline);
  }
  return r;
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {
      "insertion",     "deletion",       "insertion_class", "deletion_class",
      "insertion_iou", "deletion_iou",   "avg_highest_score", "point_game",
      "energy_pg",     "esr_success",    "esr_minimal_t"};
  return cols;
}

std::vector<std::optional<double>> metric_values(const MetricReport& r) {
  std::vector<std::optional<double>> v = {r.insertion_clue,  r.deletion_clue,  r.insertion_class,
                                          r.deletion_class,  r.insertion_iou,  r.deletion_iou,
                                          r.avg_highest_score};
  v.push_back(r.point_game ? std::optional<double>(*r.point_game) : std::nullopt);
  v.push_back(r.energy_pg);
  if (r.esr) {
    v.push_back(r.esr->success ? 1.0 : 0.0);
    v.push_back(r.esr->minimal_t ? std::optional<double>(*r.esr->minimal_t) : std::nullopt);
  } else {
    v.push_back(std::nullopt);
    v.push_back(std::nullopt);
  }
  return v;
}

nlohmann::json metrics_to_json(const MetricReport& report) {
  nlohmann::json j = nlohmann::json::object();
  const auto& cols = metric_columns();
  const auto vals = metric_values(report);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    j[cols[i]] = vals[i] ? nlohmann::json(*vals[i]) : nlohmann::json(nullptr);
  }
  if (report.point_game) j["point_game"] = *report.point_game;
  if (report.esr) {
    j["esr_success"] = report.esr->success;
    j["esr_minimal_t"] = report.esr->minimal_t ? nlohmann::json(*report.esr->minimal_t)
                                               : nlohmann::json(nullptr);
  }
  return j;
}

nlohmann::json curves_to_json(const ResponseCurve& insertion, const ResponseCurve& deletion) {
  auto one = [](const ResponseCurve& c) {
    nlohmann::json clue = nlohmann::json::array();
    nlohmann::json cls = nlohmann::json::array();
    nlohmann::json io = nlohmann::json::array();
    for (const auto& r : c.responses) {
      clue.push_back(r.product);
      cls.push_back(r.class_score);
      io.push_back(r.iou);
    }
    return nlohmann::json{{"steps", c.steps}, {"clue", clue}, {"class", cls}, {"iou", io}};
  };
  return {{"insertion", one(insertion)}, {"deletion", one(deletion)}};
}

Image render_curve_plot(std::span<const StepCurve> curves, int height, int width) {
  Image img(height, width, 255);
  const int left = 30, right = width - 10, top = 10, bottom = height - 25;
  auto plot = [&](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x >= 0 && x < width && y >= 0 && y < height) img.set_pixel(y, x, r, g, b);
  };
  auto line = [&](int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      plot(x0, y0, r, g, b);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  };
  line(left, bottom, right, bottom, 0, 0, 0);
  line(left, bottom, left, top, 0, 0, 0);
  static constexpr std::uint8_t kPalette[][3] = {
      {214, 39, 40}, {31, 119, 180}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189}, {140, 86, 75}};
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto& cv = curves[c];
    if (cv.steps.size() < 2) continue;
    const auto* col = kPalette[c % std::size(kPalette)];
    const double tn = cv.steps.back();
    auto px = [&](std::size_t i) {
      return left + static_cast<int>(std::lround((right - left) * cv.steps[i] / tn));
    };
    auto py = [&](std::size_t i) {
      return bottom - static_cast<int>(std::lround((bottom - top) * std::clamp(cv.values[i], 0.0, 1.0)));
    };
    for (std::size_t i = 1; i < cv.steps.size(); ++i) {
      line(px(i - 1), py(i - 1), px(i), py(i), col[0], col[1], col[2]);
    }
  }
  return img;
}

}  // namespace objattr
