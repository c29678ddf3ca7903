#include "objattr/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace objattr {

BackendError::BackendError(Kind kind, const std::string& cause)
    : std::runtime_error(std::string("detector backend ") + to_string(kind) + ": " + cause),
      kind_(kind),
      cause_(cause) {}

const char* to_string(BackendError::Kind kind) {
  switch (kind) {
    case BackendError::Kind::transport: return "transport failure";
    case BackendError::Kind::malformed_response: return "malformed response";
    case BackendError::Kind::timeout: return "timeout";
  }
  return "error";
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

nlohmann::json box_to_json(const BBox& b) { return {b.x1, b.y1, b.x2, b.y2}; }

BBox box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw InvalidInput("box must be [x1,y1,x2,y2]");
  return BBox::make(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                    j[3].get<double>());
}

// Integer pixel window that can contain pixel centres of `box`.
struct PixelRange {
  int x0, x1, y0, y1;  // half-open
};

PixelRange pixel_range(const BBox& box, int height, int width) {
  return {std::max(0, static_cast<int>(std::floor(box.x1 - 0.5))),
          std::min(width, static_cast<int>(std::ceil(box.x2)) + 1),
          std::max(0, static_cast<int>(std::floor(box.y1 - 0.5))),
          std::min(height, static_cast<int>(std::ceil(box.y2)) + 1)};
}

struct Visibility {
  std::size_t total = 0;
  std::size_t visible = 0;
  int min_x = 0, min_y = 0, max_x = -1, max_y = -1;

  double fraction() const { return total == 0 ? 0.0 : double(visible) / double(total); }
};

Visibility measure(const BBox& region, const Image& image, std::uint8_t baseline) {
  Visibility v;
  const auto r = pixel_range(region, image.height(), image.width());
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      if (!region.contains_pixel(x, y)) continue;
      ++v.total;
      if (!image.differs_from(static_cast<std::size_t>(y) * image.width() + x, baseline)) continue;
      if (v.visible == 0) {
        v.min_x = v.max_x = x;
        v.min_y = v.max_y = y;
      } else {
        v.min_x = std::min(v.min_x, x);
        v.max_x = std::max(v.max_x, x);
        v.min_y = std::min(v.min_y, y);
        v.max_y = std::max(v.max_y, y);
      }
      ++v.visible;
    }
  }
  return v;
}

std::size_t pixel_count(const BBox& region, int height, int width) {
  std::size_t n = 0;
  const auto r = pixel_range(region, height, width);
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) n += region.contains_pixel(x, y) ? 1 : 0;
  }
  return n;
}

void truncate_to(DetectionSet& set, int n_max) {
  if (static_cast<int>(set.detections.size()) <= n_max) return;
  std::stable_sort(set.detections.begin(), set.detections.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.best_score() > b.best_score();
                   });
  set.detections.resize(static_cast<std::size_t>(n_max));
}

}  // namespace

void BlobWorld::validate(int height, int width) const {
  for (const auto& o : objects) {
    if (!o.region.valid() || o.region.x2 > width || o.region.y2 > height) {
      throw InvalidInput("blob region outside image bounds");
    }
    if (pixel_count(o.region, height, width) == 0) {
      throw InvalidInput("blob region covers no pixel centre");
    }
    if (!std::isfinite(o.exponent) || o.exponent < 0) {
      throw InvalidInput("blob exponent must be finite and >= 0");
    }
    if (o.inhibitor) {
      const auto& inh = *o.inhibitor;
      if (!inh.region.valid() || inh.region.x2 > width || inh.region.y2 > height ||
          pixel_count(inh.region, height, width) == 0) {
        throw InvalidInput("inhibitor region outside image bounds");
      }
      if (!(inh.weight >= 0 && inh.weight <= 1)) {
        throw InvalidInput("inhibitor weight must lie in [0,1]");
      }
    }
  }
}

nlohmann::json BlobWorld::to_json() const {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : objects) {
    nlohmann::json j = {{"region", box_to_json(o.region)},
                        {"category", o.category},
                        {"exponent", o.exponent}};
    if (o.inhibitor) {
      j["inhibitor"] = {{"region", box_to_json(o.inhibitor->region)},
                        {"weight", o.inhibitor->weight}};
    }
    objs.push_back(std::move(j));
  }
  return {{"objects", std::move(objs)}};
}

BlobWorld BlobWorld::from_json(const nlohmann::json& j) {
  BlobWorld world;
  try {
    for (const auto& o : j.at("objects")) {
      BlobObject obj;
      obj.region = box_from_json(o.at("region"));
      obj.category = o.at("category").get<std::string>();
      obj.exponent = o.value("exponent", 1.0);
      if (o.contains("inhibitor") && !o.at("inhibitor").is_null()) {
        const auto& inh = o.at("inhibitor");
        obj.inhibitor = Inhibitor{box_from_json(inh.at("region")), inh.at("weight").get<double>()};
      }
      world.objects.push_back(std::move(obj));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("blob world: ") + e.what());
  }
  return world;
}

DetectionSet detect_synthetic_blob(const BlobWorld& world, const Image& image,
                                   std::uint8_t baseline) {
  DetectionSet out;
  for (const auto& o : world.objects) {
    const Visibility v = measure(o.region, image, baseline);
    if (v.visible == 0) continue;
    double u = 0.0;
    double w = 0.0;
    if (o.inhibitor) {
      u = measure(o.inhibitor->region, image, baseline).fraction();
      w = o.inhibitor->weight;
    }
    const double score = std::pow(v.fraction(), o.exponent) * (1.0 - w * u);
    Detection d;
    d.box = BBox{double(v.min_x), double(v.min_y), double(v.max_x + 1), double(v.max_y + 1)};
    d.scores[o.category] = std::clamp(score, 0.0, 1.0);
    out.detections.push_back(std::move(d));
  }
  return out;
}

BlobDetector::BlobDetector(BlobWorld world, std::uint8_t baseline, int n_max)
    : world_(std::move(world)), baseline_(baseline), n_max_(n_max) {
  if (n_max < 1) throw InvalidInput("n_max must be >= 1");
}

DetectionSet BlobDetector::detect(const Image& image) const {
  DetectionSet out = detect_synthetic_blob(world_, image, baseline_);
  truncate_to(out, n_max_);
  return out;
}

std::string BlobDetector::fingerprint() const {
  const std::string canon = world_.to_json().dump() + "|baseline=" + std::to_string(baseline_) +
                            "|n_max=" + std::to_string(n_max_);
  return "blob:" + fnv1a_hex(canon);
}

ThresholdDetector::ThresholdDetector(std::shared_ptr<const Detector> inner, double threshold)
    : inner_(std::move(inner)), threshold_(threshold) {
  if (!(threshold >= 0 && threshold <= 1)) throw InvalidInput("threshold must lie in [0,1]");
}

DetectionSet ThresholdDetector::detect(const Image& image) const {
  DetectionSet out = inner_->detect(image);
  std::erase_if(out.detections,
                [this](const Detection& d) { return d.best_score() < threshold_; });
  return out;
}

std::string ThresholdDetector::fingerprint() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", threshold_);
  return inner_->fingerprint() + "|threshold=" + buf;
}

IouOnlyDetector::IouOnlyDetector(std::shared_ptr<const Detector> inner)
    : inner_(std::move(inner)) {}

DetectionSet IouOnlyDetector::detect(const Image& image) const {
  DetectionSet out = inner_->detect(image);
  out.scores_available = false;
  return out;
}

std::string IouOnlyDetector::fingerprint() const { return inner_->fingerprint() + "|iou-only"; }

DetectionSet CountingDetector::detect(const Image& image) const {
  calls_.fetch_add(1);
  return inner_.detect(image);
}

void DetectorSpec::validate() const {
  if (n_max < 1) throw InvalidInput("n_max must be >= 1");
  if (score_threshold && !(*score_threshold >= 0 && *score_threshold <= 1)) {
    throw InvalidInput("score_threshold must lie in [0,1]");
  }
}

}  // namespace objattr
