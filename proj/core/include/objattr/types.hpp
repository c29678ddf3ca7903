#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace objattr {

/// Thrown when a caller-supplied argument violates a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A metric whose value is not defined for the given input (e.g. zero energy).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Exhaustive search refused because the ground set is too large.
class CostGuardError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Category identifiers are opaque strings; prompt text doubles as a category
/// for grounding-style detectors.
using CategoryId = std::string;

/// H x W x 3 8-bit image, row-major, interleaved channels.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, std::uint8_t fill = 0);
  Image(int height, int width, std::vector<std::uint8_t> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t at(int y, int x, int c) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  std::uint8_t& at(int y, int x, int c) {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  void set_pixel(int y, int x, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  /// True if any channel of pixel `index` (row-major) differs from `value`.
  bool differs_from(std::size_t index, std::uint8_t value) const {
    const std::uint8_t* p = pixels_.data() + index * kChannels;
    return p[0] != value || p[1] != value || p[2] != value;
  }

  std::span<const std::uint8_t> data() const { return pixels_; }
  std::span<std::uint8_t> data() { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Axis-aligned box in continuous, half-open pixel coordinates:
/// area = (x2 - x1) * (y2 - y1). Pixel (x, y) covers [x, x+1) x [y, y+1).
struct BBox {
  double x1 = 0;
  double y1 = 0;
  double x2 = 0;
  double y2 = 0;

  /// Validating factory; throws InvalidInput unless 0 <= x1 < x2, 0 <= y1 < y2.
  static BBox make(double x1, double y1, double x2, double y2);

  bool valid() const;
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  /// Pixel membership by pixel centre, edges inclusive.
  bool contains_pixel(int x, int y) const {
    const double cx = x + 0.5;
    const double cy = y + 0.5;
    return cx >= x1 && cx <= x2 && cy >= y1 && cy <= y2;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

double iou(const BBox& a, const BBox& b);

struct Detection {
  BBox box;
  std::map<CategoryId, double> scores;

  /// Confidence for `category`, 0 when the category is absent.
  double score_for(const CategoryId& category) const;
  /// Highest confidence over all categories.
  double best_score() const;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct DetectionSet {
  std::vector<Detection> detections;
  /// False for confidence-free detectors; scoring then treats any returned
  /// box carrying the target category key as confidence 1.
  bool scores_available = true;

  bool empty() const { return detections.empty(); }
  std::size_t size() const { return detections.size(); }

  friend bool operator==(const DetectionSet&, const DetectionSet&) = default;
};

struct ExplanationTarget {
  BBox box;
  CategoryId category;
};

/// Per-pixel saliency in [0, 1], row-major.
struct SaliencyMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

}  // namespace objattr
