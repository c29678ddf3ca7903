#include "objattr/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace objattr {

Image::Image(int height, int width, std::uint8_t fill)
    : height_(height), width_(width) {
  if (height < 1 || width < 1) {
    throw InvalidInput("image dimensions must be positive");
  }
  pixels_.assign(pixel_count() * kChannels, fill);
}

Image::Image(int height, int width, std::vector<std::uint8_t> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height < 1 || width < 1) {
    throw InvalidInput("image dimensions must be positive");
  }
  if (pixels_.size() != pixel_count() * kChannels) {
    throw InvalidInput("pixel buffer size does not match H*W*3");
  }
}

void Image::set_pixel(int y, int x, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  at(y, x, 0) = r;
  at(y, x, 1) = g;
  at(y, x, 2) = b;
}

BBox BBox::make(double x1, double y1, double x2, double y2) {
  BBox b{x1, y1, x2, y2};
  if (!b.valid()) {
    std::ostringstream os;
    os << "invalid box (" << x1 << "," << y1 << "," << x2 << "," << y2 << ")";
    throw InvalidInput(os.str());
  }
  return b;
}

bool BBox::valid() const {
  const bool finite = std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
                      std::isfinite(y2);
  return finite && x1 >= 0 && y1 >= 0 && x1 < x2 && y1 < y2;
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double Detection::score_for(const CategoryId& category) const {
  auto it = scores.find(category);
  return it == scores.end() ? 0.0 : it->second;
}

double Detection::best_score() const {
  double best = 0.0;
  for (const auto& [_, s] : scores) best = std::max(best, s);
  return best;
}

}  // namespace objattr
