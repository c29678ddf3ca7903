#include "objattr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace objattr {

void SuiteSpec::validate() const {
  if (samples < 0) throw InvalidInput("suite sample count must be >= 0");
  if (height < 2 || width < 2) throw InvalidInput("suite images must be at least 2x2");
  if (grid_rows < 1 || grid_cols < 1 || grid_rows > height || grid_cols > width ||
      grid_rows * grid_cols < 2) {
    throw InvalidInput("suite grid must have at least 2 cells and fit the image");
  }
  if (!(min_exponent > 0 && min_exponent <= max_exponent)) {
    throw InvalidInput("suite exponents must satisfy 0 < min <= max");
  }
  if (!(min_extent > 0 && min_extent <= max_extent && max_extent <= 1)) {
    throw InvalidInput("suite extents must satisfy 0 < min <= max <= 1");
  }
  if (category.empty()) throw InvalidInput("suite category must be non-empty");
}

SyntheticSample make_blob_sample(const SuiteSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> texture(16, 255);

  auto side = [&](int full) {
    const double f = spec.min_extent + (spec.max_extent - spec.min_extent) * unit(rng);
    return std::clamp(static_cast<int>(std::lround(f * full)), 1, full);
  };
  const int bw = side(spec.width);
  const int bh = side(spec.height);
  const int x1 = std::uniform_int_distribution<int>(0, spec.width - bw)(rng);
  const int y1 = std::uniform_int_distribution<int>(0, spec.height - bh)(rng);
  const double p = spec.min_exponent + (spec.max_exponent - spec.min_exponent) * unit(rng);

  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(spec.height) * spec.width * 3);
  for (auto& v : pixels) v = static_cast<std::uint8_t>(texture(rng));

  // Pixel centres fall inside [x1, x1+bw] x [y1, y1+bh] for exactly bw x bh pixels.
  const BBox box = BBox::make(x1, y1, x1 + bw, y1 + bh);
  SyntheticSample s{Image(spec.height, spec.width, std::move(pixels)),
                    BlobWorld{{BlobObject{box, spec.category, p, std::nullopt}}},
                    grid_partition(spec.height, spec.width, spec.grid_rows, spec.grid_cols),
                    ExplanationTarget{box, spec.category}};
  s.world.validate(spec.height, spec.width);
  return s;
}

std::vector<SyntheticSample> make_blob_suite(const SuiteSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<SyntheticSample> suite;
  suite.reserve(spec.samples);
  for (int i = 0; i < spec.samples; ++i) suite.push_back(make_blob_sample(spec, rng));
  return suite;
}

std::vector<int> random_ordering(int m, std::mt19937_64& rng) {
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with an explicit draw so results do not depend on std::shuffle.
  for (int i = m - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

std::vector<int> reversed(std::vector<int> order) {
  std::reverse(order.begin(), order.end());
  return order;
}

}  // namespace objattr
