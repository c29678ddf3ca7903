#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "objattr/detector.hpp"
#include "objattr/segmentation.hpp"

namespace objattr {

/// Parameters for a family of single-blob benchmark samples on grid partitions.
struct SuiteSpec {
  int samples = 20;
  std::uint64_t seed = 0;
  int height = 48;
  int width = 48;
  int grid_rows = 4;
  int grid_cols = 4;
  double min_exponent = 0.5;
  double max_exponent = 2.0;
  /// Blob side length as a fraction of the image side.
  double min_extent = 0.2;
  double max_extent = 0.5;
  CategoryId category = "blob";

  void validate() const;
};

struct SyntheticSample {
  Image image;
  BlobWorld world;
  RegionPartition partition;
  ExplanationTarget target;
};

/// Textured image (every channel in [16, 255]) with one blob; the target is
/// the blob's own box.
SyntheticSample make_blob_sample(const SuiteSpec& spec, std::mt19937_64& rng);

/// Deterministic in spec.seed.
std::vector<SyntheticSample> make_blob_suite(const SuiteSpec& spec);

std::vector<int> random_ordering(int m, std::mt19937_64& rng);
std::vector<int> reversed(std::vector<int> order);

}  // namespace objattr
