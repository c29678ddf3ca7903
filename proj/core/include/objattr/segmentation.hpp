#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "objattr/region_set.hpp"
#include "objattr/types.hpp"

namespace objattr {

/// Assignment of every pixel to exactly one of m sub-regions.
class RegionPartition {
 public:
  RegionPartition() = default;

  /// Validates that labels cover [0, m) with every region non-empty.
  static RegionPartition from_labels(int height, int width, std::vector<std::int32_t> labels);

  int height() const { return height_; }
  int width() const { return width_; }
  int region_count() const { return region_count_; }

  std::span<const std::int32_t> labels() const { return labels_; }
  std::int32_t label_at(int y, int x) const {
    return labels_[static_cast<std::size_t>(y) * width_ + x];
  }
  /// Row-major pixel indices belonging to `region`, ascending.
  std::span<const std::int32_t> region_pixels(int region) const { return region_pixels_[region]; }
  std::size_t region_size(int region) const { return region_pixels_[region].size(); }

  /// True when every region forms a single 4-connected component.
  bool is_four_connected() const;

  friend bool operator==(const RegionPartition& a, const RegionPartition& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.labels_ == b.labels_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int region_count_ = 0;
  std::vector<std::int32_t> labels_;
  std::vector<std::vector<std::int32_t>> region_pixels_;
};

struct SlicoOptions {
  int iterations = 10;
};

/// Zero-parameter SLIC (SLICO) in CIELAB with per-cluster adaptive colour
/// normalisation. Fragments smaller than a quarter of the nominal region size
/// are merged into their largest 4-adjacent neighbour.
RegionPartition segment_slico(const Image& image, int target_regions, int iterations = 10);

/// Rectangular rows x cols grid; region id = row * cols + col.
RegionPartition grid_partition(int height, int width, int rows, int cols);

/// Keep pixels of regions in `subset`, set everything else to `baseline` on
/// all channels.
Image reveal(const Image& image, const RegionPartition& partition, const RegionSet& subset,
             std::uint8_t baseline = 0);

/// Writes `<stem>.pgm` (16-bit labels) and `<stem>.json` (region_count,
/// dimensions, provenance). `pgm_path` must end in .pgm.
void save_partition(const std::filesystem::path& pgm_path, const RegionPartition& partition,
                    const nlohmann::json& provenance);
/// Loads a partition written by save_partition; the sidecar is checked if present.
RegionPartition load_partition(const std::filesystem::path& pgm_path);

}  // namespace objattr
