#include "objattr/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "objattr/image_io.hpp"

namespace objattr {

RegionPartition RegionPartition::from_labels(int height, int width,
                                             std::vector<std::int32_t> labels) {
  if (height < 1 || width < 1) throw InvalidInput("partition dimensions must be positive");
  if (labels.size() != static_cast<std::size_t>(height) * width) {
    throw InvalidInput("label map size does not match H*W");
  }
  RegionPartition p;
  p.height_ = height;
  p.width_ = width;
  std::int32_t max_label = -1;
  for (auto l : labels) {
    if (l < 0) throw InvalidInput("negative region label");
    max_label = std::max(max_label, l);
  }
  p.region_count_ = max_label + 1;
  p.region_pixels_.assign(p.region_count_, {});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    p.region_pixels_[labels[i]].push_back(static_cast<std::int32_t>(i));
  }
  for (int r = 0; r < p.region_count_; ++r) {
    if (p.region_pixels_[r].empty()) {
      throw InvalidInput("region " + std::to_string(r) + " is empty");
    }
  }
  p.labels_ = std::move(labels);
  return p;
}

bool RegionPartition::is_four_connected() const {
  std::vector<char> seen(labels_.size(), 0);
  std::vector<std::int32_t> stack;
  for (int r = 0; r < region_count_; ++r) {
    const auto& px = region_pixels_[r];
    stack.assign(1, px.front());
    seen[px.front()] = 1;
    std::size_t reached = 0;
    while (!stack.empty()) {
      const std::int32_t i = stack.back();
      stack.pop_back();
      ++reached;
      const int y = i / width_;
      const int x = i % width_;
      const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& n : nbr) {
        if (n[0] < 0 || n[0] >= width_ || n[1] < 0 || n[1] >= height_) continue;
        const std::int32_t j = n[1] * width_ + n[0];
        if (!seen[j] && labels_[j] == r) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
    if (reached != px.size()) return false;
  }
  return true;
}

RegionPartition grid_partition(int height, int width, int rows, int cols) {
  if (rows < 1 || cols < 1 || rows > height || cols > width) {
    throw InvalidInput("grid must have 1 <= rows <= H and 1 <= cols <= W");
  }
  std::vector<std::int32_t> labels(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    const int r = static_cast<int>(static_cast<long long>(y) * rows / height);
    for (int x = 0; x < width; ++x) {
      const int c = static_cast<int>(static_cast<long long>(x) * cols / width);
      labels[static_cast<std::size_t>(y) * width + x] = r * cols + c;
    }
  }
  return RegionPartition::from_labels(height, width, std::move(labels));
}

Image reveal(const Image& image, const RegionPartition& partition, const RegionSet& subset,
             std::uint8_t baseline) {
  if (image.height() != partition.height() || image.width() != partition.width()) {
    throw InvalidInput("partition does not match image dimensions");
  }
  if (subset.universe() != partition.region_count()) {
    throw InvalidInput("subset universe " + std::to_string(subset.universe()) +
                       " does not match region count " +
                       std::to_string(partition.region_count()));
  }
  Image out(image.height(), image.width(), baseline);
  const auto src = image.data();
  auto dst = out.data();
  for (int r : subset.members()) {
    for (auto i : partition.region_pixels(r)) {
      const std::size_t o = static_cast<std::size_t>(i) * Image::kChannels;
      dst[o] = src[o];
      dst[o + 1] = src[o + 1];
      dst[o + 2] = src[o + 2];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SLICO

namespace {

struct Lab {
  double l, a, b;
};

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

Lab rgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = srgb_to_linear(r8 / 255.0);
  const double g = srgb_to_linear(g8 / 255.0);
  const double b = srgb_to_linear(b8 / 255.0);

  // D65 reference white.
  const double xr = (r * 0.4124564 + g * 0.3575761 + b * 0.1804375) / 0.950456;
  const double yr = (r * 0.2126729 + g * 0.7151522 + b * 0.0721750) / 1.0;
  const double zr = (r * 0.0193339 + g * 0.1191920 + b * 0.9503041) / 1.088754;

  constexpr double kEpsilon = 0.008856;
  constexpr double kKappa = 903.3;
  auto f = [](double t) { return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0; };
  const double fx = f(xr);
  const double fy = f(yr);
  const double fz = f(zr);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double lab_dist2(const Lab& p, const Lab& q) {
  const double dl = p.l - q.l;
  const double da = p.a - q.a;
  const double db = p.b - q.b;
  return dl * dl + da * da + db * db;
}

struct Seed {
  Lab lab;
  double x, y;
};

// Gradient magnitude with clamped borders, used to nudge seeds off edges.
std::vector<double> lab_edges(const std::vector<Lab>& lab, int h, int w) {
  std::vector<double> edges(lab.size(), 0.0);
  auto idx = [w](int y, int x) { return static_cast<std::size_t>(y) * w + x; };
  for (int y = 0; y < h; ++y) {
    const int yu = std::max(0, y - 1);
    const int yd = std::min(h - 1, y + 1);
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(0, x - 1);
      const int xr = std::min(w - 1, x + 1);
      edges[idx(y, x)] =
          lab_dist2(lab[idx(y, xl)], lab[idx(y, xr)]) + lab_dist2(lab[idx(yu, x)], lab[idx(yd, x)]);
    }
  }
  return edges;
}

std::vector<Seed> grid_seeds(const std::vector<Lab>& lab, const std::vector<double>& edges, int h,
                             int w, int k) {
  int nx = static_cast<int>(std::lround(std::sqrt(static_cast<double>(k) * w / h)));
  nx = std::clamp(nx, 1, w);
  int ny = static_cast<int>(std::lround(static_cast<double>(k) / nx));
  ny = std::clamp(ny, 1, h);

  std::vector<Seed> seeds;
  seeds.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    const int sy = static_cast<int>((j + 0.5) * h / ny);
    for (int i = 0; i < nx; ++i) {
      const int sx = static_cast<int>((i + 0.5) * w / nx);
      // Move to the lowest-gradient pixel of the 3x3 neighbourhood; strict
      // comparison keeps the grid position on flat images.
      int bx = sx;
      int by = sy;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int px = sx + dx;
          const int py = sy + dy;
          if (px < 0 || px >= w || py < 0 || py >= h) continue;
          if (edges[static_cast<std::size_t>(py) * w + px] <
              edges[static_cast<std::size_t>(by) * w + bx]) {
            bx = px;
            by = py;
          }
        }
      }
      // An unmoved seed sits at the exact cell centre in pixel-index
      // coordinates, so cell borders do not fall on pixel ties.
      const double cx = bx == sx ? (i + 0.5) * w / nx - 0.5 : double(bx);
      const double cy = by == sy ? (j + 0.5) * h / ny - 0.5 : double(by);
      seeds.push_back({lab[static_cast<std::size_t>(by) * w + bx], cx, cy});
    }
  }
  return seeds;
}

// Union of 4-connected components: fragments below `min_size` are absorbed by
// their largest neighbour, then labels are renumbered in raster order.
std::vector<std::int32_t> enforce_connectivity(const std::vector<std::int32_t>& labels, int h,
                                               int w, double min_size) {
  const std::size_t n = labels.size();
  std::vector<std::int32_t> comp(n, -1);
  std::vector<std::size_t> comp_size;
  std::deque<std::int32_t> queue;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const auto id = static_cast<std::int32_t>(comp_size.size());
    comp[start] = id;
    queue.assign(1, static_cast<std::int32_t>(start));
    std::size_t size = 0;
    while (!queue.empty()) {
      const std::int32_t i = queue.front();
      queue.pop_front();
      ++size;
      const int y = i / w;
      const int x = i % w;
      const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& q : nbr) {
        if (q[0] < 0 || q[0] >= w || q[1] < 0 || q[1] >= h) continue;
        const std::int32_t j = q[1] * w + q[0];
        if (comp[j] < 0 && labels[j] == labels[start]) {
          comp[j] = id;
          queue.push_back(j);
        }
      }
    }
    comp_size.push_back(size);
  }

  const std::size_t ncomp = comp_size.size();
  std::vector<std::set<std::int32_t>> adjacent(ncomp);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int32_t c = comp[static_cast<std::size_t>(y) * w + x];
      if (x + 1 < w) {
        const std::int32_t d = comp[static_cast<std::size_t>(y) * w + x + 1];
        if (d != c) {
          adjacent[c].insert(d);
          adjacent[d].insert(c);
        }
      }
      if (y + 1 < h) {
        const std::int32_t d = comp[static_cast<std::size_t>(y + 1) * w + x];
        if (d != c) {
          adjacent[c].insert(d);
          adjacent[d].insert(c);
        }
      }
    }
  }

  // Disjoint-set forest over components; a root owns size and adjacency.
  std::vector<std::int32_t> parent(ncomp);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](std::int32_t c) {
    while (parent[c] != c) {
      parent[c] = parent[parent[c]];
      c = parent[c];
    }
    return c;
  };

  std::set<std::pair<std::size_t, std::int32_t>> small;
  for (std::size_t c = 0; c < ncomp; ++c) {
    if (static_cast<double>(comp_size[c]) < min_size) {
      small.insert({comp_size[c], static_cast<std::int32_t>(c)});
    }
  }
  while (!small.empty() && ncomp > 1) {
    const auto [size, c] = *small.begin();
    small.erase(small.begin());
    if (find(c) != c) continue;
    std::int32_t best = -1;
    for (auto a : adjacent[c]) {
      const std::int32_t r = find(a);
      if (r == c) continue;
      if (best < 0 || comp_size[r] > comp_size[best] ||
          (comp_size[r] == comp_size[best] && r < best)) {
        best = r;
      }
    }
    if (best < 0) break;  // single component left
    small.erase({comp_size[best], best});
    parent[c] = best;
    comp_size[best] += comp_size[c];
    for (auto a : adjacent[c]) {
      const std::int32_t r = find(a);
      if (r != best) adjacent[best].insert(r);
    }
    adjacent[c].clear();
    if (static_cast<double>(comp_size[best]) < min_size) small.insert({comp_size[best], best});
  }

  std::vector<std::int32_t> remap(ncomp, -1);
  std::vector<std::int32_t> out(n);
  std::int32_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t r = find(comp[i]);
    if (remap[r] < 0) remap[r] = next++;
    out[i] = remap[r];
  }
  return out;
}

}  // namespace

RegionPartition segment_slico(const Image& image, int target_regions, int iterations) {
  const int h = image.height();
  const int w = image.width();
  if (h < 2 || w < 2) throw InvalidInput("segmentation needs an image of at least 2x2 pixels");
  const long long n = static_cast<long long>(h) * w;
  if (target_regions < 2 || target_regions > n) {
    throw InvalidInput("target_regions must lie in [2, H*W]");
  }
  if (iterations < 1) throw InvalidInput("iterations must be >= 1");

  std::vector<Lab> lab(static_cast<std::size_t>(n));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      lab[static_cast<std::size_t>(y) * w + x] =
          rgb_to_lab(image.at(y, x, 0), image.at(y, x, 1), image.at(y, x, 2));
    }
  }
  const auto edges = lab_edges(lab, h, w);
  std::vector<Seed> seeds = grid_seeds(lab, edges, h, w, target_regions);
  const std::size_t k = seeds.size();

  const double spacing = std::sqrt(static_cast<double>(n) / static_cast<double>(k));
  const double inv_xy = 1.0 / (spacing * spacing);
  int offset = static_cast<int>(std::ceil(spacing)) + 2;
  if (spacing < 10) offset = static_cast<int>(std::ceil(offset * 1.5));

  std::vector<std::int32_t> labels(static_cast<std::size_t>(n), -1);
  std::vector<double> best(static_cast<std::size_t>(n));
  std::vector<double> color_dist(static_cast<std::size_t>(n));
  // Adaptive per-cluster colour normaliser: running max of in-cluster colour
  // distance, starting at 10^2.
  std::vector<double> max_lab(k, 100.0);

  for (int it = 0; it < iterations; ++it) {
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < k; ++c) {
      const Seed& s = seeds[c];
      const int y1 = std::max(0, static_cast<int>(s.y) - offset);
      const int y2 = std::min(h, static_cast<int>(s.y) + offset + 1);
      const int x1 = std::max(0, static_cast<int>(s.x) - offset);
      const int x2 = std::min(w, static_cast<int>(s.x) + offset + 1);
      for (int y = y1; y < y2; ++y) {
        for (int x = x1; x < x2; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          const double dc = lab_dist2(lab[i], s.lab);
          const double dx = x - s.x;
          const double dy = y - s.y;
          const double d = dc / max_lab[c] + (dx * dx + dy * dy) * inv_xy;
          // Clusters are visited in ascending id; strict '<' keeps the lowest id on ties.
          if (d < best[i]) {
            best[i] = d;
            labels[i] = static_cast<std::int32_t>(c);
            color_dist[i] = dc;
          }
        }
      }
    }
    // Pixels outside every window keep their previous label; on the first
    // pass fall back to the nearest seed.
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= 0) continue;
      const int y = static_cast<int>(i / w);
      const int x = static_cast<int>(i % w);
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dx = x - seeds[c].x;
        const double dy = y - seeds[c].y;
        const double d = dx * dx + dy * dy;
        if (d < bd) {
          bd = d;
          labels[i] = static_cast<std::int32_t>(c);
        }
      }
      color_dist[i] = lab_dist2(lab[i], seeds[labels[i]].lab);
    }

    std::vector<double> sl(k, 0), sa(k, 0), sb(k, 0), sx(k, 0), sy(k, 0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto c = static_cast<std::size_t>(labels[i]);
      sl[c] += lab[i].l;
      sa[c] += lab[i].a;
      sb[c] += lab[i].b;
      sx[c] += static_cast<double>(i % w);
      sy[c] += static_cast<double>(i / w);
      ++count[c];
      if (std::isfinite(best[i])) max_lab[c] = std::max(max_lab[c], color_dist[i]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) continue;
      const double inv = 1.0 / static_cast<double>(count[c]);
      seeds[c] = {{sl[c] * inv, sa[c] * inv, sb[c] * inv}, sx[c] * inv, sy[c] * inv};
    }
  }

  const double min_size = (static_cast<double>(n) / target_regions) / 4.0;
  return RegionPartition::from_labels(h, w, enforce_connectivity(labels, h, w, min_size));
}

// ---------------------------------------------------------------------------
// Partition files

void save_partition(const std::filesystem::path& pgm_path, const RegionPartition& partition,
                    const nlohmann::json& provenance) {
  if (partition.region_count() > 65536) {
    throw InvalidInput("partition has more regions than a 16-bit label map can hold");
  }
  std::vector<std::uint16_t> values(partition.labels().begin(), partition.labels().end());
  write_pgm16(pgm_path, partition.height(), partition.width(), values);
  nlohmann::json meta = {{"region_count", partition.region_count()},
                         {"height", partition.height()},
                         {"width", partition.width()},
                         {"provenance", provenance}};
  auto sidecar = pgm_path;
  sidecar.replace_extension(".json");
  write_file_atomic(sidecar, meta.dump(2) + "\n");
}

RegionPartition load_partition(const std::filesystem::path& pgm_path) {
  int h = 0;
  int w = 0;
  const auto values = read_pgm16(pgm_path, h, w);
  std::vector<std::int32_t> labels(values.begin(), values.end());
  auto partition = RegionPartition::from_labels(h, w, std::move(labels));
  auto sidecar = pgm_path;
  sidecar.replace_extension(".json");
  if (std::filesystem::exists(sidecar)) {
    const auto meta = nlohmann::json::parse(read_text_file(sidecar));
    if (meta.value("region_count", -1) != partition.region_count()) {
      throw IoError("partition sidecar region_count disagrees with label map: " +
                    sidecar.string());
    }
  }
  return partition;
}

}  // namespace objattr
