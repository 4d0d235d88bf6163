#include "worldscaffold/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "worldscaffold/error.hpp"

namespace worldscaffold::cloud {

void PointCloud::validate() const {
  if (has_colors() && colors.size() != points.size()) {
    throw InvalidInput("point cloud: " + std::to_string(colors.size()) + " colours for " +
                       std::to_string(points.size()) + " points");
  }
  if (has_confidence() && confidence.size() != points.size()) {
    throw InvalidInput("point cloud: " + std::to_string(confidence.size()) + " confidences for " +
                       std::to_string(points.size()) + " points");
  }
}

void PointCloud::append(const PointCloud& other) {
  validate();
  other.validate();
  // An attribute survives the union only if both sides carry it (or one side is empty).
  const bool keep_colors = (has_colors() || empty()) && (other.has_colors() || other.empty());
  const bool keep_conf = (has_confidence() || empty()) && (other.has_confidence() || other.empty());
  points.insert(points.end(), other.points.begin(), other.points.end());
  if (keep_colors) colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  else colors.clear();
  if (keep_conf) confidence.insert(confidence.end(), other.confidence.begin(), other.confidence.end());
  else confidence.clear();
  if (colors.size() != points.size()) colors.clear();
  if (confidence.size() != points.size()) confidence.clear();
}

PointCloud select(const PointCloud& c, std::span<const std::size_t> indices) {
  PointCloud out;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.points.push_back(c.points[i]);
  if (c.has_colors()) {
    for (std::size_t i : indices) out.colors.push_back(c.colors[i]);
  }
  if (c.has_confidence()) {
    for (std::size_t i : indices) out.confidence.push_back(c.confidence[i]);
  }
  return out;
}

void DepthImage::validate() const {
  const std::size_t n = std::size_t(std::max(width, 0)) * std::size_t(std::max(height, 0));
  if (width < 0 || height < 0 || depth.size() != n || confidence.size() != n) {
    throw InvalidInput("depth image: buffers do not match " + std::to_string(width) + "x" + std::to_string(height));
  }
}

std::size_t BinaryMask::count() const {
  return std::size_t(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

void BinaryMask::validate() const {
  if (width < 0 || height < 0 || bits.size() != std::size_t(width) * std::size_t(height)) {
    throw InvalidInput("mask: buffer does not match " + std::to_string(width) + "x" + std::to_string(height));
  }
}

DepthImage suppress_depth_edges(const DepthImage& d, double rtol) {
  d.validate();
  DepthImage out = d;
  const auto usable = [](double z) { return std::isfinite(z) && z > 0.0; };
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const double dp = d.depth_at(x, y);
      if (!usable(dp)) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy) {
        for (int dx = -1; dx <= 1 && !edge; ++dx) {
          const int qx = x + dx, qy = y + dy;
          if ((dx == 0 && dy == 0) || qx < 0 || qy < 0 || qx >= d.width || qy >= d.height) continue;
          const double dq = d.depth_at(qx, qy);
          if (!usable(dq)) continue;
          edge = std::abs(dp - dq) / std::max(dp, dq) > rtol;
        }
      }
      if (edge) out.confidence[std::size_t(y) * d.width + x] = 0.0;
    }
  }
  return out;
}

PointCloud confidence_filter(const PointCloud& c, double tau) {
  c.validate();
  if (!c.has_confidence() && !c.empty()) throw InvalidInput("confidence_filter: cloud has no confidence values");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.confidence[i] >= tau && c.points[i].allFinite()) keep.push_back(i);
  }
  return select(c, keep);
}

NearBlackResult suppress_near_black(const PointCloud& c, int intensity_max, double conf_max) {
  c.validate();
  if (c.empty()) return {c, false};
  if (!c.has_colors() || !c.has_confidence()) return {c, true};
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Rgb& rgb = c.colors[i];
    const bool dark = rgb[0] <= intensity_max && rgb[1] <= intensity_max && rgb[2] <= intensity_max;
    if (!(dark && c.confidence[i] < conf_max)) keep.push_back(i);
  }
  return {select(c, keep), false};
}

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= std::uint64_t(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return std::size_t(h);
  }
};

struct Accum {
  Vec3 sum = Vec3::Zero();
  std::array<double, 3> rgb{0, 0, 0};
  double conf = -std::numeric_limits<double>::infinity();
  std::size_t count = 0;
};

}  // namespace

PointCloud voxel_downsample(const PointCloud& c, double size) {
  if (!(size > 0.0) || !std::isfinite(size)) throw InvalidInput("voxel_downsample: voxel size must be positive");
  c.validate();
  std::unordered_map<VoxelKey, std::size_t, VoxelHash> slot;
  std::vector<Accum> acc;
  slot.reserve(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec3& p = c.points[i];
    if (!p.allFinite()) continue;
    const VoxelKey key{std::int64_t(std::floor(p.x() / size)), std::int64_t(std::floor(p.y() / size)),
                       std::int64_t(std::floor(p.z() / size))};
    auto [it, fresh] = slot.try_emplace(key, acc.size());
    if (fresh) acc.emplace_back();
    Accum& a = acc[it->second];
    a.sum += p;
    if (c.has_colors()) {
      for (int k = 0; k < 3; ++k) a.rgb[k] += c.colors[i][k];
    }
    if (c.has_confidence()) a.conf = std::max(a.conf, c.confidence[i]);
    ++a.count;
  }
  PointCloud out;
  out.points.reserve(acc.size());
  for (const Accum& a : acc) {
    out.points.push_back(a.sum / double(a.count));
    if (c.has_colors()) {
      Rgb rgb;
      for (int k = 0; k < 3; ++k) rgb[k] = std::uint8_t(std::lround(a.rgb[k] / double(a.count)));
      out.colors.push_back(rgb);
    }
    if (c.has_confidence()) out.confidence.push_back(a.conf);
  }
  return out;
}

std::pair<PointCloud, PointCloud> partition_foreground(const PointCloud& c, std::span<const std::int64_t> pixel_of,
                                                       const BinaryMask& m) {
  c.validate();
  m.validate();
  if (pixel_of.size() != c.size()) throw InvalidInput("partition_foreground: one pixel index per point required");
  const std::int64_t limit = std::int64_t(m.bits.size());
  std::vector<std::size_t> fg, bg;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const std::int64_t px = pixel_of[k];
    if (px < 0 || px >= limit) {
      throw InvalidInput("partition_foreground: pixel index " + std::to_string(px) + " of point " +
                         std::to_string(k) + " outside the " + std::to_string(m.width) + "x" +
                         std::to_string(m.height) + " mask");
    }
    (m.bits[std::size_t(px)] ? fg : bg).push_back(k);
  }
  return {select(c, fg), select(c, bg)};
}

PointCloud merge_frame(const PointCloud& static_cloud, const PointCloud& fg, const geom::RigidTransform& icp,
                       double merge_voxel) {
  PointCloud moved = fg;
  for (auto& p : moved.points) p = icp.apply(p);
  PointCloud all = static_cloud;
  all.append(moved);
  return voxel_downsample(all, merge_voxel);
}

}  // namespace worldscaffold::cloud
