#pragma once

// Point-cloud filtering, foreground partitioning, merging and voxel
// deduplication.

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "worldscaffold/geom.hpp"

namespace worldscaffold::cloud {

using geom::Vec3;
using Rgb = std::array<std::uint8_t, 3>;

/// Points with optional per-point colour and confidence. An empty `colors`
/// or `confidence` vector means the attribute is absent.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;
  std::vector<double> confidence;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_colors() const { return !colors.empty(); }
  bool has_confidence() const { return !confidence.empty(); }

  /// Throws InvalidInput when an attribute list is present but mis-sized.
  void validate() const;
  void append(const PointCloud& other);
};

/// Copies the listed points (and their attributes) in the given order.
PointCloud select(const PointCloud& c, std::span<const std::size_t> indices);

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;       // row-major, metres
  std::vector<double> confidence;  // row-major

  double depth_at(int x, int y) const { return depth[std::size_t(y) * width + x]; }
  double confidence_at(int x, int y) const { return confidence[std::size_t(y) * width + x]; }
  void validate() const;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, nonzero = set

  BinaryMask() = default;
  BinaryMask(int w, int h, bool value = false) : width(w), height(h), bits(std::size_t(w) * h, value ? 1 : 0) {}

  bool at(int x, int y) const { return bits[std::size_t(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[std::size_t(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
  void validate() const;
};

/// Zeroes the confidence of pixels with a 3×3 neighbour whose relative depth
/// difference |dp − dq| / max(dp, dq) exceeds `rtol`. Neighbours outside the
/// image are ignored, as are non-finite or non-positive depths.
DepthImage suppress_depth_edges(const DepthImage& d, double rtol = 0.03);

/// Keeps points with confidence ≥ tau and finite coordinates.
PointCloud confidence_filter(const PointCloud& c, double tau);

struct NearBlackResult {
  PointCloud cloud;
  bool attributes_missing = false;  // colours or confidences absent: input passed through
};

/// Drops points whose channels are all ≤ intensity_max while confidence < conf_max.
NearBlackResult suppress_near_black(const PointCloud& c, int intensity_max = 8, double conf_max = 1.0);

/// One point per occupied voxel of the origin-anchored grid: centroid
/// position, channel-mean colour (rounded), max confidence. Output voxels are
/// ordered by the first input point falling into them.
PointCloud voxel_downsample(const PointCloud& c, double size);

/// Splits by mask bit at each point's linear pixel index (y·width + x).
std::pair<PointCloud, PointCloud> partition_foreground(const PointCloud& c, std::span<const std::int64_t> pixel_of,
                                                       const BinaryMask& m);

/// voxel_downsample(static ∪ icp(fg), merge_voxel).
PointCloud merge_frame(const PointCloud& static_cloud, const PointCloud& fg, const geom::RigidTransform& icp,
                       double merge_voxel = 0.02);

}  // namespace worldscaffold::cloud
