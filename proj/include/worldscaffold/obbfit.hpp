#pragma once

// Object point extraction, multiscale erosion, box fitting and detection
// fusion.

#include <array>
#include <vector>

#include "worldscaffold/cloud.hpp"
#include "worldscaffold/floor_align.hpp"
#include "worldscaffold/geom.hpp"
#include "worldscaffold/result.hpp"

namespace worldscaffold::obbfit {

using geom::Obb;
using geom::Vec2;
using geom::Vec3;

inline constexpr double kGtScore = 1.001;

struct Detection2d {
  std::array<double, 4> box{};  // x1, y1, x2, y2 in pixels
  double score = 0.0;
  int label = -1;
  bool is_gt = false;
  int frame = -1;

  void validate() const;  // x2 > x1, y2 > y1, finite
};

double iou2d(const Detection2d& a, const Detection2d& b);

/// Concatenates GT and detector boxes, then runs greedy NMS per (frame, label)
/// twice. Equal scores keep GT boxes first. Output is grouped by frame and
/// label and sorted by descending score within a group.
std::vector<Detection2d> fuse_detections(const std::vector<Detection2d>& dets, const std::vector<Detection2d>& gts,
                                         double iou_thr = 0.5);

/// Greedy NMS on one group, suppressing IoU ≥ thr.
std::vector<Detection2d> nms(std::vector<Detection2d> boxes, double iou_thr);

/// Filled ellipse of width and height k as row spans [begin, end) relative to
/// the anchor at (k/2, k/2). k ≤ 1 is the single anchor pixel.
struct EllipseRow {
  int dy;
  int begin;
  int end;
};
std::vector<EllipseRow> ellipse_element(int k);

/// Binary erosion; pixels whose element reaches outside the image are cleared.
cloud::BinaryMask erode_mask(const cloud::BinaryMask& m, int kernel);

/// Per-pixel world coordinates and confidence of one frame.
struct PointMap {
  int width = 0;
  int height = 0;
  std::vector<Vec3> points;        // row-major
  std::vector<double> confidence;  // row-major
  std::vector<cloud::Rgb> colors;  // optional

  void validate() const;
};

struct ErosionConfig {
  std::vector<int> kernel_sizes{0, 3, 5, 7, 10};
  std::size_t min_points = 50;
  double confidence_floor = 1e-3;
  double confidence_percentile = 5.0;
};

/// max(floor, P_q of the frame's finite confidences).
double confidence_threshold(const PointMap& maps, const ErosionConfig& cfg = {});

/// Pixels (x, y) with x1 ≤ x < x2 and y1 ≤ y < y2, the mask bit set (or no
/// mask), confidence ≥ threshold and finite coordinates.
cloud::PointCloud extract_object_points(const cloud::BinaryMask* mask, const Detection2d& bbox, const PointMap& maps,
                                        double threshold);
cloud::PointCloud extract_object_points(const cloud::BinaryMask* mask, const Detection2d& bbox, const PointMap& maps,
                                        const ErosionConfig& cfg = {});

struct ObbCandidate {
  int erosion_kernel = 0;
  cloud::PointCloud points;
  double volume = 0.0;
};

/// Product of coordinate-wise extents in the floor frame.
double floor_extent_volume(const cloud::PointCloud& points, const floor_align::FloorFrame& floor);

/// Minimum floor-extent volume over erosion levels with ≥ min_points points.
/// Ties go to the kernel listed first.
Result<ObbCandidate> multiscale_select(const cloud::BinaryMask* mask, const Detection2d& bbox, const PointMap& maps,
                                       const floor_align::FloorFrame& floor, const ErosionConfig& cfg = {});

/// Full-rotation box from the sample covariance. Throws InvalidInput for
/// fewer than 4 points.
Obb pca_obb(const cloud::PointCloud& points);

struct Rect2 {
  Vec2 center = Vec2::Zero();
  Vec2 axis = Vec2::UnitX();  // unit direction of the longer side
  double length = 0.0;
  double width = 0.0;
  double area() const { return length * width; }
};

/// Exact minimum-area enclosing rectangle (one side is flush with a hull
/// edge). Throws InvalidInput when the hull has no area.
Rect2 min_area_rectangle(const std::vector<Vec2>& points);

/// Yaw-only box in the floor frame, returned with world corners. yaw is the
/// footprint angle of the longer side, in [−π/2, π/2).
Obb floor_parallel_obb(const std::vector<Vec3>& world_points, const floor_align::FloorFrame& floor);
inline Obb floor_parallel_obb(const cloud::PointCloud& points, const floor_align::FloorFrame& floor) {
  return floor_parallel_obb(points.points, floor);
}

}  // namespace worldscaffold::obbfit
