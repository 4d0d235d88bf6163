#pragma once

// Core 3D types and transform algebra.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace worldscaffold::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rotation about +Z by `angle` radians.
Mat3 rotation_z(double angle);
Mat3 rotation_y(double angle);
Mat3 rotation_x(double angle);

/// Max of |RᵀR − I| and |det R − 1|.
double rotation_defect(const Mat3& r);

/// Nearest proper rotation to `m` in the Frobenius sense.
Mat3 project_to_so3(const Mat3& m);

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform translate(const Vec3& t) { return {Mat3::Identity(), t}; }
  static RigidTransform rotate(const Mat3& r) { return {r, Vec3::Zero()}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
};

/// Result applies `b` first, then `a`.
RigidTransform compose_rigid(const RigidTransform& a, const RigidTransform& b);

std::vector<Vec3> apply_rigid(const RigidTransform& t, std::span<const Vec3> points);

struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

enum class PoseConvention { CameraToWorld, WorldToCamera };

/// Proper rotation taking `normal / |normal|` onto +Z via Rodrigues' formula.
/// For normals antipodal to +Z the rotation axis is +X. Throws InvalidInput
/// when |normal| <= 1e-9.
Mat3 rodrigues_align_to_z(const Vec3& normal);

/// Relative motion between consecutive poses: R_rel = R_cur·R_prevᵀ,
/// τ_rel = τ_cur − R_rel·τ_prev.
RigidTransform relative_pose(const RigidTransform& prev, const RigidTransform& cur);

/// Camera-frame point on the pixel ray at the given depth.
Vec3 pinhole_backproject(double u, double v, double depth, const CameraIntrinsics& k);

// ---------------------------------------------------------------------------
// Oriented boxes
// ---------------------------------------------------------------------------

using Corners = std::array<Vec3, 8>;

/// Local half-extent sign pattern for corner `i`. Corners are enumerated as
/// (−,−,−),(+,−,−),(+,+,−),(−,+,−),(−,−,+),(+,−,+),(+,+,+),(−,+,+).
Vec3 corner_sign(int i);

struct ObbParams {
  Vec3 center = Vec3::Zero();
  Vec3 extents = Vec3::Zero();  // full edge lengths along rotation columns
  Mat3 rotation = Mat3::Identity();
};

struct Obb {
  Corners corners{};
  Vec3 center = Vec3::Zero();
  Vec3 extents = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  std::optional<double> yaw;  // set for floor-parallel boxes only
  int label = -1;
  int frame = -1;

  double volume() const { return extents.prod(); }
  ObbParams params() const { return {center, extents, rotation}; }
};

Corners obb_corners(const ObbParams& p);
Obb make_obb(const ObbParams& p, int label = -1, int frame = -1);

/// Recovers (center, extents, rotation) from eight corners given in any order.
/// Axes are ordered by descending extent (ties: the axis whose dominant
/// component has the smaller index comes first); the first two axes have their
/// largest-magnitude component positive and the third completes a right-handed
/// frame. Throws InvalidInput when the corners deviate from a rectangular box
/// by more than 1e-4 (scaled by the box diagonal when it exceeds 1).
ObbParams obb_decompose(const Corners& corners);

/// Max distance between `corners` and the closest rectangular box, after
/// optimal corner matching.
double box_deviation(const Corners& corners);

/// Builds an Obb from corners, filling the parameter fields.
Obb obb_from_corners(const Corners& corners, int label = -1, int frame = -1);

double obb_volume(const Obb& box);

/// Point in the box local frame (origin at the center, axes = rotation columns).
Vec3 to_box_local(const Obb& box, const Vec3& p);
bool obb_contains(const Obb& box, const Vec3& p, double tol = 1e-9);

Obb transform_obb(const RigidTransform& t, const Obb& box);

}  // namespace worldscaffold::geom
