#pragma once

// Floor-aligned and final coordinate frames, manual correction, automated
// XY-plane alignment and box refitting after a transform.

#include <span>
#include <vector>

#include "worldscaffold/cloud.hpp"
#include "worldscaffold/geom.hpp"
#include "worldscaffold/io.hpp"

namespace worldscaffold::floor_align {

using geom::Mat3;
using geom::Obb;
using geom::RigidTransform;
using geom::SimilarityTransform;
using geom::Vec3;

struct FloorMesh {
  std::vector<Vec3> vertices;
  std::vector<io::Face> faces;
  std::vector<cloud::Rgb> colors;  // optional

  void validate() const;
};

/// v ↦ R·(s ⊙ v) + τ. Identity by default.
struct CorrectionTransform {
  Vec3 scale = Vec3::Ones();
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;  // positive finite scale, proper rotation
  Vec3 apply(const Vec3& v) const { return rotation * scale.cwiseProduct(v) + translation; }
};

struct FloorFrame {
  // x_floor = R_align·x + τ_align with R_align = [ℓ₁ | ℓ₂ | n]ᵀ built from the
  // similarity's columns (0, 2, 1). This basis is left-handed, so R_align has
  // determinant −1; the optional mirror restores a proper final rotation.
  RigidTransform alignment;
  RigidTransform final;
  bool mirror_applied = false;
  SimilarityTransform similarity;
};

FloorFrame build_floor_frame(const SimilarityTransform& sim, bool mirror);

/// (1/s)·R·(p − τ) with the frame's similarity (Y-up floor frame).
Vec3 world_to_floor(const FloorFrame& f, const Vec3& p);
/// s·Rᵀ·p + τ.
Vec3 floor_to_world(const FloorFrame& f, const Vec3& p);

std::vector<Vec3> apply_correction(const CorrectionTransform& t, std::span<const Vec3> pts);

struct FloorNormal {
  Vec3 normal = Vec3::UnitZ();
  Vec3 centroid = Vec3::Zero();
};

/// Normal of the face with the largest cross-product magnitude, oriented so
/// that n_z > 0 (for |n_z| ≤ 1e-12 the largest-magnitude component is made
/// positive instead); centroid = vertex mean. Throws InvalidInput if every face is
/// degenerate.
FloorNormal estimate_floor_normal(const FloorMesh& mesh);

/// R = Rz(θz)·Ry(θy)·Rx(θx); returned as (θx, θy, θz). When |cos θy| < 1e-8
/// θx is set to 0 and the remaining rotation folded into θz.
Vec3 euler_zyx(const Mat3& r);
Mat3 from_euler_zyx(const Vec3& angles);

struct XyAlignment {
  RigidTransform transform;
  Vec3 euler_zyx = Vec3::Zero();  // (θx, θy, θz)
  Vec3 floor_normal = Vec3::UnitZ();
  Vec3 intersection = Vec3::Zero();  // p∩ = (n·v̄)·n
};

/// Six-step alignment of the corrected floor to z = 0.
XyAlignment xy_plane_align(const FloorMesh& mesh, const CorrectionTransform& correction);

/// Refits a box after moving the scene by `t`: cloud points inside `box`
/// (local-frame containment) are transformed, the footprint is fitted by 2D
/// PCA on XY and extruded over the transformed Z range. With no inliers the
/// box corners are transformed directly.
Obb refit_obb_after_transform(const Obb& box, const cloud::PointCloud& cloud, const RigidTransform& t);

/// Final upright frame for point-like data: A·(p − o) with A = (1/s)·R and
/// o = τ of the similarity.
Vec3 world_to_final(const FloorFrame& f, const Vec3& p);
geom::Corners world_to_final(const FloorFrame& f, const geom::Corners& c);

struct FinalPose {
  RigidTransform pose;  // proper rotation R·R_world, translation A·(τ_world − o)
  double scale = 1.0;   // 1/s factored out of A
};
FinalPose world_to_final_pose(const FloorFrame& f, const RigidTransform& pose);

/// The composed canonical map T_xy ∘ T_δ ∘ T_auto applied to a point.
Vec3 to_canonical(const FloorFrame& f, const CorrectionTransform& correction, const XyAlignment& xy, const Vec3& p);

}  // namespace worldscaffold::floor_align
