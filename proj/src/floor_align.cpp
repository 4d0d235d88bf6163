#include "worldscaffold/floor_align.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "worldscaffold/error.hpp"

namespace worldscaffold::floor_align {

void FloorMesh::validate() const {
  for (const auto& f : faces) {
    for (std::int32_t v : f) {
      if (v < 0 || std::size_t(v) >= vertices.size()) {
        throw InvalidInput("floor mesh: face index " + std::to_string(v) + " out of range");
      }
    }
  }
  if (!colors.empty() && colors.size() != vertices.size()) throw InvalidInput("floor mesh: colour count mismatch");
}

void CorrectionTransform::validate() const {
  if (!scale.allFinite() || (scale.array() <= 0.0).any()) throw InvalidInput("correction: scale must be positive");
  if (!rotation.allFinite() || geom::rotation_defect(rotation) > 1e-6) {
    throw InvalidInput("correction: rotation is not a proper rotation");
  }
  if (!translation.allFinite()) throw InvalidInput("correction: non-finite translation");
}

FloorFrame build_floor_frame(const SimilarityTransform& sim, bool mirror) {
  if (!(sim.scale > 0.0) || !std::isfinite(sim.scale)) throw InvalidInput("build_floor_frame: scale must be positive");
  Mat3 basis;
  basis.col(0) = sim.rotation.col(0);
  basis.col(1) = sim.rotation.col(2);
  basis.col(2) = sim.rotation.col(1);
  FloorFrame f;
  f.similarity = sim;
  f.alignment.rotation = basis.transpose();
  f.alignment.translation = -(f.alignment.rotation * sim.translation);
  f.mirror_applied = mirror;
  f.final = f.alignment;
  if (mirror) {
    const Mat3 m = Vec3(-1, 1, 1).asDiagonal();
    f.final.rotation = m * f.alignment.rotation;
    f.final.translation = m * f.alignment.translation;
  }
  return f;
}

Vec3 world_to_floor(const FloorFrame& f, const Vec3& p) {
  const auto& s = f.similarity;
  return (s.rotation * (p - s.translation)) / s.scale;
}

Vec3 floor_to_world(const FloorFrame& f, const Vec3& p) {
  const auto& s = f.similarity;
  return s.scale * (s.rotation.transpose() * p) + s.translation;
}

std::vector<Vec3> apply_correction(const CorrectionTransform& t, std::span<const Vec3> pts) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(t.apply(p));
  return out;
}

FloorNormal estimate_floor_normal(const FloorMesh& mesh) {
  mesh.validate();
  FloorNormal out;
  Vec3 best = Vec3::Zero();
  double best_norm = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3 c = (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a);
    const double n = c.norm();
    if (std::isfinite(n) && n > best_norm) {
      best_norm = n;
      best = c;
    }
  }
  if (!(best_norm > 1e-12)) throw InvalidInput("estimate_floor_normal: every face is degenerate");
  out.normal = best / best_norm;
  // Up means n_z > 0; a vertical plane falls back to its dominant component.
  Eigen::Index dom = 2;
  if (std::abs(out.normal.z()) <= 1e-12) out.normal.cwiseAbs().maxCoeff(&dom);
  if (out.normal[dom] < 0.0) out.normal = -out.normal;
  for (const auto& v : mesh.vertices) out.centroid += v;
  out.centroid /= double(mesh.vertices.size());
  return out;
}

Vec3 euler_zyx(const Mat3& r) {
  const double cy = std::hypot(r(0, 0), r(1, 0));
  const double theta_y = std::atan2(-r(2, 0), cy);
  if (cy < 1e-8) {
    return {0.0, theta_y, std::atan2(-r(0, 1), r(1, 1))};
  }
  return {std::atan2(r(2, 1), r(2, 2)), theta_y, std::atan2(r(1, 0), r(0, 0))};
}

Mat3 from_euler_zyx(const Vec3& a) { return geom::rotation_z(a.z()) * geom::rotation_y(a.y()) * geom::rotation_x(a.x()); }

XyAlignment xy_plane_align(const FloorMesh& mesh, const CorrectionTransform& correction) {
  correction.validate();
  FloorMesh corrected = mesh;
  corrected.vertices = apply_correction(correction, mesh.vertices);
  const FloorNormal fn = estimate_floor_normal(corrected);

  const Mat3 r_norm = geom::rodrigues_align_to_z(fn.normal);
  const Vec3 x_tilde = r_norm * correction.rotation * Vec3::UnitX();
  const double alpha = -std::atan2(x_tilde.y(), x_tilde.x());

  XyAlignment out;
  out.floor_normal = fn.normal;
  out.transform.rotation = geom::rotation_z(alpha) * r_norm;
  out.intersection = fn.normal.dot(fn.centroid) * fn.normal;
  out.transform.translation = -(out.transform.rotation * out.intersection);
  out.euler_zyx = euler_zyx(out.transform.rotation);
  return out;
}

Obb refit_obb_after_transform(const Obb& box, const cloud::PointCloud& cloud, const RigidTransform& t) {
  std::vector<Vec3> inliers;
  for (const auto& p : cloud.points) {
    if (p.allFinite() && geom::obb_contains(box, p, 0.0)) inliers.push_back(t.apply(p));
  }
  if (inliers.empty()) return geom::transform_obb(t, box);

  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : inliers) mean += p.head<2>();
  mean /= double(inliers.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : inliers) {
    const Eigen::Vector2d d = p.head<2>() - mean;
    cov += d * d.transpose();
  }
  if (inliers.size() > 1) cov /= double(inliers.size() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  Eigen::Vector2d u = eig.eigenvectors().col(1);  // largest eigenvalue
  if (std::abs(u.x()) >= std::abs(u.y()) ? u.x() < 0 : u.y() < 0) u = -u;
  const Eigen::Vector2d v(-u.y(), u.x());

  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  double vmin = umin, vmax = -umin, zmin = umin, zmax = -umin;
  for (const auto& p : inliers) {
    const Eigen::Vector2d d = p.head<2>() - mean;
    umin = std::min(umin, d.dot(u));
    umax = std::max(umax, d.dot(u));
    vmin = std::min(vmin, d.dot(v));
    vmax = std::max(vmax, d.dot(v));
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }
  geom::ObbParams params;
  params.rotation << u.x(), v.x(), 0, u.y(), v.y(), 0, 0, 0, 1;
  const Eigen::Vector2d c2 = mean + u * (umin + umax) / 2 + v * (vmin + vmax) / 2;
  params.center = Vec3(c2.x(), c2.y(), (zmin + zmax) / 2);
  params.extents = Vec3(umax - umin, vmax - vmin, zmax - zmin);
  Obb out = geom::make_obb(params, box.label, box.frame);
  out.yaw = std::atan2(u.y(), u.x());
  return out;
}

Vec3 world_to_final(const FloorFrame& f, const Vec3& p) {
  const auto& s = f.similarity;
  return (s.rotation * (p - s.translation)) / s.scale;
}

geom::Corners world_to_final(const FloorFrame& f, const geom::Corners& c) {
  geom::Corners out;
  for (int i = 0; i < 8; ++i) out[i] = world_to_final(f, c[i]);
  return out;
}

FinalPose world_to_final_pose(const FloorFrame& f, const RigidTransform& pose) {
  const auto& s = f.similarity;
  FinalPose out;
  out.pose.rotation = s.rotation * pose.rotation;
  out.pose.translation = (s.rotation * (pose.translation - s.translation)) / s.scale;
  out.scale = 1.0 / s.scale;
  return out;
}

Vec3 to_canonical(const FloorFrame& f, const CorrectionTransform& correction, const XyAlignment& xy, const Vec3& p) {
  return xy.transform.apply(correction.apply(f.final.apply(p)));
}

}  // namespace worldscaffold::floor_align
