#include "worldscaffold/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/SVD>

#include "worldscaffold/error.hpp"

namespace worldscaffold::geom {

Mat3 rotation_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

Mat3 rotation_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Mat3 rotation_x(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

double rotation_defect(const Mat3& r) {
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(r.determinant() - 1.0));
}

Mat3 project_to_so3(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (u * v.transpose()).determinant() < 0 ? -1.0 : 1.0;
  return u * d * v.transpose();
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation.transpose();
  return {rt, -(rt * translation)};
}

RigidTransform compose_rigid(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

std::vector<Vec3> apply_rigid(const RigidTransform& t, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(t.apply(p));
  return out;
}

Mat3 rodrigues_align_to_z(const Vec3& normal) {
  const double len = normal.norm();
  if (!(len > 1e-9)) throw InvalidInput("rodrigues_align_to_z: zero-length normal");
  const Vec3 n = normal / len;
  const Vec3 z = Vec3::UnitZ();
  const Vec3 axis_raw = n.cross(z);
  const double s = axis_raw.norm();
  const double c = n.dot(z);
  if (s < 1e-15) {
    if (c > 0) return Mat3::Identity();
    return rotation_x(M_PI);
  }
  const Vec3 k = axis_raw / s;
  Mat3 kx;
  kx << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return c * Mat3::Identity() + s * kx + (1.0 - c) * (k * k.transpose());
}

RigidTransform relative_pose(const RigidTransform& prev, const RigidTransform& cur) {
  const Mat3 r_rel = cur.rotation * prev.rotation.transpose();
  return {r_rel, cur.translation - r_rel * prev.translation};
}

Vec3 pinhole_backproject(double u, double v, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0)) throw InvalidInput("pinhole_backproject: depth must be positive");
  if (!(k.fx > 0) || !(k.fy > 0)) throw InvalidInput("pinhole_backproject: focal lengths must be positive");
  return {(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth};
}

// ---------------------------------------------------------------------------

Vec3 corner_sign(int i) {
  static constexpr int kSigns[8][3] = {{-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
                                       {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1}};
  return {double(kSigns[i][0]), double(kSigns[i][1]), double(kSigns[i][2])};
}

Corners obb_corners(const ObbParams& p) {
  Corners c;
  for (int i = 0; i < 8; ++i) {
    const Vec3 local = corner_sign(i).cwiseProduct(0.5 * p.extents);
    c[i] = p.rotation * local + p.center;
  }
  return c;
}

Obb make_obb(const ObbParams& p, int label, int frame) {
  Obb box;
  box.corners = obb_corners(p);
  box.center = p.center;
  box.extents = p.extents;
  box.rotation = p.rotation;
  box.label = label;
  box.frame = frame;
  return box;
}

namespace {

// Max over `b` of the distance to a greedily matched, unused point of `a`.
double greedy_match_deviation(const Corners& a, const Corners& b) {
  std::array<bool, 8> used{};
  double worst = 0.0;
  for (const auto& q : b) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 8; ++i) {
      if (used[i]) continue;
      const double d = (a[i] - q).norm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    used[best] = true;
    worst = std::max(worst, best_d);
  }
  return worst;
}

int dominant_index(const Vec3& v) {
  int idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  return idx;
}

struct BoxFit {
  ObbParams params;
  double deviation = std::numeric_limits<double>::infinity();
};

BoxFit fit_box(const Corners& corners) {
  Vec3 center = Vec3::Zero();
  for (const auto& c : corners) center += c;
  center /= 8.0;

  BoxFit best;
  // Any corner has three incident edges among its seven difference vectors.
  std::array<Vec3, 7> diffs;
  for (int j = 1; j < 8; ++j) diffs[j - 1] = corners[j] - corners[0];
  for (int a = 0; a < 7; ++a) {
    for (int b = a + 1; b < 7; ++b) {
      for (int c = b + 1; c < 7; ++c) {
        Mat3 edges;
        edges.col(0) = diffs[a];
        edges.col(1) = diffs[b];
        edges.col(2) = diffs[c];
        Eigen::JacobiSVD<Mat3> svd(edges, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Mat3 q = svd.matrixU() * svd.matrixV().transpose();
        ObbParams p;
        p.center = center;
        for (int k = 0; k < 3; ++k) p.extents[k] = std::abs(q.col(k).dot(edges.col(k)));
        if (q.determinant() < 0) q.col(2) = -q.col(2);
        p.rotation = q;
        const double dev = greedy_match_deviation(corners, obb_corners(p));
        if (dev < best.deviation) {
          best.deviation = dev;
          best.params = p;
        }
      }
    }
  }
  return best;
}

ObbParams canonicalize(const ObbParams& in) {
  const double scale = std::max(1.0, in.extents.maxCoeff());
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    const double ei = in.extents[i], ej = in.extents[j];
    if (std::abs(ei - ej) > 1e-9 * scale) return ei > ej;
    return dominant_index(in.rotation.col(i)) < dominant_index(in.rotation.col(j));
  });
  ObbParams out;
  out.center = in.center;
  for (int k = 0; k < 2; ++k) {
    Vec3 axis = in.rotation.col(order[k]);
    if (axis[dominant_index(axis)] < 0) axis = -axis;
    out.rotation.col(k) = axis;
    out.extents[k] = in.extents[order[k]];
  }
  out.rotation.col(2) = out.rotation.col(0).cross(out.rotation.col(1));
  out.extents[2] = in.extents[order[2]];
  return out;
}

}  // namespace

double box_deviation(const Corners& corners) { return fit_box(corners).deviation; }

ObbParams obb_decompose(const Corners& corners) {
  for (const auto& c : corners) {
    if (!c.allFinite()) throw InvalidInput("obb_decompose: non-finite corner");
  }
  const BoxFit fit = fit_box(corners);
  const double diag = fit.params.extents.norm();
  const double tol = 1e-4 * std::max(1.0, diag);
  if (fit.deviation > tol) {
    throw InvalidInput("obb_decompose: corners are not a box (max deviation " +
                       std::to_string(fit.deviation) + ")");
  }
  return canonicalize(fit.params);
}

Obb obb_from_corners(const Corners& corners, int label, int frame) {
  const ObbParams p = obb_decompose(corners);
  Obb box;
  box.corners = corners;
  box.center = p.center;
  box.extents = p.extents;
  box.rotation = p.rotation;
  box.label = label;
  box.frame = frame;
  return box;
}

double obb_volume(const Obb& box) { return box.extents.prod(); }

Vec3 to_box_local(const Obb& box, const Vec3& p) { return box.rotation.transpose() * (p - box.center); }

bool obb_contains(const Obb& box, const Vec3& p, double tol) {
  const Vec3 local = to_box_local(box, p);
  for (int k = 0; k < 3; ++k) {
    if (std::abs(local[k]) > 0.5 * box.extents[k] + tol) return false;
  }
  return true;
}

Obb transform_obb(const RigidTransform& t, const Obb& box) {
  Obb out = box;
  for (auto& c : out.corners) c = t.apply(c);
  out.center = t.apply(box.center);
  out.rotation = t.rotation * box.rotation;
  out.yaw.reset();
  return out;
}

}  // namespace worldscaffold::geom
