#include "worldscaffold/obbfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>

#include <Eigen/Eigenvalues>

#include "worldscaffold/error.hpp"
#include "worldscaffold/metrics/polygon.hpp"
#include "worldscaffold/registration.hpp"

namespace worldscaffold::obbfit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Wraps an undirected line angle into [−π/2, π/2).
double wrap_half_turn(double a) {
  a = std::fmod(a + M_PI / 2, M_PI);
  if (a < 0) a += M_PI;
  return a - M_PI / 2;
}

double snap_extent(double e, double scale) { return e <= 1e-12 * std::max(1.0, scale) ? 0.0 : e; }

}  // namespace

void Detection2d::validate() const {
  for (double v : box)
    if (!std::isfinite(v)) throw InvalidInput("detection: non-finite box coordinate");
  if (!(box[2] > box[0]) || !(box[3] > box[1])) throw InvalidInput("detection: box must have x2 > x1 and y2 > y1");
}

double iou2d(const Detection2d& a, const Detection2d& b) {
  const double iw = std::min(a.box[2], b.box[2]) - std::max(a.box[0], b.box[0]);
  const double ih = std::min(a.box[3], b.box[3]) - std::max(a.box[1], b.box[1]);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double area_a = (a.box[2] - a.box[0]) * (a.box[3] - a.box[1]);
  const double area_b = (b.box[2] - b.box[0]) * (b.box[3] - b.box[1]);
  return inter / (area_a + area_b - inter);
}

std::vector<Detection2d> nms(std::vector<Detection2d> boxes, double iou_thr) {
  std::stable_sort(boxes.begin(), boxes.end(), [](const Detection2d& a, const Detection2d& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.is_gt && !b.is_gt;
  });
  std::vector<Detection2d> keep;
  for (const auto& d : boxes) {
    bool suppressed = false;
    for (const auto& k : keep) {
      if (iou2d(d, k) >= iou_thr) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) keep.push_back(d);
  }
  return keep;
}

std::vector<Detection2d> fuse_detections(const std::vector<Detection2d>& dets, const std::vector<Detection2d>& gts,
                                         double iou_thr) {
  std::map<std::pair<int, int>, std::vector<Detection2d>> groups;
  for (const auto& g : gts) {
    g.validate();
    if (!g.is_gt || g.score != kGtScore) throw InvalidInput("fuse_detections: GT entries need is_gt and score 1.001");
    groups[{g.frame, g.label}].push_back(g);
  }
  for (const auto& d : dets) {
    d.validate();
    groups[{d.frame, d.label}].push_back(d);
  }
  std::vector<Detection2d> out;
  for (auto& [key, boxes] : groups) {
    auto kept = nms(nms(std::move(boxes), iou_thr), iou_thr);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

std::vector<EllipseRow> ellipse_element(int k) {
  if (k <= 1) return {{0, 0, 1}};
  // Same rasterization as the usual morphology libraries: rows sampled at
  // integer offsets from the anchor, half-width rounded to nearest.
  const int r = k / 2, c = k / 2;
  const double inv_r2 = 1.0 / (double(r) * r);
  std::vector<EllipseRow> rows;
  for (int i = 0; i < k; ++i) {
    const int dy = i - r;
    if (std::abs(dy) > r) continue;
    const int dx = int(std::lrint(c * std::sqrt((double(r) * r - double(dy) * dy) * inv_r2)));
    const int j1 = std::max(c - dx, 0), j2 = std::min(c + dx + 1, k);
    rows.push_back({dy, j1 - c, j2 - c});
  }
  return rows;
}

cloud::BinaryMask erode_mask(const cloud::BinaryMask& m, int kernel) {
  m.validate();
  if (kernel < 0) throw InvalidInput("erode_mask: negative kernel");
  if (kernel == 0) return m;
  const auto element = ellipse_element(kernel);
  const int w = m.width, h = m.height;
  // run[y][x] = number of consecutive set pixels starting at x going right.
  std::vector<int> run(std::size_t(w) * h, 0);
  for (int y = 0; y < h; ++y) {
    int len = 0;
    for (int x = w - 1; x >= 0; --x) {
      len = m.at(x, y) ? len + 1 : 0;
      run[std::size_t(y) * w + x] = len;
    }
  }
  cloud::BinaryMask out(w, h, false);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m.at(x, y)) continue;
      bool ok = true;
      for (const auto& row : element) {
        const int yy = y + row.dy, x0 = x + row.begin, x1 = x + row.end;
        if (yy < 0 || yy >= h || x0 < 0 || x1 > w || run[std::size_t(yy) * w + x0] < row.end - row.begin) {
          ok = false;
          break;
        }
      }
      if (ok) out.set(x, y, true);
    }
  }
  return out;
}

void PointMap::validate() const {
  const std::size_t n = std::size_t(std::max(width, 0)) * std::max(height, 0);
  if (width <= 0 || height <= 0) throw InvalidInput("point map: non-positive dimensions");
  if (points.size() != n || confidence.size() != n) throw InvalidInput("point map: buffer size mismatch");
  if (!colors.empty() && colors.size() != n) throw InvalidInput("point map: colour buffer size mismatch");
}

double confidence_threshold(const PointMap& maps, const ErosionConfig& cfg) {
  std::vector<double> finite;
  finite.reserve(maps.confidence.size());
  for (double c : maps.confidence)
    if (std::isfinite(c)) finite.push_back(c);
  if (finite.empty()) return cfg.confidence_floor;
  return std::max(cfg.confidence_floor, registration::percentile(std::move(finite), cfg.confidence_percentile));
}

cloud::PointCloud extract_object_points(const cloud::BinaryMask* mask, const Detection2d& bbox, const PointMap& maps,
                                        double threshold) {
  maps.validate();
  if (mask && (mask->width != maps.width || mask->height != maps.height)) {
    throw InvalidInput("extract_object_points: mask is " + std::to_string(mask->width) + "x" +
                       std::to_string(mask->height) + ", maps are " + std::to_string(maps.width) + "x" +
                       std::to_string(maps.height));
  }
  const int x_lo = std::max(0, int(std::ceil(bbox.box[0]))), y_lo = std::max(0, int(std::ceil(bbox.box[1])));
  const int x_hi = std::min(maps.width, int(std::ceil(bbox.box[2]))), y_hi = std::min(maps.height, int(std::ceil(bbox.box[3])));
  cloud::PointCloud out;
  const bool colors = !maps.colors.empty();
  for (int y = y_lo; y < y_hi; ++y) {
    for (int x = x_lo; x < x_hi; ++x) {
      if (mask && !mask->at(x, y)) continue;
      const std::size_t i = std::size_t(y) * maps.width + x;
      const double c = maps.confidence[i];
      if (!(c >= threshold) || !maps.points[i].allFinite()) continue;
      out.points.push_back(maps.points[i]);
      out.confidence.push_back(c);
      if (colors) out.colors.push_back(maps.colors[i]);
    }
  }
  return out;
}

cloud::PointCloud extract_object_points(const cloud::BinaryMask* mask, const Detection2d& bbox, const PointMap& maps,
                                        const ErosionConfig& cfg) {
  maps.validate();
  return extract_object_points(mask, bbox, maps, confidence_threshold(maps, cfg));
}

double floor_extent_volume(const cloud::PointCloud& points, const floor_align::FloorFrame& floor) {
  if (points.empty()) return 0.0;
  Vec3 lo = Vec3::Constant(kInf), hi = Vec3::Constant(-kInf);
  for (const auto& p : points.points) {
    const Vec3 q = floor_align::world_to_floor(floor, p);
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  return (hi - lo).prod();
}

Result<ObbCandidate> multiscale_select(const cloud::BinaryMask* mask, const Detection2d& bbox, const PointMap& maps,
                                       const floor_align::FloorFrame& floor, const ErosionConfig& cfg) {
  maps.validate();
  const double threshold = confidence_threshold(maps, cfg);
  std::optional<ObbCandidate> best;
  std::size_t most = 0;
  for (int k : cfg.kernel_sizes) {
    cloud::PointCloud pts;
    if (mask) {
      const cloud::BinaryMask eroded = erode_mask(*mask, k);
      pts = extract_object_points(&eroded, bbox, maps, threshold);
    } else {
      // Without a mask the rectangle itself is eroded.
      cloud::BinaryMask rect(maps.width, maps.height, false);
      for (int y = 0; y < maps.height; ++y)
        for (int x = 0; x < maps.width; ++x)
          if (x >= bbox.box[0] && x < bbox.box[2] && y >= bbox.box[1] && y < bbox.box[3]) rect.set(x, y, true);
      const cloud::BinaryMask eroded = erode_mask(rect, k);
      pts = extract_object_points(&eroded, bbox, maps, threshold);
    }
    most = std::max(most, pts.size());
    if (pts.size() < cfg.min_points) continue;
    const double v = floor_extent_volume(pts, floor);
    if (!best || v < best->volume) best = ObbCandidate{k, std::move(pts), v};
  }
  if (!best) {
    return Rejection{"no erosion level kept " + std::to_string(cfg.min_points) + " points (best " +
                     std::to_string(most) + ")"};
  }
  return *best;
}

Obb pca_obb(const cloud::PointCloud& points) {
  const auto& pts = points.points;
  if (pts.size() < 4) throw InvalidInput("pca_obb: need at least 4 points, got " + std::to_string(pts.size()));
  for (const auto& p : pts)
    if (!p.allFinite()) throw InvalidInput("pca_obb: non-finite point");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= double(pts.size());
  geom::Mat3 cov = geom::Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= double(pts.size() - 1);

  Eigen::SelfAdjointEigenSolver<geom::Mat3> eig(cov);
  std::array<int, 3> order{2, 1, 0};
  const auto ev = eig.eigenvalues();
  const auto dominant = [&](int i) {
    Eigen::Index d;
    eig.eigenvectors().col(i).cwiseAbs().maxCoeff(&d);
    return d;
  };
  const double tie = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (std::abs(ev[a] - ev[b]) > tie) return ev[a] > ev[b];
    return dominant(a) < dominant(b);
  });
  geom::Mat3 axes;
  for (int k = 0; k < 2; ++k) {
    Vec3 a = eig.eigenvectors().col(order[k]);
    Eigen::Index d;
    a.cwiseAbs().maxCoeff(&d);
    if (a[d] < 0) a = -a;
    axes.col(k) = a;
  }
  axes.col(2) = axes.col(0).cross(axes.col(1)).normalized();

  Vec3 qmin = Vec3::Constant(kInf), qmax = Vec3::Constant(-kInf);
  for (const auto& p : pts) {
    const Vec3 q = axes.transpose() * (p - mean);
    qmin = qmin.cwiseMin(q);
    qmax = qmax.cwiseMax(q);
  }
  geom::ObbParams params;
  params.rotation = axes;
  params.center = mean + axes * (qmin + qmax) / 2;
  const Vec3 ext = qmax - qmin;
  const double scale = ext.maxCoeff();
  params.extents = Vec3(snap_extent(ext[0], scale), snap_extent(ext[1], scale), snap_extent(ext[2], scale));
  return geom::make_obb(params);
}

Rect2 min_area_rectangle(const std::vector<Vec2>& points) {
  const metrics::Polygon2 hull = metrics::convex_hull(points);
  const double span = [&] {
    double m = 0;
    for (const auto& p : hull) m = std::max(m, (p - hull.front()).norm());
    return m;
  }();
  if (hull.size() < 3 || std::abs(metrics::signed_area(hull)) <= 1e-12 * std::max(1.0, span * span)) {
    throw InvalidInput("min_area_rectangle: footprint has no area");
  }
  Rect2 best;
  double best_area = kInf;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2 e = hull[(i + 1) % hull.size()] - hull[i];
    const Vec2 u = e.normalized(), v(-u.y(), u.x());
    double umin = kInf, umax = -kInf, vmin = kInf, vmax = -kInf;
    for (const auto& p : hull) {
      umin = std::min(umin, p.dot(u));
      umax = std::max(umax, p.dot(u));
      vmin = std::min(vmin, p.dot(v));
      vmax = std::max(vmax, p.dot(v));
    }
    const double area = (umax - umin) * (vmax - vmin);
    if (area < best_area) {
      best_area = area;
      best.center = u * (umin + umax) / 2 + v * (vmin + vmax) / 2;
      const double lu = umax - umin, lv = vmax - vmin;
      Vec2 axis = lu >= lv ? u : v;
      best.length = std::max(lu, lv);
      best.width = std::min(lu, lv);
      // Square footprints: either side may be x; take the one nearer to +x.
      if (std::abs(lu - lv) <= 1e-12 * std::max(1.0, best.length)) {
        const double a = wrap_half_turn(std::atan2(u.y(), u.x()));
        if (a < -M_PI / 4 || a >= M_PI / 4) axis = v;
      }
      const double yaw = wrap_half_turn(std::atan2(axis.y(), axis.x()));
      best.axis = Vec2(std::cos(yaw), std::sin(yaw));
    }
  }
  return best;
}

Obb floor_parallel_obb(const std::vector<Vec3>& world_points, const floor_align::FloorFrame& floor) {
  if (world_points.size() < 3) throw InvalidInput("floor_parallel_obb: need at least 3 points");
  std::vector<Vec2> footprint;
  footprint.reserve(world_points.size());
  double ymin = kInf, ymax = -kInf;
  for (const auto& p : world_points) {
    if (!p.allFinite()) throw InvalidInput("floor_parallel_obb: non-finite point");
    const Vec3 q = floor_align::world_to_floor(floor, p);
    footprint.emplace_back(q.x(), q.z());
    ymin = std::min(ymin, q.y());
    ymax = std::max(ymax, q.y());
  }
  const Rect2 rect = min_area_rectangle(footprint);
  const double yaw = std::atan2(rect.axis.y(), rect.axis.x());

  // Floor-frame axes (u, v, up) with up = +y: u = (dx, 0, dz), v = up × u.
  const Vec3 u(rect.axis.x(), 0, rect.axis.y());
  const Vec3 up = Vec3::UnitY();
  const Vec3 v = up.cross(u);
  const Vec3 center_floor(rect.center.x(), (ymin + ymax) / 2, rect.center.y());

  const auto& sim = floor.similarity;
  geom::ObbParams params;
  params.center = floor_align::floor_to_world(floor, center_floor);
  params.rotation.col(0) = sim.rotation.transpose() * u;
  params.rotation.col(1) = sim.rotation.transpose() * v;
  params.rotation.col(2) = sim.rotation.transpose() * up;
  const double h = ymax - ymin;
  const double scale = std::max({rect.length, rect.width, h});
  params.extents = sim.scale * Vec3(rect.length, rect.width, snap_extent(h, scale));
  Obb out = geom::make_obb(params);
  out.yaw = yaw;
  return out;
}

}  // namespace worldscaffold::obbfit
