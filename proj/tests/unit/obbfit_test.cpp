#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "test_util.hpp"
#include "worldscaffold/error.hpp"
#include "worldscaffold/obbfit.hpp"

using namespace worldscaffold;
using namespace worldscaffold::obbfit;
using cloud::BinaryMask;
using geom::Mat3;
using wstest::deg;

namespace {

Detection2d det(double x1, double y1, double x2, double y2, double score, int label = 0, bool gt = false) {
  Detection2d d;
  d.box = {x1, y1, x2, y2};
  d.score = score;
  d.label = label;
  d.is_gt = gt;
  d.frame = 0;
  return d;
}

// k×k grid of element bits from the row spans.
std::vector<std::vector<int>> element_grid(int k) {
  std::vector<std::vector<int>> g(std::max(k, 1), std::vector<int>(std::max(k, 1), 0));
  const int a = std::max(k, 1) / 2;
  for (const auto& r : ellipse_element(k))
    for (int x = r.begin; x < r.end; ++x) g[r.dy + a][x + a] = 1;
  return g;
}

// Direct per-pixel erosion over every element offset.
BinaryMask erode_oracle(const BinaryMask& m, int k) {
  if (k == 0) return m;
  const auto g = element_grid(k);
  const int n = int(g.size()), a = n / 2;
  BinaryMask out(m.width, m.height, false);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      bool all = true;
      for (int i = 0; i < n && all; ++i) {
        for (int j = 0; j < n && all; ++j) {
          if (!g[i][j]) continue;
          const int xx = x + j - a, yy = y + i - a;
          all = xx >= 0 && yy >= 0 && xx < m.width && yy < m.height && m.at(xx, yy);
        }
      }
      out.set(x, y, all);
    }
  }
  return out;
}

BinaryMask random_mask(std::mt19937_64& rng, int w, int h) {
  BinaryMask m(w, h, false);
  std::uniform_int_distribution<int> cx(0, w - 1), cy(0, h - 1), rr(2, 9);
  for (int b = 0; b < 6; ++b) {
    const int x0 = cx(rng), y0 = cy(rng), r = rr(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if ((x - x0) * (x - x0) + (y - y0) * (y - y0) <= r * r) m.set(x, y, true);
  }
  std::bernoulli_distribution flip(0.02);
  for (auto& b : m.bits)
    if (flip(rng)) b = !b;
  return m;
}

PointMap flat_map(int w, int h, double conf = 1.0) {
  PointMap m;
  m.width = w;
  m.height = h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.points.emplace_back(0.01 * x, 0.01 * y, 1.0);
  m.confidence.assign(std::size_t(w) * h, conf);
  return m;
}

// Numpy-style linear percentile, written out separately from the library.
double percentile_oracle(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * double(v.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

// Smallest bounding-rectangle area over `steps` equally spaced angles in [0, π/2).
double sweep_oracle_area(const std::vector<geom::Vec2>& pts, int steps) {
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < steps; ++s) {
    const double a = (M_PI / 2) * s / steps;
    const geom::Vec2 u(std::cos(a), std::sin(a)), v(-u.y(), u.x());
    double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
    for (const auto& p : pts) {
      umin = std::min(umin, p.dot(u));
      umax = std::max(umax, p.dot(u));
      vmin = std::min(vmin, p.dot(v));
      vmax = std::max(vmax, p.dot(v));
    }
    best = std::min(best, (umax - umin) * (vmax - vmin));
  }
  return best;
}

cloud::PointCloud as_cloud(std::vector<Vec3> pts) {
  cloud::PointCloud c;
  c.points = std::move(pts);
  return c;
}

}  // namespace

TEST(Fusion, GtBeatsIdenticalDetection) {
  const auto out = fuse_detections({det(0, 0, 10, 10, 0.99)}, {det(0, 0, 10, 10, kGtScore, 0, true)});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0].is_gt);
}

TEST(Fusion, DisjointBoxesSurvive) {
  EXPECT_EQ(fuse_detections({det(0, 0, 10, 10, 0.9), det(20, 20, 30, 30, 0.8)}, {}).size(), 2u);
}

TEST(Fusion, HigherScoreSuppressesOverlap) {
  // Same height, 15 px wide each, offset by 3.75: IoU = 11.25 / 18.75 = 0.6.
  const Detection2d a = det(0, 0, 15, 10, 0.9), b = det(3.75, 0, 18.75, 10, 0.8);
  EXPECT_NEAR(iou2d(a, b), 0.6, 1e-12);
  const auto out = fuse_detections({b, a}, {});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].score, 0.9);
}

TEST(Fusion, PerClassAndGtOnly) {
  // Different classes never suppress each other.
  EXPECT_EQ(fuse_detections({det(0, 0, 10, 10, 0.9, 1), det(0, 0, 10, 10, 0.8, 2)}, {}).size(), 2u);
  // With no detector boxes the output is plain NMS over the GT boxes.
  const std::vector<Detection2d> gts{det(0, 0, 10, 10, kGtScore, 0, true), det(1, 0, 11, 10, kGtScore, 0, true),
                                     det(50, 50, 60, 60, kGtScore, 0, true)};
  const auto out = fuse_detections({}, gts);
  EXPECT_EQ(out.size(), nms(gts, 0.5).size());
  EXPECT_EQ(out.size(), 2u);
}

TEST(Fusion, RandomOutputsDuplicateFreeAndKeepGts) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0, 200), size(5, 40), score(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<Detection2d> dets, gts;
    for (int i = 0; i < 15; ++i) {
      const double x = pos(rng), y = pos(rng);
      dets.push_back(det(x, y, x + size(rng), y + size(rng), score(rng), i % 2));
    }
    for (int i = 0; i < 4; ++i) {
      const double x = pos(rng), y = pos(rng);
      gts.push_back(det(x, y, x + size(rng), y + size(rng), kGtScore, i % 2, true));
    }
    const auto out = fuse_detections(dets, gts);
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t j = i + 1; j < out.size(); ++j)
        if (out[i].label == out[j].label) ASSERT_LT(iou2d(out[i], out[j]), 0.5);
    const auto gt_only = fuse_detections({}, gts);
    for (const auto& g : gt_only) {
      const bool present = std::any_of(out.begin(), out.end(), [&](const Detection2d& d) {
        return d.is_gt && d.box == g.box && d.label == g.label;
      });
      ASSERT_TRUE(present);
    }
  }
}

TEST(Fusion, RejectsBadInput) {
  EXPECT_THROW(fuse_detections({det(5, 0, 5, 10, 0.5)}, {}), InvalidInput);
  EXPECT_THROW(fuse_detections({}, {det(0, 0, 1, 1, 0.9, 0, true)}), InvalidInput);
}

TEST(Erosion, EllipseElementShapes) {
  const std::vector<std::vector<int>> k3{{0, 1, 0}, {1, 1, 1}, {0, 1, 0}};
  EXPECT_EQ(element_grid(3), k3);
  const std::vector<std::vector<int>> k5{
      {0, 0, 1, 0, 0}, {1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}, {0, 0, 1, 0, 0}};
  EXPECT_EQ(element_grid(5), k5);
  // Every element is symmetric about its anchor row and contains the anchor.
  for (int k : {3, 5, 7, 9, 11}) {
    const auto g = element_grid(k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) EXPECT_EQ(g[i][j], g[k - 1 - i][k - 1 - j]) << k;
    EXPECT_EQ(g[k / 2][k / 2], 1);
  }
}

TEST(Erosion, KernelZeroIsIdentity) {
  std::mt19937_64 rng(1);
  const BinaryMask m = random_mask(rng, 30, 20);
  EXPECT_EQ(erode_mask(m, 0).bits, m.bits);
}

TEST(Erosion, FullMaskKernelFive) {
  const BinaryMask out = erode_mask(BinaryMask(20, 20, true), 5);
  EXPECT_EQ(out.bits, erode_oracle(BinaryMask(20, 20, true), 5).bits);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) EXPECT_EQ(out.at(x, y), x >= 2 && x <= 17 && y >= 2 && y <= 17);
}

TEST(Erosion, SmallBlobLargeKernelIsEmpty) {
  BinaryMask m(20, 20, false);
  for (int y = 8; y < 11; ++y)
    for (int x = 8; x < 11; ++x) m.set(x, y, true);
  EXPECT_EQ(erode_mask(m, 10).count(), 0u);
}

TEST(Erosion, MatchesBruteForceOnRandomMasks) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 30; ++t) {
    const BinaryMask m = random_mask(rng, 37, 29);
    for (int k : {0, 1, 2, 3, 4, 5, 6, 7, 10}) ASSERT_EQ(erode_mask(m, k).bits, erode_oracle(m, k).bits) << k;
  }
}

TEST(Erosion, ComposedErosionShrinksMonotonically) {
  std::mt19937_64 rng(3);
  const std::vector<int> ks{0, 3, 5, 7, 10};
  for (int t = 0; t < 20; ++t) {
    const BinaryMask m = random_mask(rng, 48, 36);
    for (int a : ks) {
      for (int b : ks) {
        const BinaryMask ab = erode_mask(erode_mask(m, a), b);
        const BinaryMask big = erode_mask(m, std::max(a, b));
        for (std::size_t i = 0; i < ab.bits.size(); ++i) ASSERT_TRUE(!ab.bits[i] || big.bits[i]);
      }
    }
  }
}

TEST(Extraction, FullMaskUniformConfidence) {
  PointMap maps = flat_map(16, 12);
  maps.points[5] = Vec3(std::nan(""), 0, 0);
  const BinaryMask full(16, 12, true);
  const auto pts = extract_object_points(&full, det(0, 0, 16, 12, 1), maps);
  EXPECT_EQ(pts.size(), 16u * 12 - 1);
  const BinaryMask empty(16, 12, false);
  EXPECT_TRUE(extract_object_points(&empty, det(0, 0, 16, 12, 1), maps).empty());
}

TEST(Extraction, PercentileThresholdMatchesPredicateOracle) {
  PointMap maps = flat_map(40, 25);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.001, 1.0);
  for (auto& c : maps.confidence) c = u(rng);
  BinaryMask mask = random_mask(rng, 40, 25);
  const Detection2d box = det(3.5, 2.2, 31, 20.9, 1);

  const double thr = std::max(1e-3, percentile_oracle(maps.confidence, 5.0));
  EXPECT_NEAR(confidence_threshold(maps), thr, 1e-15);
  const auto pts = extract_object_points(&mask, box, maps);
  std::vector<Vec3> expected;
  for (int y = 0; y < 25; ++y)
    for (int x = 0; x < 40; ++x)
      if (x >= 3.5 && x < 31 && y >= 2.2 && y < 20.9 && mask.at(x, y) && maps.confidence[y * 40 + x] >= thr)
        expected.push_back(maps.points[y * 40 + x]);
  EXPECT_EQ(pts.points, expected);
}

TEST(Extraction, NoMaskUsesRectangleAndFloorClamp) {
  PointMap maps = flat_map(10, 10, 1e-4);
  // Every confidence is below the 1e-3 floor.
  EXPECT_EQ(confidence_threshold(maps), 1e-3);
  EXPECT_TRUE(extract_object_points(nullptr, det(0, 0, 10, 10, 1), maps).empty());
  maps.confidence.assign(100, 0.5);
  EXPECT_EQ(extract_object_points(nullptr, det(2, 3, 5, 7, 1), maps).size(), 12u);
}

TEST(Extraction, DimensionMismatchThrows) {
  const PointMap maps = flat_map(10, 10);
  const BinaryMask m(9, 10, true);
  EXPECT_THROW(extract_object_points(&m, det(0, 0, 10, 10, 1), maps), InvalidInput);
}

TEST(Multiscale, ErosionShavesOutlierRim) {
  // 30×30 object whose one-pixel rim back-projects 1 m away from the body.
  PointMap maps = flat_map(40, 40);
  BinaryMask mask(40, 40, false);
  for (int y = 5; y < 35; ++y) {
    for (int x = 5; x < 35; ++x) {
      mask.set(x, y, true);
      maps.points[y * 40 + x].z() += 0.05 * ((x + y) % 3);
      const bool rim = x == 5 || y == 5 || x == 34 || y == 34;
      if (rim) maps.points[y * 40 + x] += Vec3(0, 0, 1.0);
    }
  }
  const auto floor = floor_align::build_floor_frame({}, false);
  const auto r = multiscale_select(&mask, det(0, 0, 40, 40, 1), maps, floor);
  ASSERT_TRUE(r.ok());
  EXPECT_GT(r->erosion_kernel, 0);
  const auto plain = extract_object_points(&mask, det(0, 0, 40, 40, 1), maps);
  EXPECT_LT(r->volume, floor_extent_volume(plain, floor));
}

TEST(Multiscale, RejectsBelowMinPoints) {
  PointMap maps = flat_map(40, 40);
  BinaryMask mask(40, 40, false);
  for (int i = 0; i < 49; ++i) mask.set(i % 7 * 5, i / 7 * 5, true);  // isolated pixels
  const auto floor = floor_align::build_floor_frame({}, false);
  const auto r = multiscale_select(&mask, det(0, 0, 40, 40, 1), maps, floor);
  EXPECT_FALSE(r.ok());
}

TEST(Multiscale, SingleKernelEqualsPlainExtraction) {
  std::mt19937_64 rng(6);
  PointMap maps = flat_map(40, 30);
  for (auto& p : maps.points) p += wstest::random_vec(rng, -0.05, 0.05);
  const BinaryMask mask = random_mask(rng, 40, 30);
  ErosionConfig cfg;
  cfg.kernel_sizes = {0};
  cfg.min_points = 1;
  const auto floor = floor_align::build_floor_frame({}, false);
  const auto r = multiscale_select(&mask, det(0, 0, 40, 30, 1), maps, floor, cfg);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->points.points, extract_object_points(&mask, det(0, 0, 40, 30, 1), maps, cfg).points);
}

TEST(Pca, AxisPointSet) {
  const Obb b = pca_obb(as_cloud({{2, 0, 0}, {-2, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 0.5}, {0, 0, -0.5}}));
  EXPECT_LT((b.rotation - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT((b.extents - Vec3(4, 2, 1)).norm(), 1e-12);
  EXPECT_LT(b.center.norm(), 1e-12);
}

TEST(Pca, RigidInvarianceAndContainment) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    std::vector<Vec3> pts;
    const Vec3 scale = wstest::random_vec(rng, 0.2, 2.0);
    for (int i = 0; i < 200; ++i) pts.push_back(wstest::random_vec(rng).cwiseProduct(scale));
    const Obb a = pca_obb(as_cloud(pts));
    const Mat3 r = wstest::random_rotation(rng);
    const Vec3 tr = wstest::random_vec(rng, -5, 5);
    std::vector<Vec3> moved;
    for (const auto& p : pts) moved.push_back(r * p + tr);
    const Obb b = pca_obb(as_cloud(moved));
    EXPECT_NEAR(b.volume(), a.volume(), 1e-9 * a.volume());
    std::array<double, 3> ea{a.extents[0], a.extents[1], a.extents[2]}, eb{b.extents[0], b.extents[1], b.extents[2]};
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(ea[k], eb[k], 1e-9);
    for (const auto& p : pts) ASSERT_TRUE(geom::obb_contains(a, p, 1e-9));
    for (const auto& p : moved) ASSERT_TRUE(geom::obb_contains(b, p, 1e-9));
    EXPECT_NEAR(b.rotation.determinant(), 1.0, 1e-9);
  }
}

TEST(Pca, CollinearPoints) {
  std::vector<Vec3> pts;
  for (int i = 0; i <= 10; ++i) pts.emplace_back(0.1 * i, 0, 0);
  const Obb b = pca_obb(as_cloud(pts));
  EXPECT_NEAR(b.extents[0], 1.0, 1e-12);
  EXPECT_EQ(b.extents[1], 0.0);
  EXPECT_EQ(b.extents[2], 0.0);
  for (const auto& p : pts) EXPECT_TRUE(geom::obb_contains(b, p, 1e-9));
}

TEST(Pca, TooFewPointsThrows) {
  EXPECT_THROW(pca_obb(as_cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}})), InvalidInput);
}

TEST(FloorParallel, AxisAlignedUnitSquare) {
  std::vector<Vec3> pts;
  for (double x : {0.0, 1.0})
    for (double z : {0.0, 1.0})
      for (double y : {0.0, 2.0}) pts.emplace_back(x, y, z);
  const auto floor = floor_align::build_floor_frame({}, false);
  const Obb b = floor_parallel_obb(pts, floor);
  ASSERT_TRUE(b.yaw);
  EXPECT_NEAR(*b.yaw, 0.0, 1e-12);
  EXPECT_LT((b.extents - Vec3(1, 1, 2)).norm(), 1e-12);
  for (const auto& p : pts) EXPECT_TRUE(geom::obb_contains(b, p, 1e-9));
}

TEST(FloorParallel, RotatedSquareMatchesSweepOracle) {
  std::vector<geom::Vec2> fp;
  std::vector<Vec3> pts;
  for (double x : {-0.5, 0.5}) {
    for (double z : {-0.5, 0.5}) {
      const geom::Vec2 q = Eigen::Rotation2Dd(deg(45)) * geom::Vec2(x, z);
      fp.push_back(q);
      pts.emplace_back(q.x(), 0.0, q.y());
      pts.emplace_back(q.x(), 1.0, q.y());
    }
  }
  const Rect2 r = min_area_rectangle(fp);
  EXPECT_NEAR(r.area(), 1.0, 1e-12);
  EXPECT_NEAR(sweep_oracle_area(fp, 900), 1.0, 1e-9);
  const Obb b = floor_parallel_obb(pts, floor_align::build_floor_frame({}, false));
  EXPECT_NEAR(std::remainder(*b.yaw - deg(45), M_PI / 2), 0.0, 1e-9);
  EXPECT_GE(*b.yaw, -M_PI / 2);
  EXPECT_LT(*b.yaw, M_PI / 2);
}

TEST(FloorParallel, RandomSetsBeatSweepOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 500; ++t) {
    std::vector<geom::Vec2> fp;
    const double sx = 0.2 + std::abs(u(rng)) * 2, sy = 0.2 + std::abs(u(rng));
    const Eigen::Rotation2Dd rot(u(rng) * M_PI);
    for (int i = 0; i < 25; ++i) fp.push_back(rot * geom::Vec2(sx * u(rng), sy * u(rng)));
    const Rect2 r = min_area_rectangle(fp);
    ASSERT_LE(r.area(), sweep_oracle_area(fp, 3600) + 1e-6);
    ASSERT_GE(r.length, r.width);
    const double yaw = std::atan2(r.axis.y(), r.axis.x());
    ASSERT_GE(yaw, -M_PI / 2);
    ASSERT_LT(yaw, M_PI / 2);
  }
}

TEST(FloorParallel, ContainmentUnderRandomFloorFrames) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> s(0.5, 2.0);
  for (int t = 0; t < 100; ++t) {
    const auto floor = floor_align::build_floor_frame({s(rng), wstest::random_rotation(rng), wstest::random_vec(rng)}, false);
    std::vector<Vec3> pts;
    for (int i = 0; i < 60; ++i) pts.push_back(wstest::random_vec(rng, -2, 2));
    const Obb b = floor_parallel_obb(pts, floor);
    for (const auto& p : pts) ASSERT_TRUE(geom::obb_contains(b, p, 1e-9));
    EXPECT_NEAR(b.rotation.determinant(), 1.0, 1e-9);
    // The third axis is the floor normal in world coordinates.
    const Vec3 up_world = floor.similarity.rotation.transpose() * Vec3::UnitY();
    EXPECT_LT((b.rotation.col(2) - up_world).norm(), 1e-9);
  }
}

TEST(FloorParallel, DegenerateFootprintThrows) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 5; ++i) pts.emplace_back(0.1 * i, 0.3 * i, 0.2 * i);
  EXPECT_THROW(floor_parallel_obb(pts, floor_align::build_floor_frame({}, false)), InvalidInput);
}
