#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"
#include "worldscaffold/error.hpp"
#include "worldscaffold/floor_align.hpp"

using namespace worldscaffold;
using namespace worldscaffold::floor_align;
using wstest::deg;

namespace {

// n×n vertex grid on the plane through `origin` spanned by a, b.
FloorMesh planar_grid(const Vec3& origin, const Vec3& a, const Vec3& b, int n = 5) {
  FloorMesh m;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m.vertices.push_back(origin + (i - n / 2.0) * a + (j - n / 2.0) * b);
  for (int i = 0; i + 1 < n; ++i) {
    for (int j = 0; j + 1 < n; ++j) {
      const int v = i * n + j;
      m.faces.push_back({v, v + 1, v + n});
      m.faces.push_back({v + 1, v + n + 1, v + n});
    }
  }
  return m;
}

SimilarityTransform random_similarity(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> s(0.3, 3.0);
  return {s(rng), wstest::random_rotation(rng), wstest::random_vec(rng, -5, 5)};
}

}  // namespace

TEST(FloorFrame, IdentitySimilarityMapsWorldYToFloorZ) {
  const FloorFrame f = build_floor_frame({}, false);
  EXPECT_LT((f.alignment.rotation * Vec3::UnitY() - Vec3::UnitZ()).norm(), 1e-12);
  EXPECT_LT((f.alignment.rotation * Vec3::UnitX() - Vec3::UnitX()).norm(), 1e-12);
  EXPECT_LT((f.alignment.rotation * Vec3::UnitZ() - Vec3::UnitY()).norm(), 1e-12);
  EXPECT_NEAR(f.alignment.rotation.determinant(), -1.0, 1e-12);
  EXPECT_FALSE(f.mirror_applied);
}

TEST(FloorFrame, MirrorRestoresProperRotation) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const FloorFrame f = build_floor_frame(random_similarity(rng), true);
    EXPECT_NEAR(f.final.rotation.determinant(), 1.0, 1e-9);
    const Vec3 p = wstest::random_vec(rng);
    const Vec3 a = f.alignment.apply(p), b = f.final.apply(p);
    EXPECT_NEAR(a.x(), -b.x(), 1e-12);
    EXPECT_NEAR(a.y(), b.y(), 1e-12);
    EXPECT_NEAR(a.z(), b.z(), 1e-12);
  }
}

TEST(FloorFrame, TranslationMapsToOrigin) {
  SimilarityTransform sim;
  sim.translation = {1, 2, 3};
  const FloorFrame f = build_floor_frame(sim, false);
  EXPECT_LT(f.alignment.apply(sim.translation).norm(), 1e-12);
  EXPECT_LT(world_to_floor(f, sim.translation).norm(), 1e-12);
}

TEST(FloorFrame, RejectsNonPositiveScale) {
  SimilarityTransform sim;
  sim.scale = 0.0;
  EXPECT_THROW(build_floor_frame(sim, false), InvalidInput);
}

TEST(WorldFloor, RoundTripOnRandomFrames) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 100; ++k) {
    const FloorFrame f = build_floor_frame(random_similarity(rng), k % 2 == 0);
    for (int i = 0; i < 1000; ++i) {
      const Vec3 p = wstest::random_vec(rng, -10, 10);
      ASSERT_LT((floor_to_world(f, world_to_floor(f, p)) - p).norm(), 1e-9);
    }
  }
}

TEST(WorldFloor, ScaleTwoHalvesDistances) {
  std::mt19937_64 rng(12);
  SimilarityTransform sim = random_similarity(rng);
  sim.scale = 2.0;
  const FloorFrame f = build_floor_frame(sim, false);
  for (int i = 0; i < 50; ++i) {
    const Vec3 a = wstest::random_vec(rng, -3, 3), b = wstest::random_vec(rng, -3, 3);
    EXPECT_NEAR((world_to_floor(f, a) - world_to_floor(f, b)).norm(), (a - b).norm() / 2.0, 1e-12);
  }
}

TEST(Correction, Examples) {
  const std::vector<Vec3> one{{1, 1, 1}};
  EXPECT_EQ(apply_correction({}, one)[0], Vec3(1, 1, 1));

  CorrectionTransform uniform;
  uniform.scale = {2, 2, 2};
  EXPECT_LT((apply_correction(uniform, one)[0] - Vec3(2, 2, 2)).norm(), 1e-15);

  // Scale first, then rotate, then translate: (1,0,0) → (2,0,0) → (0,2,0) → (0,2,1).
  CorrectionTransform t;
  t.scale = {2, 1, 1};
  t.rotation = geom::rotation_z(deg(90));
  t.translation = {0, 0, 1};
  const std::vector<Vec3> x{{1, 0, 0}};
  EXPECT_LT((apply_correction(t, x)[0] - Vec3(0, 2, 1)).norm(), 1e-12);
}

TEST(Correction, ValidateRejectsBadParameters) {
  CorrectionTransform t;
  t.scale = {1, 0, 1};
  EXPECT_THROW(t.validate(), InvalidInput);
  t = {};
  t.rotation = Vec3(-1, 1, 1).asDiagonal();
  EXPECT_THROW(t.validate(), InvalidInput);
  t = {};
  t.translation.x() = std::nan("");
  EXPECT_THROW(t.validate(), InvalidInput);
}

TEST(FloorNormal, OrientedUpAndVertexMeanCentroid) {
  // Faces wound clockwise seen from +z still give n_z > 0.
  FloorMesh m;
  m.vertices = {{0, 0, 1}, {2, 0, 1}, {0, 2, 1}};
  m.faces = {{0, 2, 1}};
  const FloorNormal n = estimate_floor_normal(m);
  EXPECT_LT((n.normal - Vec3::UnitZ()).norm(), 1e-12);
  EXPECT_LT((n.centroid - Vec3(2.0 / 3, 2.0 / 3, 1)).norm(), 1e-12);
}

TEST(FloorNormal, LargestFaceWins) {
  FloorMesh m;
  m.vertices = {{0, 0, 0}, {1e-3, 0, 0}, {0, 0, 1e-3}, {0, 0, 0}, {4, 0, 0}, {0, 4, 0}};
  m.faces = {{0, 1, 2}, {3, 4, 5}};
  EXPECT_LT((estimate_floor_normal(m).normal - Vec3::UnitZ()).norm(), 1e-12);
}

TEST(FloorNormal, DegenerateMeshThrows) {
  FloorMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  m.faces = {{0, 1, 2}};
  EXPECT_THROW(estimate_floor_normal(m), InvalidInput);
  m.faces.clear();
  EXPECT_THROW(estimate_floor_normal(m), InvalidInput);
  m.faces = {{0, 1, 5}};
  EXPECT_THROW(estimate_floor_normal(m), InvalidInput);
}

TEST(Euler, RandomRoundTrip) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 2000; ++i) {
    const Mat3 r = wstest::random_rotation(rng);
    ASSERT_LT((from_euler_zyx(euler_zyx(r)) - r).norm(), 1e-9);
  }
}

TEST(Euler, KnownAngles) {
  const Vec3 a(0.3, -0.7, 2.1);
  const Vec3 b = euler_zyx(from_euler_zyx(a));
  EXPECT_LT((a - b).norm(), 1e-12);
}

TEST(Euler, GimbalAdjacentRoundTrip) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-M_PI, M_PI);
  for (double sign : {-1.0, 1.0}) {
    for (double off : {-1e-4, 0.0, 1e-4}) {
      for (int i = 0; i < 200; ++i) {
        const Vec3 a(u(rng), sign * M_PI / 2 + off, u(rng));
        const Mat3 r = from_euler_zyx(a);
        ASSERT_LT((from_euler_zyx(euler_zyx(r)) - r).norm(), 1e-9) << "theta_y offset " << off;
      }
    }
  }
}

TEST(Euler, ExactGimbalSetsThetaXZero) {
  const Mat3 r = from_euler_zyx({0.4, M_PI / 2, -0.2});
  const Vec3 e = euler_zyx(r);
  EXPECT_EQ(e.x(), 0.0);
  EXPECT_LT((from_euler_zyx(e) - r).norm(), 1e-9);
}

TEST(XyAlign, AlreadyAlignedIsIdentity) {
  const FloorMesh m = planar_grid(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY());
  const XyAlignment xy = xy_plane_align(m, {});
  EXPECT_LT((xy.transform.rotation - Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT(xy.transform.translation.norm(), 1e-9);
}

TEST(XyAlign, VerticalFloorAtHeightTwo) {
  // Plane y = 2, normal (0,1,0).
  const FloorMesh m = planar_grid({0.3, 2, -0.4}, Vec3::UnitX(), Vec3::UnitZ());
  const XyAlignment xy = xy_plane_align(m, {});
  EXPECT_LT((xy.floor_normal - Vec3::UnitY()).norm(), 1e-12);
  EXPECT_LT((xy.intersection - Vec3(0, 2, 0)).norm(), 1e-12);
  for (const auto& v : m.vertices) EXPECT_NEAR(xy.transform.apply(v).z(), 0.0, 1e-9);
  EXPECT_LT(xy.transform.apply(xy.intersection).norm(), 1e-9);
}

TEST(XyAlign, CancelsInPlaneCorrectionRotation) {
  const FloorMesh m = planar_grid(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY());
  CorrectionTransform c;
  c.rotation = geom::rotation_z(deg(15));
  const Vec3 x_before = c.rotation * Vec3::UnitX();
  EXPECT_GT(std::abs(x_before.y()), 0.2);
  const XyAlignment xy = xy_plane_align(m, c);
  EXPECT_LT((xy.transform.rotation * x_before - Vec3::UnitX()).norm(), 1e-9);
  EXPECT_NEAR(xy.euler_zyx.z(), -deg(15), 1e-9);
}

TEST(XyAlign, RandomPlanarFloorsProperty) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> s(0.5, 2.0);
  for (int k = 0; k < 100; ++k) {
    const Mat3 r = wstest::random_rotation(rng);
    FloorMesh m = planar_grid(wstest::random_vec(rng, -3, 3), r.col(0), r.col(1), 6);
    CorrectionTransform c;
    c.scale = {s(rng), s(rng), s(rng)};
    c.rotation = wstest::random_rotation(rng);
    c.translation = wstest::random_vec(rng);
    const XyAlignment xy = xy_plane_align(m, c);

    EXPECT_NEAR(xy.transform.rotation.determinant(), 1.0, 1e-9);
    double max_z = 0.0;
    for (const auto& v : apply_correction(c, m.vertices)) max_z = std::max(max_z, std::abs(xy.transform.apply(v).z()));
    EXPECT_LT(max_z, 1e-6);
    EXPECT_LT(xy.transform.apply(xy.intersection).norm(), 1e-9);
    EXPECT_LT((from_euler_zyx(xy.euler_zyx) - xy.transform.rotation).norm(), 1e-9);
    ASSERT_GT(xy.transform.apply(xy.intersection + xy.floor_normal).z(), 0.0);
  }
}

TEST(XyAlign, DegenerateMeshPropagatesError) {
  FloorMesh m;
  m.vertices = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  m.faces = {{0, 1, 2}};
  EXPECT_THROW(xy_plane_align(m, {}), InvalidInput);
}

TEST(Refit, IdentityContainsAllInliers) {
  std::mt19937_64 rng(41);
  geom::ObbParams p;
  p.extents = {2, 1, 0.5};
  const Obb box = geom::make_obb(p);
  cloud::PointCloud c;
  for (int i = 0; i < 300; ++i) c.points.push_back(wstest::random_vec(rng).cwiseProduct(Vec3(1, 0.5, 0.25)));
  const Obb out = refit_obb_after_transform(box, c, {});
  for (const auto& q : c.points) EXPECT_TRUE(geom::obb_contains(out, q, 1e-9));
}

TEST(Refit, RandomTransformsContainTransformedInliers) {
  std::mt19937_64 rng(42);
  for (int k = 0; k < 50; ++k) {
    geom::ObbParams p;
    p.center = wstest::random_vec(rng, -2, 2);
    p.extents = wstest::random_vec(rng, 0.2, 2.0);
    p.rotation = wstest::random_rotation(rng);
    const Obb box = geom::make_obb(p);
    cloud::PointCloud c;
    for (int i = 0; i < 200; ++i) c.points.push_back(wstest::random_vec(rng, -3, 3));
    for (int i = 0; i < 100; ++i) c.points.push_back(p.center + p.rotation * (0.5 * wstest::random_vec(rng).cwiseProduct(p.extents)));
    const RigidTransform t{wstest::random_rotation(rng), wstest::random_vec(rng)};
    const Obb out = refit_obb_after_transform(box, c, t);
    for (const auto& q : c.points) {
      if (geom::obb_contains(box, q, 0.0)) ASSERT_TRUE(geom::obb_contains(out, t.apply(q), 1e-9));
    }
    EXPECT_NEAR(out.rotation.determinant(), 1.0, 1e-9);
  }
}

TEST(Refit, QuarterTurnRotatesYawAndKeepsExtents) {
  // Symmetric grid on a 2 × 1 × 0.5 box so the PCA axes are exact.
  geom::ObbParams p;
  p.extents = {2, 1, 0.5};
  const Obb box = geom::make_obb(p);
  cloud::PointCloud c;
  for (int i = 0; i <= 20; ++i)
    for (int j = 0; j <= 10; ++j)
      for (int k = 0; k <= 2; ++k) c.points.push_back({-1 + 0.1 * i, -0.5 + 0.1 * j, -0.25 + 0.25 * k});

  const Obb before = refit_obb_after_transform(box, c, {});
  const Obb after = refit_obb_after_transform(box, c, RigidTransform::rotate(geom::rotation_z(deg(90))));
  ASSERT_TRUE(before.yaw && after.yaw);
  EXPECT_NEAR(std::remainder(*after.yaw - *before.yaw - deg(90), M_PI), 0.0, 1e-6);
  EXPECT_LT((after.extents - Vec3(2, 1, 0.5)).norm(), 1e-6);
  EXPECT_LT((before.extents - Vec3(2, 1, 0.5)).norm(), 1e-6);
}

TEST(Refit, NoInliersTransformsCorners) {
  geom::ObbParams p;
  p.extents = {1, 1, 1};
  const Obb box = geom::make_obb(p);
  cloud::PointCloud c;
  c.points = {{5, 5, 5}};
  const RigidTransform t{geom::rotation_x(0.3), {1, 2, 3}};
  const Obb out = refit_obb_after_transform(box, c, t);
  for (int i = 0; i < 8; ++i) EXPECT_LT((out.corners[i] - t.apply(box.corners[i])).norm(), 1e-12);
}

TEST(WorldToFinal, PointsAndPosesAgree) {
  std::mt19937_64 rng(51);
  for (int k = 0; k < 50; ++k) {
    const FloorFrame f = build_floor_frame(random_similarity(rng), false);
    const RigidTransform pose{wstest::random_rotation(rng), wstest::random_vec(rng, -3, 3)};
    const FinalPose fp = world_to_final_pose(f, pose);
    EXPECT_LT(geom::rotation_defect(fp.pose.rotation), 1e-9);
    EXPECT_NEAR(fp.scale, 1.0 / f.similarity.scale, 1e-15);
    // A camera-local point lands in the same place through either path.
    const Vec3 pc = wstest::random_vec(rng);
    const Vec3 direct = world_to_final(f, pose.apply(pc));
    const Vec3 via_pose = fp.scale * (fp.pose.rotation * pc) + fp.pose.translation;
    ASSERT_LT((direct - via_pose).norm(), 1e-9);
    EXPECT_LT((direct - world_to_floor(f, pose.apply(pc))).norm(), 1e-12);
  }
}

TEST(WorldToFinal, CornersMapPointwise) {
  std::mt19937_64 rng(52);
  const FloorFrame f = build_floor_frame(random_similarity(rng), false);
  geom::ObbParams p;
  p.extents = {1, 2, 3};
  const Obb box = geom::make_obb(p);
  const geom::Corners c = world_to_final(f, box.corners);
  for (int i = 0; i < 8; ++i) EXPECT_LT((c[i] - world_to_final(f, box.corners[i])).norm(), 1e-15);
}

TEST(Canonical, ComposesAutoCorrectionAndXy) {
  std::mt19937_64 rng(61);
  const FloorFrame f = build_floor_frame(random_similarity(rng), true);
  CorrectionTransform c;
  c.rotation = geom::rotation_z(0.2);
  c.translation = {0, 0, 0.1};
  const FloorMesh m = planar_grid(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY());
  const XyAlignment xy = xy_plane_align(m, c);
  const Vec3 p = wstest::random_vec(rng);
  EXPECT_LT((to_canonical(f, c, xy, p) - xy.transform.apply(c.apply(f.final.apply(p)))).norm(), 1e-12);
}
