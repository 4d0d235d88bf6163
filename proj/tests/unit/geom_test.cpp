#include <gtest/gtest.h>

#include <algorithm>

#include "test_util.hpp"
#include "worldscaffold/error.hpp"
#include "worldscaffold/geom.hpp"

using namespace worldscaffold;
using namespace worldscaffold::geom;
using wstest::deg;

namespace {

// Min-cost matching of two 8-point sets by exhaustive permutation would be
// 40320 cases; greedy nearest is exact when the sets coincide within a small
// fraction of the edge length.
double corner_set_distance(const Corners& a, const Corners& b) {
  std::array<bool, 8> used{};
  double worst = 0;
  for (const auto& p : a) {
    double best = 1e300;
    int bi = -1;
    for (int i = 0; i < 8; ++i) {
      if (used[i]) continue;
      const double d = (b[i] - p).norm();
      if (d < best) best = d, bi = i;
    }
    used[bi] = true;
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

TEST(Compose, IdentityCase) {
  const auto r = compose_rigid(RigidTransform::identity(), RigidTransform::identity());
  EXPECT_TRUE(r.rotation.isIdentity(0));
  EXPECT_TRUE(r.translation.isZero(0));
}

TEST(Compose, CommutingTranslations) {
  const auto r = compose_rigid(RigidTransform::translate({1, 0, 0}), RigidTransform::translate({0, 1, 0}));
  EXPECT_TRUE(r.translation.isApprox(Vec3(1, 1, 0)));
}

TEST(Compose, RotateAfterTranslate) {
  const auto r = compose_rigid(RigidTransform::rotate(rotation_z(deg(90))), RigidTransform::translate({1, 0, 0}));
  EXPECT_LT((r.apply(Vec3::Zero()) - Vec3(0, 1, 0)).norm(), 1e-12);
}

TEST(Compose, AppliesSecondArgumentFirstAndIsAssociative) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    RigidTransform a{wstest::random_rotation(rng), wstest::random_vec(rng)};
    RigidTransform b{wstest::random_rotation(rng), wstest::random_vec(rng)};
    RigidTransform c{wstest::random_rotation(rng), wstest::random_vec(rng)};
    const Vec3 p = wstest::random_vec(rng);
    EXPECT_LT((compose_rigid(a, b).apply(p) - a.apply(b.apply(p))).norm(), 1e-12);
    const auto left = compose_rigid(compose_rigid(a, b), c);
    const auto right = compose_rigid(a, compose_rigid(b, c));
    EXPECT_LT((left.rotation - right.rotation).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((left.translation - right.translation).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ApplyRigid, Examples) {
  const std::vector<Vec3> pts{{0, 0, 0}, {1, 2, 3}};
  EXPECT_EQ(apply_rigid(RigidTransform::identity(), pts), pts);
  EXPECT_EQ(apply_rigid(RigidTransform::translate({1, 2, 3}), std::vector<Vec3>{Vec3::Zero()})[0], Vec3(1, 2, 3));
  const auto r = apply_rigid(RigidTransform::rotate(rotation_z(deg(90))), std::vector<Vec3>{Vec3(1, 0, 0)});
  EXPECT_LT((r[0] - Vec3(0, 1, 0)).norm(), 1e-15);
}

TEST(ApplyRigid, PreservesDistances) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    RigidTransform t{wstest::random_rotation(rng), wstest::random_vec(rng, -10, 10)};
    std::vector<Vec3> pts;
    for (int i = 0; i < 20; ++i) pts.push_back(wstest::random_vec(rng, -5, 5));
    const auto out = apply_rigid(t, pts);
    ASSERT_EQ(out.size(), pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        EXPECT_NEAR((out[i] - out[j]).norm(), (pts[i] - pts[j]).norm(), 1e-9);
      }
    }
  }
}

TEST(Rodrigues, Examples) {
  EXPECT_TRUE(rodrigues_align_to_z({0, 0, 1}).isIdentity(1e-15));
  EXPECT_LT((rodrigues_align_to_z({1, 0, 0}) * Vec3(1, 0, 0) - Vec3::UnitZ()).norm(), 1e-9);
  const Mat3 flip = rodrigues_align_to_z({0, 0, -1});
  EXPECT_LT((flip * Vec3(0, 0, -1) - Vec3::UnitZ()).norm(), 1e-9);
  // 180 degrees about x keeps x fixed.
  EXPECT_LT((flip * Vec3::UnitX() - Vec3::UnitX()).norm(), 1e-12);
  EXPECT_LT(rotation_defect(flip), 1e-9);
}

TEST(Rodrigues, ZeroNormalRejected) {
  EXPECT_THROW(rodrigues_align_to_z({0, 0, 0}), InvalidInput);
  EXPECT_THROW(rodrigues_align_to_z({1e-10, 0, 0}), InvalidInput);
}

TEST(Rodrigues, ProperForRandomAndNearAntipodalNormals) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> tiny(-1e-7, 1e-7);
  for (int i = 0; i < 10000; ++i) {
    Vec3 n;
    if (i % 4 == 0) n = Vec3(tiny(rng), tiny(rng), -1.0);  // near −z
    else if (i % 4 == 1) n = Vec3(tiny(rng) * 1e-8, tiny(rng) * 1e-8, -1.0);
    else n = wstest::random_vec(rng);
    if (n.norm() <= 1e-9) continue;
    const Mat3 r = rodrigues_align_to_z(n);
    ASSERT_LT(rotation_defect(r), 1e-9) << i;
    ASSERT_LT((r * n.normalized() - Vec3::UnitZ()).norm(), 1e-9) << i;
  }
}

TEST(RelativePose, Examples) {
  RigidTransform p{rotation_z(0.3), Vec3(1, 2, 3)};
  const auto same = relative_pose(p, p);
  EXPECT_TRUE(same.rotation.isIdentity(1e-15));
  EXPECT_LT(same.translation.norm(), 1e-15);

  const auto t = relative_pose(RigidTransform::identity(), RigidTransform::translate({0, 0, 1}));
  EXPECT_TRUE(t.rotation.isIdentity(0));
  EXPECT_EQ(t.translation, Vec3(0, 0, 1));

  const auto r = relative_pose(RigidTransform::rotate(rotation_z(deg(30))), RigidTransform::rotate(rotation_z(deg(60))));
  EXPECT_LT((r.rotation - rotation_z(deg(30))).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(r.translation.norm(), 1e-15);
}

TEST(RelativePose, ComposesBackToCurrent) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    RigidTransform a{wstest::random_rotation(rng), wstest::random_vec(rng)};
    RigidTransform b{wstest::random_rotation(rng), wstest::random_vec(rng)};
    const auto rel = relative_pose(a, b);
    const auto back = compose_rigid(rel, a);
    EXPECT_LT((back.rotation - b.rotation).norm(), 1e-12);
    EXPECT_LT((back.translation - b.translation).norm(), 1e-12);
  }
}

TEST(Pinhole, Examples) {
  const CameraIntrinsics k{500, 500, 320, 240};
  EXPECT_EQ(pinhole_backproject(320, 240, 2, k), Vec3(0, 0, 2));
  EXPECT_LT((pinhole_backproject(820, 240, 1, k) - Vec3(1, 0, 1)).norm(), 1e-15);
  EXPECT_LT((pinhole_backproject(420, 340, 2, k) - Vec3(0.4, 0.4, 2)).norm(), 1e-12);
  EXPECT_THROW(pinhole_backproject(1, 1, 0, k), InvalidInput);
  EXPECT_THROW(pinhole_backproject(1, 1, -1, k), InvalidInput);
}

TEST(ObbDecompose, UnitCube) {
  const auto p = obb_decompose(obb_corners({Vec3(0.5, 0.5, 0.5), Vec3(1, 1, 1), Mat3::Identity()}));
  EXPECT_LT((p.center - Vec3(0.5, 0.5, 0.5)).norm(), 1e-12);
  EXPECT_LT((p.extents - Vec3(1, 1, 1)).norm(), 1e-12);
  EXPECT_LT(rotation_defect(p.rotation), 1e-9);
}

TEST(ObbDecompose, RotatedCuboid) {
  const Mat3 r = rotation_z(deg(30));
  const auto corners = obb_corners({Vec3(1, 2, 3), Vec3(4, 2, 1), r});
  const auto p = obb_decompose(corners);
  EXPECT_LT((p.extents - Vec3(4, 2, 1)).norm(), 1e-9);
  // Longest axis is the box x axis, sign-fixed so that its largest component is positive.
  EXPECT_LT((p.rotation.col(0) - r.col(0)).norm(), 1e-9);
  EXPECT_NEAR(std::atan2(p.rotation(1, 0), p.rotation(0, 0)), deg(30), 1e-9);
  EXPECT_LT(corner_set_distance(obb_corners(p), corners), 1e-6);
}

TEST(ObbDecompose, FlatBoxRoundTrips) {
  const auto corners = obb_corners({Vec3(0, 0, 1), Vec3(2, 1, 0), rotation_z(0.4)});
  const auto p = obb_decompose(corners);
  EXPECT_NEAR(p.extents[2], 0.0, 1e-12);
  EXPECT_LT(corner_set_distance(obb_corners(p), corners), 1e-6);
}

TEST(ObbDecompose, RejectsNonBox) {
  auto corners = obb_corners({Vec3::Zero(), Vec3(1, 1, 1), Mat3::Identity()});
  corners[3] += Vec3(0.2, 0, 0);
  try {
    obb_decompose(corners);
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("deviation"), std::string::npos);
  }
}

TEST(ObbDecompose, RandomRoundTripUpToPermutation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ext(0.05, 5.0);
  for (int i = 0; i < 1000; ++i) {
    ObbParams in{wstest::random_vec(rng, -10, 10), Vec3(ext(rng), ext(rng), ext(rng)), wstest::random_rotation(rng)};
    auto corners = obb_corners(in);
    std::shuffle(corners.begin(), corners.end(), rng);
    const auto p = obb_decompose(corners);
    ASSERT_LT(corner_set_distance(obb_corners(p), corners), 1e-6) << i;
    ASSERT_LT(rotation_defect(p.rotation), 1e-9);
    ASSERT_GE(p.extents[0], p.extents[1] - 1e-9);
    ASSERT_GE(p.extents[1], p.extents[2] - 1e-9);
    for (int k = 0; k < 2; ++k) {
      int idx;
      p.rotation.col(k).cwiseAbs().maxCoeff(&idx);
      ASSERT_GT(p.rotation(idx, k), 0.0);
    }
  }
}

TEST(ObbVolume, Examples) {
  EXPECT_DOUBLE_EQ(obb_volume(make_obb({Vec3::Zero(), Vec3(1, 1, 1), Mat3::Identity()})), 1.0);
  EXPECT_DOUBLE_EQ(obb_volume(make_obb({Vec3::Zero(), Vec3(4, 2, 1), Mat3::Identity()})), 8.0);
}

TEST(ObbVolume, RigidInvariant) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ext(0.1, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const Obb box = obb_from_corners(
        obb_corners({wstest::random_vec(rng), Vec3(ext(rng), ext(rng), ext(rng)), wstest::random_rotation(rng)}));
    RigidTransform t{wstest::random_rotation(rng), wstest::random_vec(rng, -5, 5)};
    Corners moved;
    for (int k = 0; k < 8; ++k) moved[k] = t.apply(box.corners[k]);
    const double v0 = obb_volume(box);
    const double v1 = obb_volume(obb_from_corners(moved));
    ASSERT_NEAR(v1, v0, 1e-9 * v0);
  }
}

TEST(Obb, CornerInvariants) {
  const Obb box = make_obb({Vec3(1, -2, 0.5), Vec3(2, 1, 3), rotation_z(1.0) * rotation_x(0.3)});
  Vec3 mean = Vec3::Zero();
  for (const auto& c : box.corners) mean += c;
  EXPECT_LT((mean / 8.0 - box.center).norm(), 1e-12);
  // Opposite faces (bottom 0..3, top 4..7) have midpoints symmetric about the center.
  Vec3 bottom = Vec3::Zero(), top = Vec3::Zero();
  for (int i = 0; i < 4; ++i) bottom += box.corners[i], top += box.corners[i + 4];
  EXPECT_LT(((bottom + top) / 8.0 - box.center).norm(), 1e-12);
  EXPECT_TRUE(obb_contains(box, box.center));
  EXPECT_FALSE(obb_contains(box, box.center + 10 * box.rotation.col(0)));
}
