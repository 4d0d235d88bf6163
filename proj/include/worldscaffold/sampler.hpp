#pragma once

// Keyframe selection by homography-estimated visual overlap.

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "worldscaffold/geom.hpp"

namespace worldscaffold::sampler {

using geom::Mat3;
using geom::Vec2;

using DescriptorMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FrameFeatures {
  std::uint32_t frame_index = 0;
  std::vector<Vec2> keypoints;
  DescriptorMatrix descriptors;  // one row per keypoint

  std::size_t size() const { return keypoints.size(); }
};

struct MatchSet {
  std::vector<std::pair<int, int>> pairs;  // (index in a, index in b)
  double ratio = 0.75;
};

struct Homography {
  Mat3 matrix = Mat3::Identity();  // maps frame-B pixels into frame A
  int inlier_count = 0;
};

struct ImageSize {
  int width = 0;
  int height = 0;
};

struct SamplerConfig {
  double overlap_threshold = 0.95;
  double ratio = 0.75;
  double ransac_threshold = 4.0;  // px
  int ransac_iters = 2000;
  double ransac_confidence = 0.995;
  int min_frames = 17;
  std::uint64_t seed = 0;
};

/// Lowe ratio test over brute-force 2-NN of each descriptor of `a` in `b`.
/// Returns an empty set when `b` has fewer than two descriptors.
MatchSet ratio_match(const FrameFeatures& a, const FrameFeatures& b, double ratio);

/// Normalized DLT over >= 4 correspondences `src[i] -> dst[i]`.
std::optional<Mat3> homography_dlt(std::span<const Vec2> src, std::span<const Vec2> dst);

/// Forward reprojection error |H·src − dst| in pixels.
double reprojection_error(const Mat3& h, const Vec2& src, const Vec2& dst);

/// RANSAC homography mapping `src` (frame B) onto `dst` (frame A). Returns
/// nullopt when fewer than four pairs are given or fewer than four inliers
/// survive.
std::optional<Homography> ransac_homography(std::span<const Vec2> src, std::span<const Vec2> dst,
                                            const SamplerConfig& cfg);

/// Fraction of frame A's rectangle covered by frame B's rectangle warped by H.
/// Degenerate warps (points at infinity, non-convex or vanishing quads) give 0.
double overlap_fraction(const Homography& h, ImageSize dims_a, ImageSize dims_b);

/// Full overlap estimate between a reference frame and a candidate:
/// matching, RANSAC and polygon intersection. Frames with < 4 keypoints,
/// too few matches or a rejected homography score 0.
double homography_overlap(const FrameFeatures& ref, const FrameFeatures& cand, ImageSize dims,
                          const SamplerConfig& cfg);

using OverlapFn = std::function<double(std::size_t ref_pos, std::size_t cand_pos)>;

/// Greedy selection over positions 0..count-1 using an arbitrary overlap
/// measure; returns positions. Annotated positions are injected afterwards
/// and the uniform-stride fallback applies when fewer than `min_frames`
/// positions result.
std::vector<std::size_t> greedy_select_positions(std::size_t count, const OverlapFn& overlap,
                                                 const std::set<std::size_t>& annotated_positions,
                                                 double overlap_threshold, int min_frames);

/// Selected frame indices, sorted and duplicate-free.
std::vector<std::uint32_t> greedy_select(std::span<const FrameFeatures> features,
                                         const std::set<std::uint32_t>& annotated, ImageSize dims,
                                         const SamplerConfig& cfg);

}  // namespace worldscaffold::sampler
