#pragma once

// Rigid and similarity registration: weighted Kabsch, trimmed ICP, camera
// pose refinement, RANSAC similarity and robust similarity averaging.

#include <cstdint>
#include <span>
#include <vector>

#include "worldscaffold/geom.hpp"
#include "worldscaffold/result.hpp"

namespace worldscaffold::registration {

using geom::Mat3;
using geom::RigidTransform;
using geom::SimilarityTransform;
using geom::Vec3;

struct CorrespondenceSet {
  std::vector<Vec3> source;
  std::vector<Vec3> target;
  std::vector<double> weights;
};

/// Proper rotation and translation minimizing Σ w‖R·a + τ − b‖². Needs at
/// least three pairs and a positive weight sum; rank-deficient inputs still
/// yield a proper rotation.
RigidTransform weighted_kabsch(std::span<const Vec3> source, std::span<const Vec3> target,
                               std::span<const double> weights);
RigidTransform weighted_kabsch(const CorrespondenceSet& c);

/// Weighted Umeyama: similarity minimizing Σ w‖s·R·a + τ − b‖².
SimilarityTransform weighted_umeyama(std::span<const Vec3> source, std::span<const Vec3> target,
                                     std::span<const double> weights);

/// Linear-interpolation percentile (inclusive order statistics), q in [0, 100].
double percentile(std::vector<double> values, double q);

struct IcpConfig {
  int max_iters = 100;
  double mse_epsilon = 1e-5;
  double trim_fraction = 0.8;
  int min_correspondences = 10;
};

enum class IcpStatus {
  Converged,              // |MSE_prev − MSE| < epsilon
  MaxIterations,
  TooFewCorrespondences,  // trimmed set fell below min_correspondences
};

struct IcpResult {
  RigidTransform transform;
  int iterations_run = 0;
  double final_mse = 0.0;
  int final_inlier_count = 0;
  IcpStatus status = IcpStatus::MaxIterations;
  std::vector<double> mse_history;  // one entry per completed iteration
};

/// Trimmed ICP of `source` onto `target`. `weights` may be empty (all ones) or
/// hold one confidence per source point. Throws InvalidInput for an empty
/// target or a source smaller than `min_correspondences`.
IcpResult trimmed_icp(std::span<const Vec3> source, std::span<const Vec3> target,
                      std::span<const double> weights, const IcpConfig& cfg = {});

/// Re-expresses a predicted camera pose in the registered frame.
/// CameraToWorld: icp ∘ pose. WorldToCamera: pose ∘ icp⁻¹.
RigidTransform refine_pose(const RigidTransform& icp, const RigidTransform& pose, geom::PoseConvention conv);

struct SimilarityRansacConfig {
  int iters = 500;
  double inlier_threshold = 0.03;  // meters
  double scale_min = 0.4;
  double scale_max = 3.0;
  double min_valid_fraction = 0.2;
  int min_valid_frames = 3;
  std::uint64_t seed = 0;
};

struct SimilarityEstimate {
  SimilarityTransform transform;
  int inlier_count = 0;             // inliers of the refit transform
  std::vector<int> hypothesis_inliers;  // best minimal-sample consensus set, used for the refit
};

/// RANSAC over minimal three-point similarities `target ≈ s·R·source + τ`,
/// refit on the best inlier set. Rejects fewer than three pairs, fewer than
/// three inliers, or scales outside [scale_min, scale_max].
Result<SimilarityEstimate> ransac_similarity(std::span<const Vec3> source, std::span<const Vec3> target,
                                             const SimilarityRansacConfig& cfg = {});

/// Number of valid per-frame estimates required for `total_frames` frames:
/// max(min_valid_frames, ceil(min_valid_fraction · total_frames)).
int required_valid_frames(int total_frames, const SimilarityRansacConfig& cfg);

/// Inlier-weighted average: geometric mean of scales, arithmetic mean of
/// translations and chordal L2 mean of rotations.
Result<SimilarityTransform> average_similarity(std::span<const SimilarityEstimate> estimates, int total_frames,
                                               const SimilarityRansacConfig& cfg = {});

}  // namespace worldscaffold::registration
