#include "worldscaffold/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/SVD>

#include "worldscaffold/error.hpp"
#include "worldscaffold/kdtree.hpp"

namespace worldscaffold::registration {

namespace {

void check_pairs(std::span<const Vec3> source, std::span<const Vec3> target, std::span<const double> weights,
                 const char* who) {
  if (source.size() != target.size() || source.size() != weights.size()) {
    throw InvalidInput(std::string(who) + ": source, target and weights differ in length");
  }
  if (source.size() < 3) throw InvalidInput(std::string(who) + ": need at least 3 correspondences");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidInput(std::string(who) + ": weights must be non-negative");
    sum += w;
  }
  if (!(sum > 0.0)) throw InvalidInput(std::string(who) + ": weight sum must be positive");
}

struct Centered {
  Vec3 mean_source = Vec3::Zero();
  Vec3 mean_target = Vec3::Zero();
  double weight_sum = 0.0;
};

Centered weighted_means(std::span<const Vec3> source, std::span<const Vec3> target,
                        std::span<const double> weights) {
  Centered c;
  for (std::size_t k = 0; k < source.size(); ++k) {
    c.mean_source += weights[k] * source[k];
    c.mean_target += weights[k] * target[k];
    c.weight_sum += weights[k];
  }
  c.mean_source /= c.weight_sum;
  c.mean_target /= c.weight_sum;
  return c;
}

}  // namespace

RigidTransform weighted_kabsch(std::span<const Vec3> source, std::span<const Vec3> target,
                               std::span<const double> weights) {
  check_pairs(source, target, weights, "weighted_kabsch");
  const Centered c = weighted_means(source, target, weights);
  Mat3 h = Mat3::Zero();
  for (std::size_t k = 0; k < source.size(); ++k) {
    h += weights[k] * (source[k] - c.mean_source) * (target[k] - c.mean_target).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform out;
  out.rotation = v * d * u.transpose();
  out.translation = c.mean_target - out.rotation * c.mean_source;
  return out;
}

RigidTransform weighted_kabsch(const CorrespondenceSet& c) {
  return weighted_kabsch(c.source, c.target, c.weights);
}

SimilarityTransform weighted_umeyama(std::span<const Vec3> source, std::span<const Vec3> target,
                                     std::span<const double> weights) {
  check_pairs(source, target, weights, "weighted_umeyama");
  const Centered c = weighted_means(source, target, weights);
  Mat3 sigma = Mat3::Zero();
  double variance = 0.0;
  for (std::size_t k = 0; k < source.size(); ++k) {
    const Vec3 a = source[k] - c.mean_source;
    const Vec3 b = target[k] - c.mean_target;
    sigma += weights[k] * b * a.transpose();
    variance += weights[k] * a.squaredNorm();
  }
  sigma /= c.weight_sum;
  variance /= c.weight_sum;
  if (!(variance > 0.0)) throw InvalidInput("weighted_umeyama: source points coincide");

  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Vec3 s_diag(1.0, 1.0, (u.determinant() * v.determinant()) < 0 ? -1.0 : 1.0);
  SimilarityTransform out;
  out.rotation = u * s_diag.asDiagonal() * v.transpose();
  out.scale = svd.singularValues().dot(s_diag) / variance;
  out.translation = c.mean_target - out.scale * (out.rotation * c.mean_source);
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInput("percentile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * double(values.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - double(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

IcpResult trimmed_icp(std::span<const Vec3> source, std::span<const Vec3> target,
                      std::span<const double> weights, const IcpConfig& cfg) {
  if (target.empty()) throw InvalidInput("trimmed_icp: empty target cloud");
  if (source.size() < std::size_t(std::max(cfg.min_correspondences, 0))) {
    throw InvalidInput("trimmed_icp: source has fewer than " + std::to_string(cfg.min_correspondences) +
                       " points");
  }
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(source.size(), 1.0);
  if (w.size() != source.size()) throw InvalidInput("trimmed_icp: weights length differs from source");

  const KdTree3 tree(target);
  std::vector<Vec3> moving(source.begin(), source.end());
  std::vector<double> dist(moving.size());
  std::vector<std::int64_t> nn(moving.size());

  IcpResult result;
  result.status = IcpStatus::MaxIterations;
  double prev_mse = std::numeric_limits<double>::infinity();
  std::vector<Vec3> src_v, dst_v;
  std::vector<double> w_v;
  std::vector<std::size_t> kept;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    std::vector<double> finite;
    finite.reserve(moving.size());
    for (std::size_t k = 0; k < moving.size(); ++k) {
      const auto hit = tree.nearest(moving[k]);
      nn[k] = hit.index;
      dist[k] = std::isfinite(hit.distance) ? hit.distance : std::numeric_limits<double>::infinity();
      if (std::isfinite(dist[k])) finite.push_back(dist[k]);
    }
    kept.clear();
    if (!finite.empty()) {
      const double cutoff = percentile(finite, cfg.trim_fraction * 100.0);
      for (std::size_t k = 0; k < moving.size(); ++k) {
        if (std::isfinite(dist[k]) && dist[k] <= cutoff) kept.push_back(k);
      }
    }
    double kept_weight = 0.0;
    for (std::size_t k : kept) kept_weight += w[k];
    if (kept.size() < std::size_t(cfg.min_correspondences) || !(kept_weight > 0.0)) {
      result.status = IcpStatus::TooFewCorrespondences;
      break;
    }

    src_v.clear();
    dst_v.clear();
    w_v.clear();
    for (std::size_t k : kept) {
      src_v.push_back(moving[k]);
      dst_v.push_back(target[std::size_t(nn[k])]);
      w_v.push_back(w[k]);
    }
    const RigidTransform inc = weighted_kabsch(src_v, dst_v, w_v);
    result.transform = geom::compose_rigid(inc, result.transform);
    for (auto& p : moving) p = inc.apply(p);

    double mse = 0.0;
    for (std::size_t k : kept) mse += (moving[k] - target[std::size_t(nn[k])]).squaredNorm();
    mse /= double(kept.size());

    result.mse_history.push_back(mse);
    result.iterations_run = iter + 1;
    result.final_mse = mse;
    result.final_inlier_count = int(kept.size());
    if (std::abs(prev_mse - mse) < cfg.mse_epsilon) {
      result.status = IcpStatus::Converged;
      break;
    }
    prev_mse = mse;
  }
  return result;
}

RigidTransform refine_pose(const RigidTransform& icp, const RigidTransform& pose, geom::PoseConvention conv) {
  if (conv == geom::PoseConvention::CameraToWorld) return geom::compose_rigid(icp, pose);
  return geom::compose_rigid(pose, icp.inverse());
}

namespace {

bool degenerate_triangle(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double scale = std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), 1e-300});
  return (b - a).cross(c - a).norm() <= 1e-9 * scale;
}

double residual(const SimilarityTransform& t, const Vec3& src, const Vec3& dst) {
  return (t.apply(src) - dst).norm();
}

}  // namespace

Result<SimilarityEstimate> ransac_similarity(std::span<const Vec3> source, std::span<const Vec3> target,
                                             const SimilarityRansacConfig& cfg) {
  if (source.size() != target.size()) throw InvalidInput("ransac_similarity: mismatched correspondence lists");
  const std::size_t n = source.size();
  if (n < 3) return Rejection{"fewer than 3 correspondences"};

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const std::vector<double> ones(3, 1.0);

  int best_count = 0;
  std::vector<int> best_inliers;
  for (int iter = 0; iter < cfg.iters; ++iter) {
    std::size_t i0 = pick(rng), i1 = pick(rng), i2 = pick(rng);
    if (i0 == i1 || i0 == i2 || i1 == i2) continue;
    if (degenerate_triangle(source[i0], source[i1], source[i2]) ||
        degenerate_triangle(target[i0], target[i1], target[i2])) {
      continue;
    }
    const Vec3 s3[3] = {source[i0], source[i1], source[i2]};
    const Vec3 t3[3] = {target[i0], target[i1], target[i2]};
    const SimilarityTransform hyp = weighted_umeyama(s3, t3, ones);
    if (!(hyp.scale >= cfg.scale_min && hyp.scale <= cfg.scale_max)) continue;

    std::vector<int> inliers;
    for (std::size_t k = 0; k < n; ++k) {
      if (residual(hyp, source[k], target[k]) <= cfg.inlier_threshold) inliers.push_back(int(k));
    }
    if (int(inliers.size()) > best_count) {
      best_count = int(inliers.size());
      best_inliers = std::move(inliers);
    }
  }
  if (best_count < 3) return Rejection{"no plausible hypothesis with at least 3 inliers"};

  std::vector<Vec3> in_src, in_dst;
  for (int k : best_inliers) {
    in_src.push_back(source[std::size_t(k)]);
    in_dst.push_back(target[std::size_t(k)]);
  }
  const std::vector<double> w(in_src.size(), 1.0);
  const SimilarityTransform refit = weighted_umeyama(in_src, in_dst, w);
  if (!(refit.scale >= cfg.scale_min && refit.scale <= cfg.scale_max)) {
    return Rejection{"refit scale " + std::to_string(refit.scale) + " outside plausibility bounds"};
  }
  int count = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (residual(refit, source[k], target[k]) <= cfg.inlier_threshold) ++count;
  }
  if (count < 3) return Rejection{"refit keeps fewer than 3 inliers"};
  return SimilarityEstimate{refit, count, std::move(best_inliers)};
}

int required_valid_frames(int total_frames, const SimilarityRansacConfig& cfg) {
  // The epsilon absorbs binary representation error of the fraction (0.2·20).
  const int by_fraction = int(std::ceil(cfg.min_valid_fraction * double(std::max(total_frames, 0)) - 1e-9));
  return std::max(cfg.min_valid_frames, by_fraction);
}

Result<SimilarityTransform> average_similarity(std::span<const SimilarityEstimate> estimates, int total_frames,
                                               const SimilarityRansacConfig& cfg) {
  const int required = required_valid_frames(total_frames, cfg);
  if (int(estimates.size()) < required) {
    return Rejection{"quality gate: " + std::to_string(estimates.size()) + " valid frames of " +
                     std::to_string(total_frames) + ", need " + std::to_string(required)};
  }
  const auto same = [&](const SimilarityEstimate& e) {
    const auto& a = e.transform;
    const auto& b = estimates.front().transform;
    return a.scale == b.scale && a.rotation == b.rotation && a.translation == b.translation;
  };
  if (std::all_of(estimates.begin(), estimates.end(), same)) return estimates.front().transform;

  double weight_sum = 0.0;
  for (const auto& e : estimates) weight_sum += std::max(e.inlier_count, 0);
  const bool uniform = !(weight_sum > 0.0);
  if (uniform) weight_sum = double(estimates.size());

  double log_scale = 0.0;
  Vec3 translation = Vec3::Zero();
  Mat3 rotation_sum = Mat3::Zero();
  for (const auto& e : estimates) {
    const double w = uniform ? 1.0 : double(std::max(e.inlier_count, 0));
    if (!(e.transform.scale > 0.0)) throw InvalidInput("average_similarity: non-positive scale");
    log_scale += w * std::log(e.transform.scale);
    translation += w * e.transform.translation;
    rotation_sum += w * e.transform.rotation;
  }
  SimilarityTransform out;
  out.scale = std::exp(log_scale / weight_sum);
  out.translation = translation / weight_sum;
  out.rotation = geom::project_to_so3(rotation_sum);
  return out;
}

}  // namespace worldscaffold::registration
