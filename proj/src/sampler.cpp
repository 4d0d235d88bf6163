#include "worldscaffold/sampler.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/SVD>

#include "worldscaffold/error.hpp"
#include "worldscaffold/metrics/polygon.hpp"

namespace worldscaffold::sampler {

MatchSet ratio_match(const FrameFeatures& a, const FrameFeatures& b, double ratio) {
  MatchSet out;
  out.ratio = ratio;
  if (b.descriptors.rows() < 2 || a.descriptors.rows() == 0) return out;
  if (a.descriptors.cols() != b.descriptors.cols()) {
    throw InvalidInput("ratio_match: descriptor dimensions differ (" +
                       std::to_string(a.descriptors.cols()) + " vs " +
                       std::to_string(b.descriptors.cols()) + ")");
  }
  const Eigen::MatrixXd da = a.descriptors.cast<double>();
  const Eigen::MatrixXd db = b.descriptors.cast<double>();
  for (Eigen::Index i = 0; i < da.rows(); ++i) {
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = d1;
    Eigen::Index j1 = -1;
    for (Eigen::Index j = 0; j < db.rows(); ++j) {
      const double d = (da.row(i) - db.row(j)).norm();
      if (d < d1) {
        d2 = d1;
        d1 = d;
        j1 = j;
      } else if (d < d2) {
        d2 = d;
      }
    }
    // d1 / d2 < ratio, written so that d2 == 0 rejects.
    if (d1 < ratio * d2) out.pairs.emplace_back(int(i), int(j1));
  }
  return out;
}

namespace {

struct Normalizer {
  Mat3 t = Mat3::Identity();
  bool ok = false;
};

// Hartley normalization: centroid to the origin, mean distance sqrt(2).
Normalizer hartley(std::span<const Vec2> pts) {
  Normalizer n;
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= double(pts.size());
  double spread = 0.0;
  for (const auto& p : pts) spread += (p - mean).norm();
  spread /= double(pts.size());
  if (!(spread > 1e-12)) return n;
  const double s = std::sqrt(2.0) / spread;
  n.t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  n.ok = true;
  return n;
}

bool has_collinear_triple(const std::array<Vec2, 4>& p) {
  static constexpr int kTriples[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  double scale = 0.0;
  for (const auto& q : p) scale = std::max(scale, (q - p[0]).squaredNorm());
  for (const auto& tr : kTriples) {
    const Vec2 u = p[tr[1]] - p[tr[0]];
    const Vec2 v = p[tr[2]] - p[tr[0]];
    if (std::abs(u.x() * v.y() - u.y() * v.x()) <= 1e-10 * std::max(scale, 1e-300)) return true;
  }
  return false;
}

int count_inliers(const Mat3& h, std::span<const Vec2> src, std::span<const Vec2> dst, double thr,
                  std::vector<int>* inliers = nullptr) {
  int count = 0;
  if (inliers) inliers->clear();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (reprojection_error(h, src[i], dst[i]) <= thr) {
      ++count;
      if (inliers) inliers->push_back(int(i));
    }
  }
  return count;
}

}  // namespace

std::optional<Mat3> homography_dlt(std::span<const Vec2> src, std::span<const Vec2> dst) {
  if (src.size() != dst.size() || src.size() < 4) return std::nullopt;
  const Normalizer ns = hartley(src);
  const Normalizer nd = hartley(dst);
  if (!ns.ok || !nd.ok) return std::nullopt;

  const Eigen::Index n = Eigen::Index(src.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d s = ns.t * src[i].homogeneous();
    const Eigen::Vector3d d = nd.t * dst[i].homogeneous();
    const double x = s.x(), y = s.y(), u = d.x(), v = d.y();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Mat3 out = nd.t.inverse() * hn * ns.t;
  if (std::abs(out(2, 2)) > 1e-12) out /= out(2, 2);
  else out /= out.norm();
  if (!out.allFinite()) return std::nullopt;
  return out;
}

double reprojection_error(const Mat3& h, const Vec2& src, const Vec2& dst) {
  const Eigen::Vector3d p = h * src.homogeneous();
  if (std::abs(p.z()) < 1e-12) return std::numeric_limits<double>::infinity();
  return (p.hnormalized() - dst).norm();
}

std::optional<Homography> ransac_homography(std::span<const Vec2> src, std::span<const Vec2> dst,
                                            const SamplerConfig& cfg) {
  if (src.size() != dst.size()) throw InvalidInput("ransac_homography: mismatched pair lists");
  const std::size_t n = src.size();
  if (n < 4) return std::nullopt;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  Mat3 best_h = Mat3::Identity();
  int best_count = -1;
  double needed = double(cfg.ransac_iters);
  for (int iter = 0; iter < cfg.ransac_iters && double(iter) < needed; ++iter) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = pick(rng);
        fresh = std::find(idx.begin(), idx.begin() + k, idx[k]) == idx.begin() + k;
      }
    }
    std::array<Vec2, 4> s, d;
    for (int k = 0; k < 4; ++k) {
      s[k] = src[idx[k]];
      d[k] = dst[idx[k]];
    }
    if (has_collinear_triple(s) || has_collinear_triple(d)) continue;
    const auto h = homography_dlt(s, d);
    if (!h) continue;
    const int count = count_inliers(*h, src, dst, cfg.ransac_threshold);
    if (count > best_count) {
      best_count = count;
      best_h = *h;
      const double w = double(count) / double(n);
      if (w >= 1.0) {
        needed = 0.0;
      } else if (w > 0.0) {
        const double denom = std::log(1.0 - std::pow(w, 4));
        if (denom < 0.0) needed = std::log(1.0 - cfg.ransac_confidence) / denom;
      }
    }
  }
  if (best_count < 4) return std::nullopt;

  std::vector<int> inliers;
  count_inliers(best_h, src, dst, cfg.ransac_threshold, &inliers);
  std::vector<Vec2> in_src, in_dst;
  for (int i : inliers) {
    in_src.push_back(src[i]);
    in_dst.push_back(dst[i]);
  }
  Homography out{best_h, best_count};
  if (const auto refit = homography_dlt(in_src, in_dst)) {
    const int refit_count = count_inliers(*refit, src, dst, cfg.ransac_threshold);
    if (refit_count >= best_count) out = {*refit, refit_count};
  }
  if (out.inlier_count < 4) return std::nullopt;
  return out;
}

double overlap_fraction(const Homography& h, ImageSize dims_a, ImageSize dims_b) {
  if (dims_a.width <= 0 || dims_a.height <= 0 || dims_b.width <= 0 || dims_b.height <= 0) return 0.0;
  const double wb = dims_b.width, hb = dims_b.height;
  const std::array<Vec2, 4> corners{Vec2(0, 0), Vec2(wb, 0), Vec2(wb, hb), Vec2(0, hb)};
  metrics::Polygon2 quad;
  int sign = 0;
  for (const auto& c : corners) {
    const Eigen::Vector3d p = h.matrix * c.homogeneous();
    if (!p.allFinite() || std::abs(p.z()) < 1e-12) return 0.0;
    const int s = p.z() > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    else if (s != sign) return 0.0;  // the quad straddles the line at infinity
    quad.push_back(p.hnormalized());
  }
  double area = metrics::signed_area(quad);
  if (area < 0) {
    std::reverse(quad.begin(), quad.end());
    area = -area;
  }
  if (area < 1e-9 * wb * hb || !metrics::is_convex(quad)) return 0.0;

  const double wa = dims_a.width, ha = dims_a.height;
  const metrics::Polygon2 rect{Vec2(0, 0), Vec2(wa, 0), Vec2(wa, ha), Vec2(0, ha)};
  const double inter = metrics::signed_area(metrics::clip_convex_polygon(quad, rect));
  return std::clamp(inter / (wa * ha), 0.0, 1.0);
}

double homography_overlap(const FrameFeatures& ref, const FrameFeatures& cand, ImageSize dims,
                          const SamplerConfig& cfg) {
  if (ref.size() < 4 || cand.size() < 4) return 0.0;
  const MatchSet matches = ratio_match(ref, cand, cfg.ratio);
  if (matches.pairs.size() < 4) return 0.0;
  std::vector<Vec2> src, dst;
  src.reserve(matches.pairs.size());
  dst.reserve(matches.pairs.size());
  for (const auto& [ia, ib] : matches.pairs) {
    src.push_back(cand.keypoints[ib]);
    dst.push_back(ref.keypoints[ia]);
  }
  const auto h = ransac_homography(src, dst, cfg);
  if (!h) return 0.0;
  return overlap_fraction(*h, dims, dims);
}

std::vector<std::size_t> greedy_select_positions(std::size_t count, const OverlapFn& overlap,
                                                 const std::set<std::size_t>& annotated_positions,
                                                 double overlap_threshold, int min_frames) {
  if (count == 0) return {};
  std::set<std::size_t> selected{0};
  std::size_t ref = 0;
  for (std::size_t t = 1; t < count; ++t) {
    if (overlap(ref, t) < overlap_threshold) {
      selected.insert(t);
      ref = t;
    }
  }
  auto inject = [&](std::set<std::size_t>& s) {
    for (std::size_t a : annotated_positions) {
      if (a < count) s.insert(a);
    }
  };
  inject(selected);
  if (selected.size() < std::size_t(std::max(min_frames, 0))) {
    const std::size_t stride =
        std::max<std::size_t>(1, min_frames > 0 ? count / std::size_t(min_frames) : 1);
    selected.clear();
    for (std::size_t t = 0; t < count; t += stride) selected.insert(t);
    inject(selected);
  }
  return {selected.begin(), selected.end()};
}

std::vector<std::uint32_t> greedy_select(std::span<const FrameFeatures> features,
                                         const std::set<std::uint32_t>& annotated, ImageSize dims,
                                         const SamplerConfig& cfg) {
  if (features.empty()) return {};
  for (std::size_t i = 1; i < features.size(); ++i) {
    if (features[i].frame_index <= features[i - 1].frame_index) {
      throw InvalidInput("greedy_select: features must be strictly ordered by frame index");
    }
  }
  std::set<std::size_t> annotated_pos;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (annotated.count(features[i].frame_index)) annotated_pos.insert(i);
  }
  const OverlapFn overlap = [&](std::size_t ref, std::size_t cand) {
    return homography_overlap(features[ref], features[cand], dims, cfg);
  };
  const auto positions =
      greedy_select_positions(features.size(), overlap, annotated_pos, cfg.overlap_threshold, cfg.min_frames);
  std::vector<std::uint32_t> out;
  out.reserve(positions.size());
  for (std::size_t p : positions) out.push_back(features[p].frame_index);
  return out;
}

}  // namespace worldscaffold::sampler
