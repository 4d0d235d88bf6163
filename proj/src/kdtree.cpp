#include "worldscaffold/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace worldscaffold {

namespace {
constexpr std::int32_t kLeafSize = 12;
}

KdTree3::KdTree3(std::span<const geom::Vec3> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, std::int32_t(points_.size()));
  }
}

std::int32_t KdTree3::build(std::int32_t begin, std::int32_t end) {
  const std::int32_t id = std::int32_t(nodes_.size());
  nodes_.push_back({begin, end, -1, -1, -1, 0.0});
  if (end - begin <= kLeafSize) return id;

  geom::Vec3 lo = geom::Vec3::Constant(std::numeric_limits<double>::infinity());
  geom::Vec3 hi = -lo;
  for (std::int32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (!(hi[axis] > lo[axis])) return id;  // all points coincide

  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::int32_t a, std::int32_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = std::int8_t(axis);
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

KdTree3::Hit KdTree3::nearest(const geom::Vec3& query) const {
  Hit best;
  if (points_.empty()) return best;
  double best_sq = std::numeric_limits<double>::infinity();
  search(0, query, best, best_sq);
  best.distance = std::sqrt(best_sq);
  return best;
}

void KdTree3::search(std::int32_t id, const geom::Vec3& q, Hit& best, double& best_sq) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (std::int32_t i = node.begin; i < node.end; ++i) {
      const std::int32_t idx = order_[i];
      const double d = (points_[idx] - q).squaredNorm();
      // Ties resolve to the lowest point index for determinism.
      if (d < best_sq || (d == best_sq && idx < best.index)) {
        best_sq = d;
        best.index = idx;
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::int32_t near = diff < 0 ? node.left : node.right;
  const std::int32_t far = diff < 0 ? node.right : node.left;
  search(near, q, best, best_sq);
  if (diff * diff <= best_sq) search(far, q, best, best_sq);
}

}  // namespace worldscaffold
