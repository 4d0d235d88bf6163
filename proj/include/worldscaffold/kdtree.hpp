#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "worldscaffold/geom.hpp"

namespace worldscaffold {

/// Static 3D kd-tree answering exact nearest-neighbour queries.
class KdTree3 {
 public:
  struct Hit {
    std::int64_t index = -1;  // -1 when the tree is empty
    double distance = 0.0;
  };

  KdTree3() = default;
  explicit KdTree3(std::span<const geom::Vec3> points);

  Hit nearest(const geom::Vec3& query) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::int32_t begin = 0, end = 0;  // leaf range into order_
    std::int32_t left = -1, right = -1;
    std::int8_t axis = -1;  // -1 for leaves
    double split = 0.0;
  };

  std::int32_t build(std::int32_t begin, std::int32_t end);
  void search(std::int32_t node, const geom::Vec3& q, Hit& best, double& best_sq) const;

  std::vector<geom::Vec3> points_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace worldscaffold
