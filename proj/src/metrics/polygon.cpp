#include "worldscaffold/metrics/polygon.hpp"

#include <algorithm>
#include <cmath>

namespace worldscaffold::metrics {

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

double signed_area(const Polygon2& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) twice += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * twice;
}

bool is_convex(const Polygon2& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    const Vec2& c = poly[(i + 2) % n];
    const double turn = cross(b - a, c - b);
    if (turn == 0.0) continue;
    const int s = turn > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    else if (s != sign) return false;
  }
  // A star-shaped loop can have consistent turns and still wind twice.
  double winding = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e0 = poly[(i + 1) % n] - poly[i];
    const Vec2 e1 = poly[(i + 2) % n] - poly[(i + 1) % n];
    winding += std::atan2(cross(e0, e1), e0.dot(e1));
  }
  return sign != 0 && std::abs(std::abs(winding) - 2.0 * M_PI) < 1e-6;
}

Polygon2 clip_convex_polygon(const Polygon2& subject, const Polygon2& clip) {
  Polygon2 output = subject;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % m];
    const Vec2 edge = b - a;
    const Polygon2 input = std::move(output);
    output.clear();
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& cur = input[i];
      const Vec2& prev = input[(i + n - 1) % n];
      const double side_cur = cross(edge, cur - a);
      const double side_prev = cross(edge, prev - a);
      if (side_cur >= 0) {
        if (side_prev < 0) {
          const double t = side_prev / (side_prev - side_cur);
          output.push_back(prev + t * (cur - prev));
        }
        output.push_back(cur);
      } else if (side_prev >= 0) {
        const double t = side_prev / (side_prev - side_cur);
        output.push_back(prev + t * (cur - prev));
      }
    }
  }
  if (output.size() < 3) output.clear();
  return output;
}

Polygon2 convex_hull(std::vector<Vec2> points) {
  std::sort(points.begin(), points.end(), [](const Vec2& p, const Vec2& q) {
    return p.x() < q.x() || (p.x() == q.x() && p.y() < q.y());
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) return points;
  Polygon2 hull(2 * points.size());
  std::size_t k = 0;
  for (const auto& p : points) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
    const Vec2& p = points[i];
    while (k >= lower && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace worldscaffold::metrics
