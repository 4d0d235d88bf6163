#pragma once

#include <vector>

#include "worldscaffold/geom.hpp"

namespace worldscaffold::metrics {

using geom::Vec2;
using Polygon2 = std::vector<Vec2>;

/// Shoelace area, positive for counter-clockwise vertex order.
double signed_area(const Polygon2& poly);

/// True when every turn has the same orientation (collinear runs allowed).
bool is_convex(const Polygon2& poly);

/// Sutherland–Hodgman clipping of `subject` against a convex,
/// counter-clockwise `clip` polygon. Exact for convex subjects; an empty
/// result means the polygons do not overlap.
Polygon2 clip_convex_polygon(const Polygon2& subject, const Polygon2& clip);

/// Counter-clockwise convex hull without collinear vertices (monotone chain).
Polygon2 convex_hull(std::vector<Vec2> points);

}  // namespace worldscaffold::metrics
