#include "worldscaffold/metrics/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "worldscaffold/error.hpp"
#include "worldscaffold/metrics/polygon.hpp"

namespace worldscaffold::metrics {

namespace {

using geom::Vec3;

Polygon2 footprint(const Obb& box) {
  std::vector<Vec2> pts;
  for (const auto& c : box.corners) pts.emplace_back(c.x(), c.y());
  return convex_hull(std::move(pts));
}

std::pair<double, double> z_range(const Obb& box) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : box.corners) {
    lo = std::min(lo, c.z());
    hi = std::max(hi, c.z());
  }
  return {lo, hi};
}

double smooth_l1(double d) {
  d = std::abs(d);
  return d < 1.0 ? 0.5 * d * d : d - 0.5;
}

double wrap_pi(double a) {
  a = std::fmod(a + M_PI, 2 * M_PI);
  if (a < 0) a += 2 * M_PI;
  return a - M_PI;
}

}  // namespace

int upright_axis(const Obb& box, double tol) {
  for (int k = 0; k < 3; ++k) {
    const Vec3 a = box.rotation.col(k);
    if ((a - Vec3::UnitZ()).norm() <= tol || (a + Vec3::UnitZ()).norm() <= tol) return k;
  }
  return -1;
}

double iou3d(const Obb& a, const Obb& b) {
  if (upright_axis(a) < 0 || upright_axis(b) < 0) {
    throw InvalidInput("iou3d: boxes must be upright (z axis within 1e-3); use monte_carlo_iou for general boxes");
  }
  const double va = geom::obb_volume(a), vb = geom::obb_volume(b);
  const auto [alo, ahi] = z_range(a);
  const auto [blo, bhi] = z_range(b);
  const double dz = std::min(ahi, bhi) - std::max(alo, blo);
  if (dz <= 0) return 0.0;
  const Polygon2 fa = footprint(a), fb = footprint(b);
  if (fa.size() < 3 || fb.size() < 3) return 0.0;
  const double inter = std::abs(signed_area(clip_convex_polygon(fa, fb))) * dz;
  const double uni = va + vb - inter;
  if (!(uni > 0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

MonteCarloIou monte_carlo_iou(const Obb& a, const Obb& b, std::int64_t samples, std::uint64_t seed) {
  if (samples < 10'000) throw InvalidInput("monte_carlo_iou: need at least 10^4 samples");
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto* box : {&a, &b}) {
    for (const auto& c : box->corners) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y()), uz(lo.z(), hi.z());
  std::int64_t in_union = 0, in_both = 0;
  for (std::int64_t i = 0; i < samples; ++i) {
    const Vec3 p(ux(rng), uy(rng), uz(rng));
    const bool ia = geom::obb_contains(a, p, 0.0), ib = geom::obb_contains(b, p, 0.0);
    in_union += (ia || ib);
    in_both += (ia && ib);
  }
  MonteCarloIou out;
  out.samples = samples;
  if (in_union == 0) return out;
  out.iou = double(in_both) / double(in_union);
  out.std_error = std::sqrt(out.iou * (1 - out.iou) / double(in_union));
  return out;
}

double chamfer_corners(const Obb& pred, const Obb& gt, bool use_smooth_l1, bool normalize) {
  const auto dist = [&](const Vec3& p, const Vec3& q) {
    if (!use_smooth_l1) return (p - q).norm();
    const Vec3 d = p - q;
    return smooth_l1(d.x()) + smooth_l1(d.y()) + smooth_l1(d.z());
  };
  const auto one_way = [&](const geom::Corners& from, const geom::Corners& to) {
    double sum = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, dist(p, q));
      sum += best;
    }
    return sum / 8.0;
  };
  double c = one_way(pred.corners, gt.corners) + one_way(gt.corners, pred.corners);
  if (normalize) {
    const double diag = gt.extents.norm();
    if (!(diag > 0)) throw InvalidInput("chamfer_corners: GT box has zero diagonal");
    c /= diag;
  }
  return c;
}

double box_yaw(const Obb& box) {
  if (box.yaw) return *box.yaw;
  // First axis that is not the most vertical one (z up).
  int up = 0;
  for (int k = 1; k < 3; ++k)
    if (std::abs(box.rotation(2, k)) > std::abs(box.rotation(2, up))) up = k;
  const Vec3 x = box.rotation.col(up == 0 ? 1 : 0);
  return std::atan2(x.y(), x.x());
}

AttributeErrors attribute_errors(const Obb& pred, const Obb& gt, bool mod_pi) {
  AttributeErrors e;
  e.center_l2 = (pred.center - gt.center).norm();
  std::array<double, 3> ep{pred.extents[0], pred.extents[1], pred.extents[2]};
  std::array<double, 3> eg{gt.extents[0], gt.extents[1], gt.extents[2]};
  std::sort(ep.begin(), ep.end());
  std::sort(eg.begin(), eg.end());
  for (int k = 0; k < 3; ++k) e.dims_l1 += std::abs(ep[k] - eg[k]);
  e.rotation = std::abs(wrap_pi(box_yaw(pred) - box_yaw(gt)));
  if (mod_pi) e.rotation = std::min(e.rotation, M_PI - e.rotation);
  return e;
}

MatchResult match_greedy(const std::vector<BoxPrediction>& preds, const std::vector<BoxPrediction>& gts,
                         double iou_thr) {
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return preds[i].det.score > preds[j].det.score; });
  std::vector<bool> taken(gts.size(), false);
  MatchResult m;
  for (int i : order) {
    int best = -1;
    double best_iou = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].det.label != preds[i].det.label) continue;
      const double iou = obbfit::iou2d(preds[i].det, gts[g].det);
      if (iou >= iou_thr && iou > best_iou) {
        best = int(g);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      taken[best] = true;
      m.pairs.emplace_back(i, best);
    } else {
      m.unmatched_preds.push_back(i);
    }
  }
  std::sort(m.unmatched_preds.begin(), m.unmatched_preds.end());
  for (std::size_t g = 0; g < gts.size(); ++g)
    if (!taken[g]) m.unmatched_gts.push_back(int(g));
  return m;
}

HitRates hit_rates(const std::vector<double>& pair_ious, const std::vector<double>& thresholds) {
  HitRates h;
  h.empty = pair_ious.empty();
  for (double t : thresholds) {
    if (h.empty) {
      h.rates[t] = 0.0;
      continue;
    }
    const auto hits = std::count_if(pair_ious.begin(), pair_ious.end(), [&](double v) { return v >= t; });
    h.rates[t] = double(hits) / double(pair_ious.size());
  }
  return h;
}

}  // namespace worldscaffold::metrics
