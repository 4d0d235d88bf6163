#pragma once

// 3D box evaluation: IoU, corner Chamfer, attribute errors, 2D matching and
// hit rates.

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "worldscaffold/geom.hpp"
#include "worldscaffold/obbfit.hpp"

namespace worldscaffold::metrics {

using geom::Obb;

/// Index of the box axis within `tol` of ±world z, or −1.
int upright_axis(const Obb& box, double tol = 1e-3);

/// Exact IoU for upright boxes: footprint clipping area × vertical overlap.
/// Throws InvalidInput for a box that is not upright (use monte_carlo_iou).
double iou3d(const Obb& a, const Obb& b);

struct MonteCarloIou {
  double iou = 0.0;
  double std_error = 0.0;
  std::int64_t samples = 0;
};

/// Rejection sampling over the joint bounding box of both boxes.
MonteCarloIou monte_carlo_iou(const Obb& a, const Obb& b, std::int64_t samples = 1'000'000, std::uint64_t seed = 0);

/// Mean nearest-corner distance in both directions (summed). With smooth_l1
/// each pair distance is Σ smoothL1(Δ, β = 1); with normalize the result is
/// divided by the GT space diagonal.
double chamfer_corners(const Obb& pred, const Obb& gt, bool smooth_l1 = false, bool normalize = false);

struct AttributeErrors {
  double center_l2 = 0.0;
  double dims_l1 = 0.0;
  double rotation = 0.0;
};

/// Yaw of a box: the stored value, else the heading of its first
/// non-vertical axis.
double box_yaw(const Obb& box);

/// Rotation error is |wrap(θp − θg)| in [0, π]; with mod_pi it is reduced by
/// box symmetry into [0, π/2].
AttributeErrors attribute_errors(const Obb& pred, const Obb& gt, bool mod_pi = false);

struct BoxPrediction {
  obbfit::Detection2d det;
  Obb box;
};

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (pred index, gt index)
  std::vector<int> unmatched_preds;
  std::vector<int> unmatched_gts;
};

/// Predictions in descending 2D score order each take the unmatched
/// same-class GT with the highest 2D IoU ≥ iou_thr.
MatchResult match_greedy(const std::vector<BoxPrediction>& preds, const std::vector<BoxPrediction>& gts,
                         double iou_thr = 0.5);

struct HitRates {
  std::map<double, double> rates;
  bool empty = false;
};

HitRates hit_rates(const std::vector<double>& pair_ious, const std::vector<double>& thresholds = {0.5, 0.75});

}  // namespace worldscaffold::metrics
