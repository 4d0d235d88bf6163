#include "worldscaffold/track.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "worldscaffold/error.hpp"
#include "worldscaffold/obbfit.hpp"

namespace worldscaffold::track {

namespace {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

double wrap_pi(double a) {
  a = std::fmod(a + M_PI, 2 * M_PI);
  if (a < 0) a += 2 * M_PI;
  return a - M_PI;
}

}  // namespace

void KalmanConfig::validate() const {
  if (!(process_noise > 0) || !(measurement_noise > 0) || !(initial_velocity_variance > 0)) {
    throw InvalidInput("kalman config: noise parameters must be positive");
  }
}

std::vector<std::optional<double>> kalman_rts_smooth_channel(const std::vector<std::optional<double>>& z,
                                                             const KalmanConfig& cfg) {
  cfg.validate();
  int first = -1, last = -1;
  for (int t = 0; t < int(z.size()); ++t) {
    if (!z[t]) continue;
    if (!std::isfinite(*z[t])) throw InvalidInput("kalman: non-finite measurement at frame " + std::to_string(t));
    if (first < 0) first = t;
    last = t;
  }
  if (first < 0) throw InvalidInput("kalman: no present frames");

  Mat2 F;
  F << 1, 1, 0, 1;
  Mat2 Q;
  Q << 0.25, 0.5, 0.5, 1.0;
  Q *= cfg.process_noise;
  const double r = cfg.measurement_noise;

  const int n = last - first + 1;
  std::vector<Vec2> xf(n), xp(n);
  std::vector<Mat2> pf(n), pp(n);
  xf[0] = Vec2(*z[first], 0.0);
  pf[0] = Vec2(r, cfg.initial_velocity_variance).asDiagonal();
  xp[0] = xf[0];
  pp[0] = pf[0];
  for (int k = 1; k < n; ++k) {
    xp[k] = F * xf[k - 1];
    pp[k] = F * pf[k - 1] * F.transpose() + Q;
    xf[k] = xp[k];
    pf[k] = pp[k];
    if (const auto& m = z[first + k]) {
      const double s = pp[k](0, 0) + r;
      const Vec2 gain = pp[k].col(0) / s;
      xf[k] = xp[k] + gain * (*m - xp[k](0));
      pf[k] = pp[k] - gain * pp[k].row(0);
    }
  }
  std::vector<Vec2> xs(xf);
  for (int k = n - 2; k >= 0; --k) {
    const Mat2 c = pf[k] * F.transpose() * pp[k + 1].inverse();
    xs[k] = xf[k] + c * (xs[k + 1] - xp[k + 1]);
  }
  std::vector<std::optional<double>> out(z.size());
  for (int k = 0; k < n; ++k) out[first + k] = xs[k](0);
  return out;
}

TrackSequence kalman_rts_smooth(const TrackSequence& seq, const KalmanConfig& cfg) {
  const std::size_t T = seq.size();
  std::vector<std::vector<std::optional<double>>> ch(7, std::vector<std::optional<double>>(T));
  std::optional<double> prev_yaw;
  for (std::size_t t = 0; t < T; ++t) {
    if (!seq[t]) continue;
    const BoxState& b = *seq[t];
    if (!b.center.allFinite() || !b.extents.allFinite() || !std::isfinite(b.yaw)) {
      throw InvalidInput("kalman: non-finite box state at frame " + std::to_string(t));
    }
    for (int i = 0; i < 3; ++i) {
      ch[i][t] = b.center[i];
      ch[3 + i][t] = b.extents[i];
    }
    double y = b.yaw;
    if (prev_yaw) y = *prev_yaw + wrap_pi(y - *prev_yaw);
    ch[6][t] = y;
    prev_yaw = y;
  }
  if (!prev_yaw) throw InvalidInput("kalman: no present frames");

  std::vector<std::vector<std::optional<double>>> sm(7);
  for (int i = 0; i < 7; ++i) sm[i] = kalman_rts_smooth_channel(ch[i], cfg);
  TrackSequence out(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (!sm[0][t]) continue;
    BoxState b;
    for (int i = 0; i < 3; ++i) {
      b.center[i] = *sm[i][t];
      b.extents[i] = *sm[3 + i][t];
    }
    b.yaw = wrap_pi(*sm[6][t]);
    out[t] = b;
  }
  return out;
}

void WorldState::validate() const {
  if (num_frames < 0 || num_objects < 0 || feature_dim < 0) throw InvalidInput("world state: negative dimension");
  const std::size_t tn = std::size_t(num_frames) * num_objects;
  if (visibility.size() != tn) throw InvalidInput("world state: visibility must be T×N");
  if (labels.size() != std::size_t(num_objects)) throw InvalidInput("world state: labels must have N entries");
  if (!static_flags.empty() && static_flags.size() != std::size_t(num_objects)) {
    throw InvalidInput("world state: static flags must have N entries");
  }
  if (features.size() != tn * feature_dim) throw InvalidInput("world state: features must be T×N×D");
  if (staleness_sentinel != kStalenessSentinel) throw InvalidInput("world state: staleness sentinel must be 1000");
}

std::vector<int> nearest_present(const std::vector<bool>& present) {
  const int T = int(present.size());
  std::vector<int> past(T, -1), future(T, -1), out(T, -1);
  for (int t = 0, last = -1; t < T; ++t) {
    if (present[t]) last = t;
    past[t] = last;
  }
  for (int t = T - 1, next = -1; t >= 0; --t) {
    if (present[t]) next = t;
    future[t] = next;
  }
  for (int t = 0; t < T; ++t) {
    if (past[t] < 0) out[t] = future[t];
    else if (future[t] < 0) out[t] = past[t];
    else out[t] = (t - past[t] <= future[t] - t) ? past[t] : future[t];
  }
  return out;
}

LksBuffer lks_buffer(const WorldState& ws) {
  ws.validate();
  const int T = ws.num_frames, N = ws.num_objects, D = ws.feature_dim;
  LksBuffer out;
  out.buffered.assign(ws.features.size(), 0.0f);
  out.staleness.assign(std::size_t(T) * N, ws.staleness_sentinel);
  std::vector<bool> present(T);
  for (int n = 0; n < N; ++n) {
    for (int t = 0; t < T; ++t) present[t] = ws.visible(t, n);
    const std::vector<int> src = nearest_present(present);
    for (int t = 0; t < T; ++t) {
      if (src[t] < 0) continue;
      out.staleness[std::size_t(t) * N + n] = std::abs(t - src[t]);
      const std::size_t from = (std::size_t(src[t]) * N + n) * D, to = (std::size_t(t) * N + n) * D;
      std::copy_n(ws.features.begin() + from, D, out.buffered.begin() + to);
    }
  }
  return out;
}

std::vector<std::vector<std::optional<Obb>>> fill_static_frames(
    const WorldState& ws, const std::vector<std::vector<std::optional<Obb>>>& boxes) {
  if (boxes.size() != std::size_t(ws.num_objects)) throw InvalidInput("fill_static_frames: one box list per object");
  if (ws.static_flags.size() != std::size_t(ws.num_objects)) throw InvalidInput("fill_static_frames: static flags missing");
  auto out = boxes;
  for (int n = 0; n < ws.num_objects; ++n) {
    if (!ws.static_flags[n]) continue;
    auto& seq = out[n];
    std::vector<bool> present(seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) present[t] = seq[t].has_value();
    const std::vector<int> src = nearest_present(present);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (present[t] || src[t] < 0) continue;
      seq[t] = *boxes[n][src[t]];
      seq[t]->frame = int(t);
    }
  }
  return out;
}

Obb union_obb(const std::vector<Obb>& boxes, const floor_align::FloorFrame& floor) {
  if (boxes.empty()) throw InvalidInput("union_obb: no boxes");
  std::vector<Vec3> corners;
  corners.reserve(boxes.size() * 8);
  for (const auto& b : boxes) corners.insert(corners.end(), b.corners.begin(), b.corners.end());
  Obb out = obbfit::floor_parallel_obb(corners, floor);
  out.label = boxes.front().label;
  return out;
}

PairwiseGeom pairwise_features(const Obb& a, const Obb& b, double eps) {
  const double va = geom::obb_volume(a), vb = geom::obb_volume(b);
  if (!(va > 0)) throw InvalidInput("pairwise_features: box a (label " + std::to_string(a.label) + ") has zero volume");
  if (!(vb > 0)) throw InvalidInput("pairwise_features: box b (label " + std::to_string(b.label) + ") has zero volume");
  PairwiseGeom g;
  const Vec3 d = a.center - b.center;
  g.distance = std::sqrt(d.squaredNorm() + eps);
  g.direction = d / g.distance;
  g.log_volume_ratio = std::log(va) - std::log(vb);
  return g;
}

}  // namespace worldscaffold::track
