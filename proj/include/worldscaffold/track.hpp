#pragma once

// Box trajectory smoothing, the last-known-state feature buffer, static
// fill, union boxes and pairwise box features.

#include <cstdint>
#include <optional>
#include <vector>

#include "worldscaffold/floor_align.hpp"
#include "worldscaffold/geom.hpp"

namespace worldscaffold::track {

using geom::Obb;
using geom::Vec3;

struct BoxState {
  Vec3 center = Vec3::Zero();
  Vec3 extents = Vec3::Zero();
  double yaw = 0.0;
};

/// One optional state per frame; nullopt marks a frame without a box.
using TrackSequence = std::vector<std::optional<BoxState>>;

struct KalmanConfig {
  double process_noise = 1e-5;
  double measurement_noise = 1e-2;
  double initial_velocity_variance = 1.0;

  void validate() const;
};

/// Constant-velocity Kalman filter plus RTS smoother, run on each of the
/// seven channels independently. The model per channel is
///   x = (p, v),  F = [[1, 1], [0, 1]],  Q = q·[[1/4, 1/2], [1/2, 1]],
///   H = [1, 0],  R = r,  x₀ = (z₀, 0),  P₀ = diag(r, σ_v²).
/// Yaw is unwrapped first and wrapped back to [−π, π). Frames outside the
/// first..last present range stay empty. Throws InvalidInput when no frame
/// is present.
TrackSequence kalman_rts_smooth(const TrackSequence& seq, const KalmanConfig& cfg = {});

/// Smooths one scalar series; missing entries are prediction-only steps.
/// Returns values for indices first..last present, empty outside.
std::vector<std::optional<double>> kalman_rts_smooth_channel(const std::vector<std::optional<double>>& z,
                                                             const KalmanConfig& cfg = {});

inline constexpr int kStalenessSentinel = 1000;

struct WorldState {
  int num_frames = 0;
  int num_objects = 0;
  int feature_dim = 0;
  std::vector<std::uint8_t> visibility;  // T×N, row-major by frame
  std::vector<int> labels;               // N
  std::vector<std::uint8_t> static_flags;  // N
  std::vector<float> features;           // T×N×D
  int staleness_sentinel = kStalenessSentinel;

  bool visible(int t, int n) const { return visibility[std::size_t(t) * num_objects + n] != 0; }
  void validate() const;
};

struct LksBuffer {
  std::vector<float> buffered;  // T×N×D
  std::vector<int> staleness;   // T×N
};

/// Zero-order hold from the nearest visible frame (ties prefer the past).
/// Objects never visible get zero features and the sentinel staleness.
LksBuffer lks_buffer(const WorldState& ws);

/// Nearest index with a value, ties to the past; −1 if none. Shared by the
/// buffer and static fill.
std::vector<int> nearest_present(const std::vector<bool>& present);

/// boxes[n][t]. Static objects get each missing frame filled from the nearest
/// boxed frame (ties to the past), with `frame` set to t.
std::vector<std::vector<std::optional<Obb>>> fill_static_frames(
    const WorldState& ws, const std::vector<std::vector<std::optional<Obb>>>& boxes);

/// Floor-parallel box over the pooled corners of all boxes.
Obb union_obb(const std::vector<Obb>& boxes, const floor_align::FloorFrame& floor);

struct PairwiseGeom {
  double distance = 0.0;
  Vec3 direction = Vec3::Zero();
  double log_volume_ratio = 0.0;
};

/// d = √(‖cₐ − c_b‖² + ε), d̂ = (cₐ − c_b)/d, ρ = log Vₐ − log V_b.
PairwiseGeom pairwise_features(const Obb& a, const Obb& b, double eps = 1e-6);

}  // namespace worldscaffold::track
