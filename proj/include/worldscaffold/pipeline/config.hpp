#pragma once

// Pipeline configuration: every module config plus the stage-level knobs,
// loaded from TOML over an embedded default.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "worldscaffold/metrics/scene_graph.hpp"
#include "worldscaffold/obbfit.hpp"
#include "worldscaffold/registration.hpp"
#include "worldscaffold/sampler.hpp"
#include "worldscaffold/track.hpp"

namespace worldscaffold::pipeline {

struct CloudConfig {
  double tau_static = 0.1;
  double tau_frame = 0.01;
  double depth_edge_rtol = 0.03;
  double frame_voxel = 0.01;
  double merge_voxel = 0.02;
  int near_black_intensity = 8;
  double near_black_confidence = 1.0;
};

struct FusionConfig {
  double box_threshold = 0.25;  // detections below this score are dropped before NMS
  double nms_iou = 0.5;
};

struct FloorConfig {
  bool mirror = false;
};

struct MetricsConfig {
  std::vector<int> ks{10, 20, 50};
  metrics::ConstraintMode constraint = metrics::ConstraintMode::WithConstraint;
  double match_iou = 0.5;
  std::vector<double> hit_thresholds{0.5, 0.75};
  bool rotation_mod_pi = false;
  std::vector<double> label_thresholds{0.3, 0.5, 0.7, 0.9};
  std::int64_t monte_carlo_samples = 1'000'000;
};

struct PipelineConfig {
  sampler::SamplerConfig sampler;
  registration::IcpConfig icp;
  registration::SimilarityRansacConfig similarity;
  CloudConfig cloud;
  FusionConfig fusion;
  obbfit::ErosionConfig erosion;
  track::KalmanConfig kalman;
  FloorConfig floor;
  MetricsConfig metrics;
  std::uint64_t seed = 0;

  /// Throws InvalidInput for out-of-range values.
  void validate() const;
  /// Copies `seed` into every randomized module config.
  void set_seed(std::uint64_t s);
};

/// The embedded default document. Parsing it yields PipelineConfig{}.
const std::string& default_config_toml();

/// Keys absent from `text` keep their defaults; unknown keys are rejected.
/// TOML syntax errors raise ParseError with the byte offset in `text`.
PipelineConfig parse_config(std::string_view text, const std::string& origin = "<config>");
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace worldscaffold::pipeline
