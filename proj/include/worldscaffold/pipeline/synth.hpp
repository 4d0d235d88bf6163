#pragma once

// Synthetic fixture workspace with known geometry: three objects (two
// static, one moving at constant velocity) over 12 frames of 64×48 images, a
// planted floor similarity, a small per-frame drift for ICP to undo,
// keypoints panning 8 px per frame and a toy scene graph with R@10 = 0.75.

#include <cstdint>
#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "worldscaffold/geom.hpp"

namespace worldscaffold::pipeline {

inline constexpr int kSynthFrames = 12;
inline constexpr int kSynthWidth = 64;
inline constexpr int kSynthHeight = 48;

struct SynthTruth {
  geom::SimilarityTransform similarity;
  std::map<int, bool> static_flags;
  // (label, frame) -> object points in the canonical frame
  std::map<std::pair<int, int>, std::vector<geom::Vec3>> points;
  // (label, frame) -> planted box in the canonical frame
  std::map<std::pair<int, int>, geom::Obb> boxes;
};

/// Writes the fixture into `root` (created if needed) and returns its truth;
/// the truth is also stored as synth_truth.json.
SynthTruth write_synthetic_workspace(const std::filesystem::path& root, std::uint64_t seed = 0);

SynthTruth read_synth_truth(const std::filesystem::path& path);

}  // namespace worldscaffold::pipeline
