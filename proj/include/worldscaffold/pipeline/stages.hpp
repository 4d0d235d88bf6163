#pragma once

// Stage execution over a workspace. The build order is
// sample → merge → floor → fit → smooth → finalize; eval-geom, eval-sgg and
// lks read only their own inputs.

#include <optional>
#include <string>
#include <vector>

#include "worldscaffold/floor_align.hpp"
#include "worldscaffold/pipeline/config.hpp"
#include "worldscaffold/pipeline/workspace.hpp"

namespace worldscaffold::pipeline {

enum class Stage { Sample, Merge, Floor, Fit, Smooth, Finalize, EvalGeom, EvalSgg, Lks };

std::optional<Stage> parse_stage(const std::string& name);
std::string stage_name(Stage s);
/// Stages that must run before `s` (empty for eval-* and lks).
std::vector<Stage> upstream(Stage s);

struct StageReport {
  std::string stage;
  double seconds = 0.0;
  Json counts = Json::object();
  std::vector<std::string> warnings;

  Json to_json() const;
};

/// Runs one stage; outputs go under out/ atomically.
StageReport run_stage(const Workspace& ws, Stage s, const PipelineConfig& cfg);

/// Locks the workspace, runs the upstream chain unless `stage_only`, then the
/// stage itself, and writes reports/<stage>.json for each.
std::vector<StageReport> run_pipeline(const fs::path& root, Stage s, const PipelineConfig& cfg, bool stage_only);

/// Everything the floor stage decides.
struct FloorState {
  floor_align::FloorFrame frame;
  floor_align::CorrectionTransform correction;
  floor_align::XyAlignment xy;
  int valid_frames = 0;
};

Json floor_state_to_json(const FloorState& f);
FloorState read_floor_state(const fs::path& path);

/// Floor-parallel box from a smoothed (center in the floor frame, extents,
/// yaw) state; the inverse of box_state_of for floor-parallel boxes.
geom::Obb box_from_state(const track::BoxState& s, const floor_align::FloorFrame& floor);
track::BoxState box_state_of(const geom::Obb& box, const floor_align::FloorFrame& floor);

/// R@K / mR@K block for one constraint mode.
Json scene_graph_report(const std::vector<metrics::SceneGraphFrame>& frames, metrics::ConstraintMode mode,
                        const std::vector<int>& ks);
/// Per-threshold P/R/F1 (micro and macro, per axis and overall).
Json label_report(const std::vector<metrics::ScoredLabel>& preds, const std::vector<metrics::LabeledInstance>& gts,
                  const std::vector<double>& thresholds);

/// Applies box edits, propagation, renames and deletions in that order.
/// Unknown labels or frames raise InvalidInput listing every offender, and
/// nothing is applied.
std::vector<geom::Obb> apply_batch_corrections(const std::vector<geom::Obb>& boxes, const Corrections& c, int frame_count);

/// Reads out/obbs.json and the box section of `corrections` (default: the
/// workspace corrections.json), writes out/obbs_corrected.json.
StageReport apply_corrections(const fs::path& root, const std::optional<fs::path>& corrections);

}  // namespace worldscaffold::pipeline
