#pragma once

// Per-video workspace: directory layout, artifact readers and writers, and
// the advisory lock.
//
//   manifest.json            video id, frame count, image size
//   features/%06d.bin        keypoints + descriptors per frame
//   masks_image/, masks_video/  %06d_<label>.png, unioned on load
//   clouds/static.ply        static scene cloud
//   clouds/frame_%06d.ply    dense per-pixel world points (W·H vertices, NaN = invalid)
//   depth/%06d.f32           optional depth map used for edge suppression
//   poses.json intrinsics.json detections.json gt2d.json static_flags.json
//   smpl_correspondences.json  per-frame point pairs for the floor similarity
//   floor_mesh.ply corrections.json
//   graphs/{pred,gt}.json, graphs/labels_{pred,gt}.json
//   eval_geom/{pred,gt}.json
//   world_state/{manifest.json,features.f32,visibility.json}
//   out/                     stage outputs (deterministic)
//   reports/                 stage reports with timings

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "worldscaffold/cloud.hpp"
#include "worldscaffold/floor_align.hpp"
#include "worldscaffold/geom.hpp"
#include "worldscaffold/metrics/scene_graph.hpp"
#include "worldscaffold/obbfit.hpp"
#include "worldscaffold/sampler.hpp"
#include "worldscaffold/track.hpp"

namespace worldscaffold::pipeline {

namespace fs = std::filesystem;
using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct Manifest {
  std::string video_id;
  int frame_count = 0;
  int image_width = 0;
  int image_height = 0;
};

class Workspace {
 public:
  /// Reads manifest.json; MissingDependency("manifest") when absent.
  static Workspace open(const fs::path& root);

  const fs::path& root() const { return root_; }
  const Manifest& manifest() const { return manifest_; }
  fs::path path(const std::string& rel) const { return root_ / rel; }
  bool exists(const std::string& rel) const { return fs::exists(root_ / rel); }

  fs::path feature_path(int frame) const;
  fs::path frame_cloud_path(int frame) const;
  fs::path depth_path(int frame) const;
  fs::path out(const std::string& rel) const { return root_ / "out" / rel; }

  /// True when either mask directory exists.
  bool has_masks() const;
  /// (frame, label) -> mask files from both mask directories.
  std::map<std::pair<int, int>, std::vector<fs::path>> mask_index() const;
  /// Union of the image- and video-mode masks of one frame, per label.
  std::map<int, cloud::BinaryMask> load_masks(int frame) const;

 private:
  fs::path root_;
  Manifest manifest_;
};

std::string frame_name(int frame);  // %06d
void write_manifest(const fs::path& root, const Manifest& m);

/// Exclusive flock on <root>/.lock for the lifetime of the object. Throws
/// InvalidInput when another process holds it.
class WorkspaceLock {
 public:
  explicit WorkspaceLock(const fs::path& root);
  ~WorkspaceLock();
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

 private:
  int fd_ = -1;
};

// Feature file: "WSFT", u32 version = 1, u32 frame_index, u32 n, u32 dim,
// n·2 float32 keypoints, n·dim float32 descriptors, little-endian.
sampler::FrameFeatures read_features(const fs::path& path);
void write_features(const fs::path& path, const sampler::FrameFeatures& f);

/// Dense frame cloud: vertex (y·W + x) is pixel (x, y).
obbfit::PointMap read_point_map(const fs::path& path, int width, int height);

struct CameraPoses {
  geom::PoseConvention convention = geom::PoseConvention::CameraToWorld;
  std::map<int, geom::RigidTransform> poses;
};

struct FrameCorrespondences {
  int frame = 0;
  std::vector<geom::Vec3> source;
  std::vector<geom::Vec3> target;
};

enum class PropagationDirection { Forward, Backward, Both };

struct BoxEdit {
  int label = 0;
  int frame = 0;
  geom::Vec3 scale = geom::Vec3::Ones();
  geom::Mat3 rotation = geom::Mat3::Identity();
  geom::Vec3 translation = geom::Vec3::Zero();
  PropagationDirection direction = PropagationDirection::Forward;
  std::optional<int> count;  // nullopt = All
};

struct LabelRename {
  int from = 0;
  int to = 0;
};

struct BoxDeletion {
  int label = 0;
  std::optional<std::vector<int>> frames;  // nullopt = every frame
};

struct Corrections {
  floor_align::CorrectionTransform floor;
  std::vector<BoxEdit> edits;
  std::vector<LabelRename> renames;
  std::vector<BoxDeletion> deletions;
};

// JSON codecs. Readers raise ParseError(path, 0, ...) for schema violations;
// `path` only labels the message.
Json to_json(const geom::Vec3& v);
Json to_json(const geom::Mat3& m);
Json to_json(const geom::RigidTransform& t);
Json to_json(const geom::SimilarityTransform& t);
Json to_json(const geom::Obb& b);
geom::Vec3 vec3_from_json(const Json& j, const std::string& path);
geom::Mat3 mat3_from_json(const Json& j, const std::string& path);
geom::RigidTransform rigid_from_json(const Json& j, const std::string& path);
geom::SimilarityTransform similarity_from_json(const Json& j, const std::string& path);
/// Rebuilds the box from its corners; label, frame and yaw are carried over.
geom::Obb obb_from_json(const Json& j, const std::string& path);

CameraPoses read_poses(const fs::path& path);
Json poses_to_json(const CameraPoses& p);
std::vector<obbfit::Detection2d> read_detections(const fs::path& path, bool ground_truth);
std::map<int, bool> read_static_flags(const fs::path& path);
std::vector<FrameCorrespondences> read_correspondences(const fs::path& path);
Corrections read_corrections(const fs::path& path);
floor_align::FloorMesh read_floor_mesh(const fs::path& path);

/// Graph files: {frames: [{frame, gt: [[s,o,p]...], candidates: [[s,o,p,score]...]}]}.
std::vector<metrics::SceneGraphFrame> read_graph_file(const fs::path& path);
/// Candidates from `pred`, GT from `gt`, joined by frame.
std::vector<metrics::SceneGraphFrame> join_graphs(const std::vector<metrics::SceneGraphFrame>& pred,
                                                  const std::vector<metrics::SceneGraphFrame>& gt);
std::vector<metrics::ScoredLabel> read_scored_labels(const fs::path& path);
std::vector<metrics::LabeledInstance> read_label_instances(const fs::path& path);

/// {schema_version, boxes: [...]}.
std::vector<geom::Obb> read_boxes(const fs::path& path);
Json boxes_to_json(const std::vector<geom::Obb>& boxes);

track::WorldState read_world_state(const fs::path& dir);
void write_world_state(const fs::path& dir, const track::WorldState& ws);

/// {schema_version: 1, ...body}.
Json versioned(Json body);

}  // namespace worldscaffold::pipeline
