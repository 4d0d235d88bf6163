#include "worldscaffold/pipeline/workspace.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <regex>

#include "worldscaffold/error.hpp"
#include "worldscaffold/io.hpp"

namespace worldscaffold::pipeline {

namespace {

using geom::Mat3;
using geom::Vec3;

[[noreturn]] void schema_error(const std::string& path, const std::string& what) { throw ParseError(path, 0, what); }

// Runs `fn`, turning nlohmann type/key errors into ParseError for `path`.
template <typename Fn>
auto guarded(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Json::exception& e) {
    schema_error(path, e.what());
  }
}

Json load(const fs::path& path) {
  io::require_file(path);
  return io::read_json(path);
}

int int_field(const Json& j, const char* key, const std::string& path) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) schema_error(path, std::string("field '") + key + "' must be an integer");
  return j.at(key).get<int>();
}

double num_field(const Json& j, const char* key, const std::string& path) {
  if (!j.contains(key) || !j.at(key).is_number()) schema_error(path, std::string("field '") + key + "' must be a number");
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) schema_error(path, std::string("field '") + key + "' is not finite");
  return v;
}

const Json& array_field(const Json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_array())
    schema_error(path, std::string("field '") + key + "' must be an array");
  return j.at(key);
}

std::array<double, 4> box4(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 4) schema_error(path, "box must be [x1, y1, x2, y2]");
  std::array<double, 4> b{};
  for (int i = 0; i < 4; ++i) {
    if (!j[i].is_number()) schema_error(path, "box entries must be numbers");
    b[i] = j[i].get<double>();
  }
  return b;
}

void check_magic(const std::string& data, const std::string& path) {
  if (data.size() < 4 || data.compare(0, 4, "WSFT") != 0) throw ParseError(path, 0, "bad feature file magic");
}

template <typename T>
T read_le(const std::string& data, std::size_t& off, const std::string& path) {
  if (off + sizeof(T) > data.size()) throw ParseError(path, off, "truncated feature file");
  T v;
  std::memcpy(&v, data.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

template <typename T>
void append_le(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

std::string frame_name(int frame) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", frame);
  return buf;
}

Workspace Workspace::open(const fs::path& root) {
  const fs::path mpath = root / "manifest.json";
  if (!fs::exists(mpath)) throw MissingDependency("manifest");
  const Json j = io::read_json(mpath);
  const std::string p = mpath.string();
  Workspace ws;
  ws.root_ = root;
  if (!j.is_object()) schema_error(p, "manifest must be an object");
  if (!j.contains("video_id") || !j["video_id"].is_string()) schema_error(p, "field 'video_id' must be a string");
  ws.manifest_.video_id = j["video_id"].get<std::string>();
  ws.manifest_.frame_count = int_field(j, "frame_count", p);
  ws.manifest_.image_width = int_field(j, "image_width", p);
  ws.manifest_.image_height = int_field(j, "image_height", p);
  if (ws.manifest_.frame_count <= 0 || ws.manifest_.image_width <= 0 || ws.manifest_.image_height <= 0)
    schema_error(p, "frame_count and image dimensions must be positive");
  return ws;
}

void write_manifest(const fs::path& root, const Manifest& m) {
  io::write_json(root / "manifest.json", versioned({{"video_id", m.video_id},
                                                    {"frame_count", m.frame_count},
                                                    {"image_width", m.image_width},
                                                    {"image_height", m.image_height}}));
}

fs::path Workspace::feature_path(int frame) const { return root_ / "features" / (frame_name(frame) + ".bin"); }
fs::path Workspace::frame_cloud_path(int frame) const { return root_ / "clouds" / ("frame_" + frame_name(frame) + ".ply"); }
fs::path Workspace::depth_path(int frame) const { return root_ / "depth" / (frame_name(frame) + ".f32"); }

bool Workspace::has_masks() const { return fs::is_directory(root_ / "masks_image") || fs::is_directory(root_ / "masks_video"); }

std::map<std::pair<int, int>, std::vector<fs::path>> Workspace::mask_index() const {
  static const std::regex name_re(R"((\d+)_(-?\d+)\.png)");
  std::map<std::pair<int, int>, std::vector<fs::path>> index;
  for (const char* dir : {"masks_image", "masks_video"}) {
    const fs::path d = root_ / dir;
    if (!fs::is_directory(d)) continue;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(d))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::smatch m;
      const std::string name = f.filename().string();
      if (!std::regex_match(name, m, name_re)) throw ParseError(f.string(), 0, "mask name must be <frame>_<label>.png");
      index[{std::stoi(m[1]), std::stoi(m[2])}].push_back(f);
    }
  }
  return index;
}

std::map<int, cloud::BinaryMask> Workspace::load_masks(int frame) const {
  std::map<int, cloud::BinaryMask> out;
  for (const auto& [key, files] : mask_index()) {
    if (key.first != frame) continue;
    cloud::BinaryMask u(manifest_.image_width, manifest_.image_height);
    for (const auto& f : files) {
      const auto m = io::read_mask_png(f);
      if (m.width != u.width || m.height != u.height)
        throw ParseError(f.string(), 0, "mask size differs from the manifest image size");
      for (std::size_t i = 0; i < u.bits.size(); ++i) u.bits[i] = (u.bits[i] || m.bits[i]) ? 1 : 0;
    }
    out.emplace(key.second, std::move(u));
  }
  return out;
}

WorkspaceLock::WorkspaceLock(const fs::path& root) {
  const std::string p = (root / ".lock").string();
  fd_ = ::open(p.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw InvalidInput("cannot open lock file " + p + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw InvalidInput("workspace " + root.string() + " is in use by another process");
  }
}

WorkspaceLock::~WorkspaceLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

sampler::FrameFeatures read_features(const fs::path& path) {
  io::require_file(path);
  const std::string data = io::read_file(path);
  const std::string p = path.string();
  check_magic(data, p);
  std::size_t off = 4;
  const auto version = read_le<std::uint32_t>(data, off, p);
  if (version != 1) throw ParseError(p, 4, "unsupported feature file version " + std::to_string(version));
  sampler::FrameFeatures f;
  f.frame_index = read_le<std::uint32_t>(data, off, p);
  const auto n = read_le<std::uint32_t>(data, off, p);
  const auto dim = read_le<std::uint32_t>(data, off, p);
  const std::size_t need = off + (std::size_t(n) * 2 + std::size_t(n) * dim) * sizeof(float);
  if (data.size() < need) throw ParseError(p, data.size(), "truncated feature file");
  if (data.size() > need) throw ParseError(p, need, "trailing bytes in feature file");
  f.keypoints.resize(n);
  for (auto& k : f.keypoints) {
    const float x = read_le<float>(data, off, p), y = read_le<float>(data, off, p);
    k = geom::Vec2(x, y);
  }
  f.descriptors.resize(n, dim);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t d = 0; d < dim; ++d) f.descriptors(i, d) = read_le<float>(data, off, p);
  return f;
}

void write_features(const fs::path& path, const sampler::FrameFeatures& f) {
  if (std::size_t(f.descriptors.rows()) != f.keypoints.size()) throw InvalidInput("write_features: descriptor rows != keypoints");
  std::string out = "WSFT";
  append_le<std::uint32_t>(out, 1);
  append_le<std::uint32_t>(out, f.frame_index);
  append_le<std::uint32_t>(out, std::uint32_t(f.keypoints.size()));
  append_le<std::uint32_t>(out, std::uint32_t(f.descriptors.cols()));
  for (const auto& k : f.keypoints) {
    append_le<float>(out, float(k.x()));
    append_le<float>(out, float(k.y()));
  }
  for (Eigen::Index i = 0; i < f.descriptors.rows(); ++i)
    for (Eigen::Index d = 0; d < f.descriptors.cols(); ++d) append_le<float>(out, f.descriptors(i, d));
  io::write_file_atomic(path, out);
}

obbfit::PointMap read_point_map(const fs::path& path, int width, int height) {
  io::require_file(path);
  auto ply = io::read_ply(path);
  const std::size_t n = std::size_t(width) * height;
  if (ply.cloud.size() != n)
    throw ParseError(path.string(), 0,
                     "dense frame cloud has " + std::to_string(ply.cloud.size()) + " vertices, expected " + std::to_string(n));
  obbfit::PointMap m;
  m.width = width;
  m.height = height;
  m.points = std::move(ply.cloud.points);
  m.confidence = ply.cloud.has_confidence() ? std::move(ply.cloud.confidence) : std::vector<double>(n, 1.0);
  m.colors = std::move(ply.cloud.colors);
  return m;
}

Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Json to_json(const Mat3& m) {
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(Json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return rows;
}

Json to_json(const geom::RigidTransform& t) { return {{"rotation", to_json(t.rotation)}, {"translation", to_json(t.translation)}}; }

Json to_json(const geom::SimilarityTransform& t) {
  return {{"scale", t.scale}, {"rotation", to_json(t.rotation)}, {"translation", to_json(t.translation)}};
}

Json to_json(const geom::Obb& b) {
  Json corners = Json::array();
  for (const auto& c : b.corners) corners.push_back(to_json(c));
  Json j = {{"label", b.label}, {"frame", b.frame}, {"corners", corners}, {"center", to_json(b.center)},
            {"extents", to_json(b.extents)}};
  j["yaw"] = b.yaw ? Json(*b.yaw) : Json(nullptr);
  return j;
}

Vec3 vec3_from_json(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) schema_error(path, "expected a 3-vector");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) schema_error(path, "3-vector entries must be numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

Mat3 mat3_from_json(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) schema_error(path, "expected a 3x3 matrix");
  Mat3 m;
  for (int r = 0; r < 3; ++r) m.row(r) = vec3_from_json(j[r], path).transpose();
  return m;
}

geom::RigidTransform rigid_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) schema_error(path, "expected {rotation, translation}");
  return guarded(path, [&] {
    return geom::RigidTransform{mat3_from_json(j.at("rotation"), path), vec3_from_json(j.at("translation"), path)};
  });
}

geom::SimilarityTransform similarity_from_json(const Json& j, const std::string& path) {
  const auto r = rigid_from_json(j, path);
  return {num_field(j, "scale", path), r.rotation, r.translation};
}

geom::Obb obb_from_json(const Json& j, const std::string& path) {
  const Json& cj = array_field(j, "corners", path);
  if (cj.size() != 8) schema_error(path, "box needs 8 corners");
  geom::Corners c;
  for (int i = 0; i < 8; ++i) c[i] = vec3_from_json(cj[i], path);
  geom::Obb b = geom::obb_from_corners(c, int_field(j, "label", path), int_field(j, "frame", path));
  if (j.contains("yaw") && j["yaw"].is_number()) b.yaw = j["yaw"].get<double>();
  return b;
}

CameraPoses read_poses(const fs::path& path) {
  const Json j = load(path);
  const std::string p = path.string();
  CameraPoses out;
  const std::string conv = guarded(p, [&] { return j.value("convention", std::string("camera_to_world")); });
  if (conv == "camera_to_world") {
    out.convention = geom::PoseConvention::CameraToWorld;
  } else if (conv == "world_to_camera") {
    out.convention = geom::PoseConvention::WorldToCamera;
  } else {
    schema_error(p, "convention must be camera_to_world or world_to_camera");
  }
  for (const auto& e : array_field(j, "poses", p)) {
    const int f = int_field(e, "frame", p);
    if (!out.poses.emplace(f, rigid_from_json(e, p)).second) schema_error(p, "duplicate pose for frame " + std::to_string(f));
  }
  return out;
}

Json poses_to_json(const CameraPoses& p) {
  Json arr = Json::array();
  for (const auto& [f, t] : p.poses) {
    Json e = to_json(t);
    e["frame"] = f;
    arr.push_back(e);
  }
  return versioned({{"convention", p.convention == geom::PoseConvention::CameraToWorld ? "camera_to_world" : "world_to_camera"},
                    {"poses", arr}});
}

std::vector<obbfit::Detection2d> read_detections(const fs::path& path, bool ground_truth) {
  const Json j = load(path);
  const std::string p = path.string();
  std::vector<obbfit::Detection2d> out;
  for (const auto& e : array_field(j, ground_truth ? "boxes" : "detections", p)) {
    obbfit::Detection2d d;
    d.frame = int_field(e, "frame", p);
    d.label = int_field(e, "label", p);
    d.box = guarded(p, [&] { return box4(e.at("box"), p); });
    if (ground_truth) {
      d.is_gt = true;
      d.score = obbfit::kGtScore;
    } else {
      d.score = num_field(e, "score", p);
    }
    try {
      d.validate();
    } catch (const InvalidInput& err) {
      schema_error(p, err.what());
    }
    out.push_back(d);
  }
  return out;
}

std::map<int, bool> read_static_flags(const fs::path& path) {
  const Json j = load(path);
  const std::string p = path.string();
  if (!j.is_object() || !j.contains("static") || !j["static"].is_object()) schema_error(p, "field 'static' must be an object");
  std::map<int, bool> out;
  for (const auto& [k, v] : j["static"].items()) {
    if (!v.is_boolean()) schema_error(p, "static flag for label " + k + " must be a boolean");
    try {
      std::size_t used = 0;
      const int label = std::stoi(k, &used);
      if (used != k.size()) throw std::invalid_argument(k);
      out[label] = v.get<bool>();
    } catch (const std::logic_error&) {
      schema_error(p, "static flag key '" + k + "' is not an integer label");
    }
  }
  return out;
}

std::vector<FrameCorrespondences> read_correspondences(const fs::path& path) {
  const Json j = load(path);
  const std::string p = path.string();
  std::vector<FrameCorrespondences> out;
  for (const auto& e : array_field(j, "frames", p)) {
    FrameCorrespondences fc;
    fc.frame = int_field(e, "frame", p);
    for (const auto& v : array_field(e, "source", p)) fc.source.push_back(vec3_from_json(v, p));
    for (const auto& v : array_field(e, "target", p)) fc.target.push_back(vec3_from_json(v, p));
    if (fc.source.size() != fc.target.size()) schema_error(p, "source and target sizes differ at frame " + std::to_string(fc.frame));
    out.push_back(std::move(fc));
  }
  return out;
}

Corrections read_corrections(const fs::path& path) {
  const Json j = load(path);
  const std::string p = path.string();
  if (!j.is_object()) schema_error(p, "corrections must be an object");
  Corrections c;
  if (j.contains("floor")) {
    const Json& f = j["floor"];
    if (!f.is_object()) schema_error(p, "field 'floor' must be an object");
    if (f.contains("scale")) c.floor.scale = vec3_from_json(f["scale"], p);
    if (f.contains("rotation")) c.floor.rotation = mat3_from_json(f["rotation"], p);
    if (f.contains("translation")) c.floor.translation = vec3_from_json(f["translation"], p);
  }
  if (j.contains("boxes")) {
    for (const auto& e : array_field(j, "boxes", p)) {
      BoxEdit b;
      b.label = int_field(e, "label", p);
      b.frame = int_field(e, "frame", p);
      if (e.contains("scale")) b.scale = vec3_from_json(e["scale"], p);
      if (e.contains("rotation")) b.rotation = mat3_from_json(e["rotation"], p);
      if (e.contains("translation")) b.translation = vec3_from_json(e["translation"], p);
      const std::string dir = guarded(p, [&] { return e.value("direction", std::string("forward")); });
      if (dir == "forward") {
        b.direction = PropagationDirection::Forward;
      } else if (dir == "backward") {
        b.direction = PropagationDirection::Backward;
      } else if (dir == "both") {
        b.direction = PropagationDirection::Both;
      } else {
        schema_error(p, "direction must be forward, backward or both");
      }
      if (!e.contains("count")) {
        b.count = 0;
      } else if (e["count"].is_string() && e["count"].get<std::string>() == "All") {
        b.count = std::nullopt;
      } else if (e["count"].is_number_integer() && e["count"].get<int>() >= 0) {
        b.count = e["count"].get<int>();
      } else {
        schema_error(p, "count must be a non-negative integer or \"All\"");
      }
      c.edits.push_back(b);
    }
  }
  if (j.contains("renames")) {
    for (const auto& e : array_field(j, "renames", p)) c.renames.push_back({int_field(e, "from", p), int_field(e, "to", p)});
  }
  if (j.contains("deletions")) {
    for (const auto& e : array_field(j, "deletions", p)) {
      BoxDeletion d;
      d.label = int_field(e, "label", p);
      if (e.contains("frames")) {
        std::vector<int> frames;
        for (const auto& f : array_field(e, "frames", p)) {
          if (!f.is_number_integer()) schema_error(p, "deletion frames must be integers");
          frames.push_back(f.get<int>());
        }
        d.frames = std::move(frames);
      }
      c.deletions.push_back(std::move(d));
    }
  }
  return c;
}

floor_align::FloorMesh read_floor_mesh(const fs::path& path) {
  io::require_file(path);
  auto ply = io::read_ply(path);
  floor_align::FloorMesh m;
  m.vertices = std::move(ply.cloud.points);
  m.colors = std::move(ply.cloud.colors);
  m.faces = std::move(ply.faces);
  try {
    m.validate();
  } catch (const InvalidInput& e) {
    schema_error(path.string(), e.what());
  }
  return m;
}

std::vector<metrics::SceneGraphFrame> read_graph_file(const fs::path& path) {
  const Json j = load(path);
  const std::string p = path.string();
  std::vector<metrics::SceneGraphFrame> out;
  for (const auto& e : array_field(j, "frames", p)) {
    metrics::SceneGraphFrame f;
    f.frame = int_field(e, "frame", p);
    if (e.contains("gt")) {
      for (const auto& t : array_field(e, "gt", p)) {
        if (!t.is_array() || t.size() != 3 || !t[0].is_number_integer() || !t[1].is_number_integer() || !t[2].is_number_integer())
          schema_error(p, "gt triplets must be [subject, object, predicate]");
        f.gt.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
      }
    }
    if (e.contains("candidates")) {
      for (const auto& t : array_field(e, "candidates", p)) {
        if (!t.is_array() || t.size() != 4 || !t[0].is_number_integer() || !t[1].is_number_integer() ||
            !t[2].is_number_integer() || !t[3].is_number())
          schema_error(p, "candidates must be [subject, object, predicate, score]");
        f.candidates.push_back({{t[0].get<int>(), t[1].get<int>(), t[2].get<int>()}, t[3].get<double>()});
      }
    }
    try {
      f.validate();
    } catch (const InvalidInput& err) {
      schema_error(p, err.what());
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<metrics::SceneGraphFrame> join_graphs(const std::vector<metrics::SceneGraphFrame>& pred,
                                                  const std::vector<metrics::SceneGraphFrame>& gt) {
  std::map<int, metrics::SceneGraphFrame> by_frame;
  for (const auto& f : gt) {
    auto& dst = by_frame[f.frame];
    dst.frame = f.frame;
    dst.gt.insert(dst.gt.end(), f.gt.begin(), f.gt.end());
  }
  for (const auto& f : pred) {
    auto& dst = by_frame[f.frame];
    dst.frame = f.frame;
    dst.candidates.insert(dst.candidates.end(), f.candidates.begin(), f.candidates.end());
  }
  std::vector<metrics::SceneGraphFrame> out;
  for (auto& [f, fr] : by_frame) out.push_back(std::move(fr));
  return out;
}

std::vector<metrics::ScoredLabel> read_scored_labels(const fs::path& path) {
  const Json j = load(path);
  const std::string p = path.string();
  std::vector<metrics::ScoredLabel> out;
  for (const auto& e : array_field(j, "labels", p)) {
    metrics::ScoredLabel l;
    l.frame = int_field(e, "frame", p);
    l.subject = int_field(e, "subject", p);
    l.object = int_field(e, "object", p);
    if (!e.contains("axis") || !e["axis"].is_string()) schema_error(p, "field 'axis' must be a string");
    l.axis = e["axis"].get<std::string>();
    l.label = int_field(e, "label", p);
    l.p_yes = num_field(e, "p_yes", p);
    out.push_back(l);
  }
  return out;
}

std::vector<metrics::LabeledInstance> read_label_instances(const fs::path& path) {
  const Json j = load(path);
  const std::string p = path.string();
  std::vector<metrics::LabeledInstance> out;
  for (const auto& e : array_field(j, "instances", p)) {
    metrics::LabeledInstance l;
    l.frame = int_field(e, "frame", p);
    l.subject = int_field(e, "subject", p);
    l.object = int_field(e, "object", p);
    if (!e.contains("axis") || !e["axis"].is_string()) schema_error(p, "field 'axis' must be a string");
    l.axis = e["axis"].get<std::string>();
    for (const auto& v : array_field(e, "labels", p)) {
      if (!v.is_number_integer()) schema_error(p, "labels must be integers");
      l.labels.insert(v.get<int>());
    }
    out.push_back(std::move(l));
  }
  return out;
}

std::vector<geom::Obb> read_boxes(const fs::path& path) {
  const Json j = load(path);
  const std::string p = path.string();
  std::vector<geom::Obb> out;
  for (const auto& e : array_field(j, "boxes", p)) out.push_back(obb_from_json(e, p));
  return out;
}

Json boxes_to_json(const std::vector<geom::Obb>& boxes) {
  Json arr = Json::array();
  for (const auto& b : boxes) arr.push_back(to_json(b));
  return versioned({{"boxes", arr}});
}

track::WorldState read_world_state(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  const Json m = load(mpath);
  const std::string p = mpath.string();
  track::WorldState ws;
  ws.num_frames = int_field(m, "num_frames", p);
  ws.num_objects = int_field(m, "num_objects", p);
  ws.feature_dim = int_field(m, "feature_dim", p);
  for (const auto& l : array_field(m, "labels", p)) {
    if (!l.is_number_integer()) schema_error(p, "labels must be integers");
    ws.labels.push_back(l.get<int>());
  }
  for (const auto& s : array_field(m, "static_flags", p)) {
    if (!s.is_boolean()) schema_error(p, "static_flags must be booleans");
    ws.static_flags.push_back(s.get<bool>() ? 1 : 0);
  }

  const fs::path vpath = dir / "visibility.json";
  const Json v = load(vpath);
  const std::string vp = vpath.string();
  const Json& rows = array_field(v, "visibility", vp);
  if (int(rows.size()) != ws.num_frames) schema_error(vp, "visibility needs one row per frame");
  for (const auto& row : rows) {
    if (!row.is_array() || int(row.size()) != ws.num_objects) schema_error(vp, "visibility row needs one entry per object");
    for (const auto& b : row) {
      if (!b.is_boolean() && !b.is_number_integer()) schema_error(vp, "visibility entries must be booleans or 0/1");
      ws.visibility.push_back(b.is_boolean() ? (b.get<bool>() ? 1 : 0) : (b.get<int>() != 0 ? 1 : 0));
    }
  }

  const fs::path fpath = dir / "features.f32";
  io::require_file(fpath);
  const auto raw = io::read_raw_f32(fpath);
  if (raw.width != ws.feature_dim || raw.height != ws.num_frames * ws.num_objects)
    throw ParseError(fpath.string(), 0, "feature tensor sidecar dims do not match T·N x D");
  ws.features = raw.data;
  try {
    ws.validate();
  } catch (const InvalidInput& e) {
    schema_error(p, e.what());
  }
  return ws;
}

void write_world_state(const fs::path& dir, const track::WorldState& ws) {
  ws.validate();
  fs::create_directories(dir);
  Json labels = ws.labels, flags = Json::array();
  for (auto f : ws.static_flags) flags.push_back(f != 0);
  io::write_json(dir / "manifest.json", versioned({{"num_frames", ws.num_frames},
                                                   {"num_objects", ws.num_objects},
                                                   {"feature_dim", ws.feature_dim},
                                                   {"labels", labels},
                                                   {"static_flags", flags}}));
  Json rows = Json::array();
  for (int t = 0; t < ws.num_frames; ++t) {
    Json row = Json::array();
    for (int n = 0; n < ws.num_objects; ++n) row.push_back(ws.visible(t, n));
    rows.push_back(row);
  }
  io::write_json(dir / "visibility.json", versioned({{"visibility", rows}}));
  io::write_raw_f32(dir / "features.f32", {ws.feature_dim, ws.num_frames * ws.num_objects, ws.features});
}

Json versioned(Json body) {
  Json out = {{"schema_version", kSchemaVersion}};
  for (auto& [k, v] : body.items()) out[k] = std::move(v);
  return out;
}

}  // namespace worldscaffold::pipeline
