#include "worldscaffold/pipeline/validate.hpp"

#include <algorithm>
#include <regex>

#include "worldscaffold/error.hpp"
#include "worldscaffold/io.hpp"
#include "worldscaffold/pipeline/stages.hpp"
#include "worldscaffold/pipeline/workspace.hpp"

namespace worldscaffold::pipeline {

namespace {

class Auditor {
 public:
  explicit Auditor(fs::path root) : root_(std::move(root)) {}

  void error(const fs::path& p, const std::string& msg, std::optional<double> dev = std::nullopt) {
    rep_.errors.push_back({p.string(), msg, dev});
  }
  void warn(const fs::path& p, const std::string& msg) { rep_.warnings.push_back({p.string(), msg, std::nullopt}); }
  void present(const std::string& kind) { rep_.present.push_back(kind); }

  // Runs `fn`; any library error becomes one report entry for `p`.
  template <typename Fn>
  bool check(const fs::path& p, Fn&& fn) {
    try {
      fn();
      return true;
    } catch (const ParseError& e) {
      error(p, std::string("parse error: ") + e.what());
    } catch (const Error& e) {
      error(p, e.what());
    } catch (const std::exception& e) {
      error(p, e.what());
    }
    return false;
  }

  fs::path at(const std::string& rel) const { return root_ / rel; }
  const fs::path& root() const { return root_; }
  ValidationReport take() { return std::move(rep_); }

 private:
  fs::path root_;
  ValidationReport rep_;
};

void check_rotation(Auditor& a, const fs::path& p, const geom::Mat3& r, const std::string& what) {
  const double d = geom::rotation_defect(r);
  if (d > kRotationDefectTol) a.error(p, "invariant: " + what + " is not a proper rotation", d);
}

void check_frame(Auditor& a, const fs::path& p, int frame, int frame_count, const std::string& what) {
  if (frame_count > 0 && (frame < 0 || frame >= frame_count))
    a.error(p, what + " references frame " + std::to_string(frame) + " outside [0, " + std::to_string(frame_count) + ")");
}

// Box files are checked from raw corners so that a distorted box is reported
// with its deviation instead of failing decomposition.
void check_box_file(Auditor& a, const fs::path& p, int frame_count) {
  Json j;
  if (!a.check(p, [&] { j = io::read_json(p); })) return;
  if (!j.is_object() || !j.contains("boxes") || !j["boxes"].is_array()) {
    a.error(p, "schema: field 'boxes' must be an array");
    return;
  }
  for (std::size_t i = 0; i < j["boxes"].size(); ++i) {
    const Json& e = j["boxes"][i];
    geom::Corners c;
    const std::string where = "box " + std::to_string(i);
    const bool ok = a.check(p, [&] {
      if (!e.is_object() || !e.contains("corners") || !e["corners"].is_array() || e["corners"].size() != 8)
        throw ParseError(p.string(), 0, where + ": needs 8 corners");
      for (int k = 0; k < 8; ++k) c[k] = vec3_from_json(e["corners"][k], p.string());
      if (!e.contains("frame") || !e["frame"].is_number_integer() || !e.contains("label") || !e["label"].is_number_integer())
        throw ParseError(p.string(), 0, where + ": needs integer label and frame");
    });
    if (!ok) continue;
    if (!std::all_of(c.begin(), c.end(), [](const geom::Vec3& v) { return v.allFinite(); })) {
      a.error(p, "invariant: " + where + " has non-finite corners");
      continue;
    }
    check_frame(a, p, e["frame"].get<int>(), frame_count, where);
    double diag = 0;
    for (int m = 0; m < 8; ++m)
      for (int n = m + 1; n < 8; ++n) diag = std::max(diag, (c[m] - c[n]).norm());
    const double dev = geom::box_deviation(c);
    if (dev > kBoxDeviationTol * std::max(1.0, diag))
      a.error(p, "invariant: " + where + " corners are not a rectangular box", dev);
  }
}

void check_ply(Auditor& a, const fs::path& p, std::optional<std::size_t> expect_vertices) {
  io::PlyData ply;
  if (!a.check(p, [&] { ply = io::read_ply(p); })) return;
  if (expect_vertices && ply.cloud.size() != *expect_vertices)
    a.error(p, "dense frame cloud has " + std::to_string(ply.cloud.size()) + " vertices, expected " + std::to_string(*expect_vertices));
}

}  // namespace

Json ValidationReport::to_json() const {
  const auto issues = [](const std::vector<ValidationIssue>& v) {
    Json arr = Json::array();
    for (const auto& i : v) {
      Json e = {{"path", i.path}, {"message", i.message}};
      if (i.deviation) e["deviation"] = *i.deviation;
      arr.push_back(e);
    }
    return arr;
  };
  return versioned({{"ok", ok()}, {"errors", issues(errors)}, {"warnings", issues(warnings)}, {"present", present}});
}

ValidationReport validate_workspace(const fs::path& root) {
  Auditor a(root);
  if (!fs::is_directory(root)) {
    a.error(root, "workspace directory does not exist");
    return a.take();
  }

  std::optional<Workspace> ws;
  const fs::path mpath = a.at("manifest.json");
  if (!fs::exists(mpath)) {
    a.error(mpath, "missing manifest");
  } else if (a.check(mpath, [&] { ws = Workspace::open(root); })) {
    a.present("manifest");
  }
  const int T = ws ? ws->manifest().frame_count : 0;
  const int W = ws ? ws->manifest().image_width : 0;
  const int H = ws ? ws->manifest().image_height : 0;

  // Per-frame artifacts.
  if (fs::is_directory(a.at("features"))) {
    a.present("features");
    int n = 0;
    for (const auto& e : fs::directory_iterator(a.at("features")))
      if (e.path().extension() == ".bin") ++n;
    if (ws && n != T) a.error(a.at("features"), "found " + std::to_string(n) + " feature files for " + std::to_string(T) + " frames");
    for (int t = 0; t < T; ++t) {
      const fs::path p = ws->feature_path(t);
      if (!fs::exists(p)) {
        a.error(p, "missing feature file");
        continue;
      }
      a.check(p, [&] { read_features(p); });
    }
  }

  if (fs::is_directory(a.at("clouds"))) {
    a.present("clouds");
    if (fs::exists(a.at("clouds/static.ply"))) check_ply(a, a.at("clouds/static.ply"), std::nullopt);
    std::vector<fs::path> frames;
    for (const auto& e : fs::directory_iterator(a.at("clouds"))) {
      const std::string n = e.path().filename().string();
      if (n.rfind("frame_", 0) == 0 && e.path().extension() == ".ply") frames.push_back(e.path());
    }
    std::sort(frames.begin(), frames.end());
    if (ws && int(frames.size()) != T)
      a.error(a.at("clouds"), "found " + std::to_string(frames.size()) + " frame clouds for " + std::to_string(T) + " frames");
    for (const auto& p : frames) check_ply(a, p, ws ? std::optional<std::size_t>(std::size_t(W) * H) : std::nullopt);
  }

  if (ws && ws->has_masks()) {
    a.present("masks");
    std::map<std::pair<int, int>, std::vector<fs::path>> index;
    if (a.check(a.at("masks_image"), [&] { index = ws->mask_index(); })) {
      for (const auto& [key, files] : index) {
        for (const auto& f : files) {
          check_frame(a, f, key.first, T, "mask");
          cloud::BinaryMask m;
          if (!a.check(f, [&] { m = io::read_mask_png(f); })) continue;
          if (m.width != W || m.height != H) a.error(f, "mask size differs from the manifest image size");
        }
      }
    }
  }

  if (fs::is_directory(a.at("depth"))) {
    a.present("depth");
    for (const auto& e : fs::directory_iterator(a.at("depth"))) {
      if (e.path().extension() != ".f32") continue;
      io::RawImage img;
      if (!a.check(e.path(), [&] { img = io::read_raw_f32(e.path()); })) continue;
      if (ws && (img.width != W || img.height != H)) a.error(e.path(), "depth size differs from the manifest image size");
    }
  }

  // Documents.
  const auto doc = [&](const std::string& rel, const std::string& kind, auto&& fn) {
    const fs::path p = a.at(rel);
    if (!fs::exists(p)) return;
    if (a.check(p, [&] { fn(p); })) a.present(kind);
  };
  doc("poses.json", "poses", [&](const fs::path& p) {
    const auto poses = read_poses(p);
    for (const auto& [f, t] : poses.poses) {
      check_frame(a, p, f, T, "pose");
      check_rotation(a, p, t.rotation, "pose rotation at frame " + std::to_string(f));
    }
    if (ws && int(poses.poses.size()) != T)
      a.warn(p, std::to_string(poses.poses.size()) + " poses for " + std::to_string(T) + " frames");
  });
  doc("intrinsics.json", "intrinsics", [&](const fs::path& p) {
    const Json j = io::read_json(p);
    for (const char* k : {"fx", "fy", "cx", "cy"})
      if (!j.contains(k) || !j[k].is_number()) throw ParseError(p.string(), 0, std::string("field '") + k + "' must be a number");
    if (!(j["fx"].get<double>() > 0 && j["fy"].get<double>() > 0)) a.error(p, "focal lengths must be positive");
  });
  doc("detections.json", "detections", [&](const fs::path& p) {
    for (const auto& d : read_detections(p, false)) check_frame(a, p, d.frame, T, "detection");
  });
  doc("gt2d.json", "gt annotations", [&](const fs::path& p) {
    for (const auto& d : read_detections(p, true)) check_frame(a, p, d.frame, T, "GT box");
  });
  doc("static_flags.json", "static flags", [&](const fs::path& p) { read_static_flags(p); });
  doc("smpl_correspondences.json", "smpl correspondences", [&](const fs::path& p) {
    for (const auto& f : read_correspondences(p)) check_frame(a, p, f.frame, T, "correspondence set");
  });
  doc("corrections.json", "corrections", [&](const fs::path& p) {
    const auto c = read_corrections(p);
    c.floor.validate();
    for (const auto& e : c.edits) check_frame(a, p, e.frame, T, "box edit");
  });
  doc("floor_mesh.ply", "floor mesh", [&](const fs::path& p) { read_floor_mesh(p); });
  doc("graphs/pred.json", "scene-graph predictions", [&](const fs::path& p) { read_graph_file(p); });
  doc("graphs/gt.json", "scene-graph gt", [&](const fs::path& p) { read_graph_file(p); });
  doc("graphs/labels_pred.json", "label predictions", [&](const fs::path& p) { read_scored_labels(p); });
  doc("graphs/labels_gt.json", "label gt", [&](const fs::path& p) { read_label_instances(p); });
  if (fs::is_directory(a.at("world_state")))
    if (a.check(a.at("world_state"), [&] { read_world_state(a.at("world_state")); })) a.present("world state");

  for (const char* rel : {"eval_geom/pred.json", "eval_geom/gt.json", "out/obbs_raw.json", "out/obbs_smoothed.json",
                          "out/obbs.json", "out/obbs_corrected.json"}) {
    const fs::path p = a.at(rel);
    if (fs::exists(p)) check_box_file(a, p, T);
  }
  doc("out/keyframes.json", "keyframes", [&](const fs::path& p) {
    const Json j = io::read_json(p);
    if (!j.contains("frames") || !j["frames"].is_array()) throw ParseError(p.string(), 0, "field 'frames' must be an array");
    for (const auto& f : j["frames"]) {
      if (!f.is_number_integer()) throw ParseError(p.string(), 0, "keyframes must be integers");
      check_frame(a, p, f.get<int>(), T, "keyframe");
    }
  });
  doc("out/floor.json", "floor", [&](const fs::path& p) {
    const auto f = read_floor_state(p);
    check_rotation(a, p, f.frame.similarity.rotation, "similarity rotation");
    check_rotation(a, p, f.xy.transform.rotation, "xy-alignment rotation");
    if (!(f.frame.similarity.scale > 0)) a.error(p, "invariant: similarity scale must be positive");
  });
  doc("out/registration.json", "registration", [&](const fs::path& p) {
    const Json j = io::read_json(p);
    if (!j.contains("frames") || !j["frames"].is_array()) throw ParseError(p.string(), 0, "field 'frames' must be an array");
    for (const auto& e : j["frames"]) {
      const auto t = rigid_from_json(e.at("transform"), p.string());
      check_rotation(a, p, t.rotation, "ICP rotation at frame " + std::to_string(e.at("frame").get<int>()));
    }
  });
  for (const auto& [rel, kind] : {std::pair{"out/poses_refined.json", "refined poses"}, std::pair{"out/poses_final.json", "final poses"}}) {
    doc(rel, kind, [&](const fs::path& p) {
      for (const auto& [f, t] : read_poses(p).poses) check_rotation(a, p, t.rotation, "pose rotation at frame " + std::to_string(f));
    });
  }
  return a.take();
}

}  // namespace worldscaffold::pipeline
