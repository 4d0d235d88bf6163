#include "worldscaffold/pipeline/stages.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "worldscaffold/cloud.hpp"
#include "worldscaffold/error.hpp"
#include "worldscaffold/io.hpp"
#include "worldscaffold/metrics/boxes.hpp"
#include "worldscaffold/obbfit.hpp"
#include "worldscaffold/registration.hpp"
#include "worldscaffold/sampler.hpp"
#include "worldscaffold/track.hpp"

namespace worldscaffold::pipeline {

namespace {

using geom::Mat3;
using geom::Obb;
using geom::Vec3;

const std::vector<std::pair<Stage, std::string>> kStageNames = {
    {Stage::Sample, "sample"}, {Stage::Merge, "merge"},         {Stage::Floor, "floor"},
    {Stage::Fit, "fit"},       {Stage::Smooth, "smooth"},       {Stage::Finalize, "finalize"},
    {Stage::EvalGeom, "eval-geom"}, {Stage::EvalSgg, "eval-sgg"}, {Stage::Lks, "lks"},
};

// Requires a workspace file, naming the artifact kind when it is absent.
void need(const fs::path& p, const std::string& artifact) {
  if (!fs::exists(p)) throw MissingDependency(artifact + " (" + p.string() + ")");
}

std::vector<int> read_keyframes(const Workspace& ws) {
  const fs::path p = ws.out("keyframes.json");
  need(p, "keyframes");
  const Json j = io::read_json(p);
  std::vector<int> frames;
  try {
    for (const auto& f : j.at("frames")) frames.push_back(f.get<int>());
  } catch (const Json::exception& e) {
    throw ParseError(p.string(), 0, e.what());
  }
  return frames;
}

FloorState load_floor(const Workspace& ws) {
  const fs::path p = ws.out("floor.json");
  need(p, "floor");
  return read_floor_state(p);
}

cloud::PointCloud with_confidence(cloud::PointCloud c) {
  if (!c.has_confidence()) c.confidence.assign(c.size(), 1.0);
  return c;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Static scene after near-black suppression and the static confidence gate.
cloud::PointCloud load_static(const Workspace& ws, const PipelineConfig& cfg, StageReport& rep) {
  const fs::path p = ws.path("clouds/static.ply");
  need(p, "static cloud");
  auto c = with_confidence(io::read_ply(p).cloud);
  auto nb = cloud::suppress_near_black(c, cfg.cloud.near_black_intensity, cfg.cloud.near_black_confidence);
  if (nb.attributes_missing) rep.warnings.push_back("static cloud has no colours; near-black suppression skipped");
  return cloud::confidence_filter(nb.cloud, cfg.cloud.tau_static);
}

// ---- sample ------------------------------------------------------------------

StageReport stage_sample(const Workspace& ws, const PipelineConfig& cfg) {
  StageReport rep;
  const auto& m = ws.manifest();
  need(ws.path("features"), "features");
  std::vector<sampler::FrameFeatures> feats;
  for (int t = 0; t < m.frame_count; ++t) {
    need(ws.feature_path(t), "features");
    auto f = read_features(ws.feature_path(t));
    f.frame_index = std::uint32_t(t);
    feats.push_back(std::move(f));
  }
  std::set<std::uint32_t> annotated;
  if (ws.exists("gt2d.json")) {
    for (const auto& d : read_detections(ws.path("gt2d.json"), true))
      if (d.frame >= 0 && d.frame < m.frame_count) annotated.insert(std::uint32_t(d.frame));
  }
  const auto sel = sampler::greedy_select(feats, annotated, {m.image_width, m.image_height}, cfg.sampler);
  Json frames = Json::array();
  for (auto f : sel) frames.push_back(f);
  io::write_json(ws.out("keyframes.json"), versioned({{"frames", frames}, {"annotated", Json(std::vector<int>(annotated.begin(), annotated.end()))}}));
  rep.counts = {{"frames", m.frame_count}, {"keyframes", sel.size()}, {"annotated", annotated.size()}};
  return rep;
}

// ---- merge -------------------------------------------------------------------

StageReport stage_merge(const Workspace& ws, const PipelineConfig& cfg) {
  StageReport rep;
  const auto keyframes = read_keyframes(ws);
  if (!ws.has_masks()) throw MissingDependency("masks");
  need(ws.path("poses.json"), "poses");
  const auto stat = load_static(ws, cfg, rep);
  const auto poses = read_poses(ws.path("poses.json"));
  const auto& m = ws.manifest();

  CameraPoses refined;
  refined.convention = poses.convention;
  Json reg = Json::array();
  std::size_t merged_points = 0;
  fs::create_directories(ws.out("merged"));
  for (int t : keyframes) {
    need(ws.frame_cloud_path(t), "clouds");
    auto pm = read_point_map(ws.frame_cloud_path(t), m.image_width, m.image_height);
    if (fs::exists(ws.depth_path(t))) {
      const auto raw = io::read_raw_f32(ws.depth_path(t));
      if (raw.width != m.image_width || raw.height != m.image_height)
        throw ParseError(ws.depth_path(t).string(), 0, "depth size differs from the manifest image size");
      cloud::DepthImage d;
      d.width = raw.width;
      d.height = raw.height;
      d.depth.assign(raw.data.begin(), raw.data.end());
      d.confidence = pm.confidence;
      pm.confidence = cloud::suppress_depth_edges(d, cfg.cloud.depth_edge_rtol).confidence;
    }

    cloud::PointCloud all;
    all.points = pm.points;
    all.confidence = pm.confidence;
    all.colors = pm.colors;
    std::vector<std::int64_t> pixel(all.size());
    std::iota(pixel.begin(), pixel.end(), 0);
    cloud::BinaryMask fg_mask(m.image_width, m.image_height);
    for (const auto& [label, mask] : ws.load_masks(t))
      for (std::size_t i = 0; i < mask.bits.size(); ++i) fg_mask.bits[i] |= mask.bits[i];
    auto [fg, bg] = cloud::partition_foreground(all, pixel, fg_mask);
    fg = cloud::voxel_downsample(cloud::confidence_filter(fg, cfg.cloud.tau_frame), cfg.cloud.frame_voxel);
    bg = cloud::voxel_downsample(cloud::confidence_filter(bg, cfg.cloud.tau_frame), cfg.cloud.frame_voxel);

    geom::RigidTransform icp;
    Json entry = {{"frame", t}};
    if (bg.size() < std::size_t(cfg.icp.min_correspondences) || stat.empty()) {
      rep.warnings.push_back("frame " + std::to_string(t) + ": too few background points for ICP; identity used");
      entry["status"] = "skipped";
    } else {
      const auto r = registration::trimmed_icp(bg.points, stat.points, bg.confidence, cfg.icp);
      icp = r.transform;
      entry["status"] = r.status == registration::IcpStatus::Converged       ? "converged"
                        : r.status == registration::IcpStatus::MaxIterations ? "max_iterations"
                                                                             : "too_few_correspondences";
      entry["iterations"] = r.iterations_run;
      entry["final_mse"] = r.final_mse;
      entry["inliers"] = r.final_inlier_count;
    }
    entry["transform"] = to_json(icp);
    reg.push_back(entry);

    const auto merged = cloud::merge_frame(stat, fg, icp, cfg.cloud.merge_voxel);
    io::write_ply(ws.out("merged/frame_" + frame_name(t) + ".ply"), merged);
    merged_points += merged.size();

    const auto it = poses.poses.find(t);
    if (it == poses.poses.end()) {
      rep.warnings.push_back("frame " + std::to_string(t) + ": no camera pose");
    } else {
      refined.poses[t] = registration::refine_pose(icp, it->second, poses.convention);
    }
  }
  io::write_json(ws.out("registration.json"), versioned({{"frames", reg}}));
  io::write_json(ws.out("poses_refined.json"), poses_to_json(refined));
  rep.counts = {{"frames", keyframes.size()}, {"static_points", stat.size()}, {"merged_points", merged_points}};
  return rep;
}

// ---- floor -------------------------------------------------------------------

StageReport stage_floor(const Workspace& ws, const PipelineConfig& cfg) {
  StageReport rep;
  need(ws.path("smpl_correspondences.json"), "smpl_correspondences");
  need(ws.path("floor_mesh.ply"), "floor_mesh");
  const auto frames = read_correspondences(ws.path("smpl_correspondences.json"));
  std::vector<registration::SimilarityEstimate> est;
  for (const auto& f : frames) {
    auto scfg = cfg.similarity;
    scfg.seed = cfg.similarity.seed * 1000003ULL + std::uint64_t(f.frame);
    auto r = registration::ransac_similarity(f.source, f.target, scfg);
    if (r) {
      est.push_back(r.value());
    } else {
      rep.warnings.push_back("frame " + std::to_string(f.frame) + ": " + r.rejection().reason);
    }
  }
  auto avg = registration::average_similarity(est, int(frames.size()), cfg.similarity);
  if (!avg) throw Error(ErrorKind::Validation, "floor: similarity rejected: " + avg.rejection().reason);

  FloorState fs_;
  fs_.frame = floor_align::build_floor_frame(avg.value(), cfg.floor.mirror);
  if (ws.exists("corrections.json")) fs_.correction = read_corrections(ws.path("corrections.json")).floor;
  fs_.correction.validate();
  fs_.xy = floor_align::xy_plane_align(read_floor_mesh(ws.path("floor_mesh.ply")), fs_.correction);
  fs_.valid_frames = int(est.size());
  io::write_json(ws.out("floor.json"), floor_state_to_json(fs_));
  rep.counts = {{"frames", frames.size()}, {"valid_frames", est.size()}, {"scale", avg->scale}};
  return rep;
}

// ---- fit ---------------------------------------------------------------------

Json raw_box_json(const Obb& b, int kernel, std::size_t points, double score) {
  Json j = to_json(b);
  j["erosion_kernel"] = kernel;
  j["points"] = points;
  j["score"] = score;
  return j;
}

StageReport stage_fit(const Workspace& ws, const PipelineConfig& cfg) {
  StageReport rep;
  if (!ws.has_masks()) throw MissingDependency("masks");
  need(ws.path("detections.json"), "detections");
  const auto keyframes = read_keyframes(ws);
  const auto floor = load_floor(ws);
  const auto& m = ws.manifest();

  std::vector<obbfit::Detection2d> dets;
  for (const auto& d : read_detections(ws.path("detections.json"), false))
    if (d.score >= cfg.fusion.box_threshold) dets.push_back(d);
  std::vector<obbfit::Detection2d> gts;
  if (ws.exists("gt2d.json")) gts = read_detections(ws.path("gt2d.json"), true);
  const auto fused = obbfit::fuse_detections(dets, gts, cfg.fusion.nms_iou);

  Json boxes = Json::array();
  int fitted = 0, rejected = 0;
  const std::set<int> keys(keyframes.begin(), keyframes.end());
  std::map<int, std::vector<const obbfit::Detection2d*>> by_frame;
  for (const auto& d : fused)
    if (keys.count(d.frame)) by_frame[d.frame].push_back(&d);
  for (int t : keyframes) {
    const auto it = by_frame.find(t);
    if (it == by_frame.end()) continue;
    need(ws.frame_cloud_path(t), "clouds");
    const auto pm = read_point_map(ws.frame_cloud_path(t), m.image_width, m.image_height);
    const auto masks = ws.load_masks(t);
    std::set<int> done;
    for (const auto* d : it->second) {
      if (!done.insert(d->label).second) continue;  // best-scoring box per label
      const auto mit = masks.find(d->label);
      const cloud::BinaryMask* mask = mit == masks.end() ? nullptr : &mit->second;
      if (!mask) rep.warnings.push_back("frame " + std::to_string(t) + " label " + std::to_string(d->label) + ": no mask, box used");
      auto cand = obbfit::multiscale_select(mask, *d, pm, floor.frame, cfg.erosion);
      if (!cand) {
        ++rejected;
        rep.warnings.push_back("frame " + std::to_string(t) + " label " + std::to_string(d->label) + ": " + cand.rejection().reason);
        continue;
      }
      Obb box = obbfit::floor_parallel_obb(cand->points, floor.frame);
      box.label = d->label;
      box.frame = t;
      boxes.push_back(raw_box_json(box, cand->erosion_kernel, cand->points.size(), d->score));
      ++fitted;
    }
  }
  io::write_json(ws.out("obbs_raw.json"), versioned({{"frame", "world"}, {"boxes", boxes}}));
  rep.counts = {{"fused_detections", fused.size()}, {"boxes", fitted}, {"rejected", rejected}};
  return rep;
}

// ---- smooth ------------------------------------------------------------------

StageReport stage_smooth(const Workspace& ws, const PipelineConfig& cfg) {
  StageReport rep;
  const fs::path rawp = ws.out("obbs_raw.json");
  need(rawp, "obbs_raw");
  const auto keyframes = read_keyframes(ws);
  const auto floor = load_floor(ws);
  std::map<int, bool> flags;
  if (ws.exists("static_flags.json")) flags = read_static_flags(ws.path("static_flags.json"));
  std::map<int, int> pos_of;
  for (std::size_t i = 0; i < keyframes.size(); ++i) pos_of[keyframes[i]] = int(i);

  std::map<int, std::vector<std::optional<Obb>>> tracks;  // label -> per keyframe position
  for (const auto& b : read_boxes(rawp)) {
    const auto p = pos_of.find(b.frame);
    if (p == pos_of.end()) continue;
    auto& tr = tracks[b.label];
    tr.resize(keyframes.size());
    tr[p->second] = b;
  }

  const int T = int(keyframes.size());
  track::WorldState wsd;
  wsd.num_frames = T;
  wsd.num_objects = int(tracks.size());
  wsd.visibility.assign(std::size_t(T) * tracks.size(), 0);
  std::vector<std::vector<std::optional<Obb>>> boxes;
  int n = 0;
  int n_static = 0;
  for (auto& [label, tr] : tracks) {
    wsd.labels.push_back(label);
    const auto f = flags.find(label);
    const bool is_static = f != flags.end() && f->second;
    wsd.static_flags.push_back(is_static ? 1 : 0);
    if (is_static) {
      ++n_static;
      std::vector<Obb> present;
      for (const auto& b : tr)
        if (b) present.push_back(*b);
      Obb u = track::union_obb(present, floor.frame);
      u.label = label;
      for (int t = 0; t < T; ++t)
        if (tr[t]) {
          tr[t] = u;
          tr[t]->frame = t;
        }
    } else {
      track::TrackSequence seq(T);
      for (int t = 0; t < T; ++t)
        if (tr[t]) seq[t] = box_state_of(*tr[t], floor.frame);
      const auto sm = track::kalman_rts_smooth(seq, cfg.kalman);
      for (int t = 0; t < T; ++t) {
        if (!sm[t]) continue;
        Obb b = box_from_state(*sm[t], floor.frame);
        b.label = label;
        b.frame = t;
        tr[t] = b;
      }
    }
    for (int t = 0; t < T; ++t)
      if (tr[t]) wsd.visibility[std::size_t(t) * wsd.num_objects + n] = 1;
    boxes.push_back(tr);
    ++n;
  }
  // fill_static_frames indexes boxes[n][t] by keyframe position.
  const auto filled = track::fill_static_frames(wsd, boxes);

  std::vector<Obb> out;
  for (int t = 0; t < T; ++t)
    for (std::size_t k = 0; k < filled.size(); ++k)
      if (filled[k][t]) {
        Obb b = *filled[k][t];
        b.frame = keyframes[t];
        out.push_back(b);
      }
  Json doc = boxes_to_json(out);
  doc["frame"] = "world";
  io::write_json(ws.out("obbs_smoothed.json"), doc);
  rep.counts = {{"objects", tracks.size()}, {"static_objects", n_static}, {"boxes", out.size()}};
  return rep;
}

// ---- finalize ----------------------------------------------------------------

StageReport stage_finalize(const Workspace& ws, const PipelineConfig& cfg) {
  StageReport rep;
  const fs::path sp = ws.out("obbs_smoothed.json");
  need(sp, "obbs_smoothed");
  const auto floor = load_floor(ws);
  const auto canon = [&](const Vec3& p) { return floor_align::to_canonical(floor.frame, floor.correction, floor.xy, p); };

  std::vector<Obb> boxes;
  for (const auto& b : read_boxes(sp)) {
    geom::Corners c;
    for (int i = 0; i < 8; ++i) c[i] = canon(b.corners[i]);
    boxes.push_back(geom::obb_from_corners(c, b.label, b.frame));
  }
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const Obb& a, const Obb& b) { return std::tie(a.frame, a.label) < std::tie(b.frame, b.label); });
  Json doc = boxes_to_json(boxes);
  doc["frame"] = "canonical";
  io::write_json(ws.out("obbs.json"), doc);

  // Linear part of the canonical map; its rotation factor orients camera poses.
  const Vec3 o = canon(Vec3::Zero());
  Mat3 lin;
  for (int k = 0; k < 3; ++k) lin.col(k) = canon(Vec3::Unit(k)) - o;
  const Mat3 rot = geom::project_to_so3(lin);
  std::size_t n_poses = 0;
  if (fs::exists(ws.out("poses_refined.json"))) {
    const auto poses = read_poses(ws.out("poses_refined.json"));
    CameraPoses out;
    out.convention = geom::PoseConvention::CameraToWorld;
    for (const auto& [f, p] : poses.poses) {
      const auto c2w = poses.convention == geom::PoseConvention::CameraToWorld ? p : p.inverse();
      out.poses[f] = {rot * c2w.rotation, canon(c2w.translation)};
    }
    io::write_json(ws.out("poses_final.json"), poses_to_json(out));
    n_poses = out.poses.size();
  } else {
    rep.warnings.push_back("no refined poses; poses_final.json not written");
  }

  if (ws.exists("clouds/static.ply")) {
    auto c = load_static(ws, cfg, rep);
    for (auto& p : c.points) p = canon(p);
    io::write_ply(ws.out("static_canonical.ply"), c);
  }
  if (ws.exists("floor_mesh.ply")) {
    auto mesh = read_floor_mesh(ws.path("floor_mesh.ply"));
    cloud::PointCloud c;
    // The mesh is stored in the final frame already (before correction).
    for (const auto& v : mesh.vertices) c.points.push_back(floor.xy.transform.apply(floor.correction.apply(v)));
    c.colors = mesh.colors;
    io::write_ply(ws.out("floor_mesh_canonical.ply"), c, mesh.faces);
  }
  rep.counts = {{"boxes", boxes.size()}, {"poses", n_poses}};
  return rep;
}

// ---- eval-geom ---------------------------------------------------------------

std::vector<metrics::BoxPrediction> read_eval_boxes(const fs::path& p, bool gt) {
  io::require_file(p);
  const Json j = io::read_json(p);
  std::vector<metrics::BoxPrediction> out;
  try {
    for (const auto& e : j.at("boxes")) {
      metrics::BoxPrediction bp;
      bp.box = obb_from_json(e, p.string());
      bp.det.frame = bp.box.frame;
      bp.det.label = bp.box.label;
      const auto& b2 = e.at("box2d");
      if (!b2.is_array() || b2.size() != 4) throw ParseError(p.string(), 0, "box2d must be [x1, y1, x2, y2]");
      for (int i = 0; i < 4; ++i) bp.det.box[i] = b2[i].get<double>();
      bp.det.is_gt = gt;
      bp.det.score = gt ? obbfit::kGtScore : e.at("score").get<double>();
      bp.det.validate();
      out.push_back(bp);
    }
  } catch (const Json::exception& e) {
    throw ParseError(p.string(), 0, e.what());
  } catch (const InvalidInput& e) {
    throw ParseError(p.string(), 0, e.what());
  }
  return out;
}

StageReport stage_eval_geom(const Workspace& ws, const PipelineConfig& cfg) {
  StageReport rep;
  need(ws.path("eval_geom/pred.json"), "eval_geom");
  need(ws.path("eval_geom/gt.json"), "eval_geom");
  const auto preds = read_eval_boxes(ws.path("eval_geom/pred.json"), false);
  const auto gts = read_eval_boxes(ws.path("eval_geom/gt.json"), true);
  std::map<int, std::pair<std::vector<metrics::BoxPrediction>, std::vector<metrics::BoxPrediction>>> frames;
  for (const auto& p : preds) frames[p.det.frame].first.push_back(p);
  for (const auto& g : gts) frames[g.det.frame].second.push_back(g);

  std::vector<double> ious;
  double sum_center = 0, sum_dims = 0, sum_rot = 0, sum_chamfer = 0, sum_chamfer_n = 0;
  std::size_t unmatched_p = 0, unmatched_g = 0, mc_pairs = 0;
  Json pairs = Json::array();
  for (const auto& [f, pg] : frames) {
    const auto& [fp, fg] = pg;
    const auto match = metrics::match_greedy(fp, fg, cfg.metrics.match_iou);
    unmatched_p += match.unmatched_preds.size();
    unmatched_g += match.unmatched_gts.size();
    for (const auto& [i, g] : match.pairs) {
      const Obb& a = fp[i].box;
      const Obb& b = fg[g].box;
      double iou;
      if (metrics::upright_axis(a) >= 0 && metrics::upright_axis(b) >= 0) {
        iou = metrics::iou3d(a, b);
      } else {
        iou = metrics::monte_carlo_iou(a, b, cfg.metrics.monte_carlo_samples, cfg.seed).iou;
        ++mc_pairs;
      }
      const auto err = metrics::attribute_errors(a, b, cfg.metrics.rotation_mod_pi);
      const double ch = metrics::chamfer_corners(a, b), chn = metrics::chamfer_corners(a, b, false, true);
      ious.push_back(iou);
      sum_center += err.center_l2;
      sum_dims += err.dims_l1;
      sum_rot += err.rotation;
      sum_chamfer += ch;
      sum_chamfer_n += chn;
      pairs.push_back({{"frame", f}, {"label", fp[i].det.label}, {"iou3d", iou}, {"center_l2", err.center_l2},
                       {"dims_l1", err.dims_l1}, {"rotation", err.rotation}, {"chamfer", ch}, {"chamfer_normalized", chn}});
    }
  }
  const auto hits = metrics::hit_rates(ious, cfg.metrics.hit_thresholds);
  Json hr = Json::object();
  for (const auto& [t, r] : hits.rates) hr["IoU@" + fmt(t)] = r;
  const double n = double(std::max<std::size_t>(ious.size(), 1));
  Json summary = {{"matched", ious.size()},
                  {"unmatched_predictions", unmatched_p},
                  {"unmatched_gt", unmatched_g},
                  {"mean_iou3d", ious.empty() ? 0.0 : std::accumulate(ious.begin(), ious.end(), 0.0) / n},
                  {"hit_rates", hr},
                  {"mean_center_l2", sum_center / n},
                  {"mean_dims_l1", sum_dims / n},
                  {"mean_rotation", sum_rot / n},
                  {"mean_chamfer", sum_chamfer / n},
                  {"mean_chamfer_normalized", sum_chamfer_n / n}};
  if (hits.empty) rep.warnings.push_back("no matched pairs; hit rates are 0");
  io::write_json(ws.out("eval_geom.json"), versioned({{"summary", summary}, {"pairs", pairs}}));
  rep.counts = {{"pairs", ious.size()}, {"monte_carlo_pairs", mc_pairs}};
  return rep;
}

// ---- eval-sgg ----------------------------------------------------------------

StageReport stage_eval_sgg(const Workspace& ws, const PipelineConfig& cfg) {
  StageReport rep;
  need(ws.path("graphs/pred.json"), "graphs");
  need(ws.path("graphs/gt.json"), "graphs");
  const auto frames = join_graphs(read_graph_file(ws.path("graphs/pred.json")), read_graph_file(ws.path("graphs/gt.json")));
  Json doc = {{"relationships", scene_graph_report(frames, cfg.metrics.constraint, cfg.metrics.ks)}};
  const bool labels = ws.exists("graphs/labels_pred.json") && ws.exists("graphs/labels_gt.json");
  if (labels) {
    doc["labels"] = label_report(read_scored_labels(ws.path("graphs/labels_pred.json")),
                                 read_label_instances(ws.path("graphs/labels_gt.json")), cfg.metrics.label_thresholds);
  }
  io::write_json(ws.out("eval_sgg.json"), versioned(doc));
  rep.counts = {{"frames", frames.size()}, {"label_report", labels}};
  return rep;
}

// ---- lks ---------------------------------------------------------------------

StageReport stage_lks(const Workspace& ws, const PipelineConfig&) {
  StageReport rep;
  need(ws.path("world_state"), "world_state");
  const auto wsd = read_world_state(ws.path("world_state"));
  const auto buf = track::lks_buffer(wsd);
  fs::create_directories(ws.out("lks"));
  io::write_raw_f32(ws.out("lks/buffered.f32"), {wsd.feature_dim, wsd.num_frames * wsd.num_objects, buf.buffered});
  Json rows = Json::array();
  int never = 0;
  for (int t = 0; t < wsd.num_frames; ++t) {
    Json row = Json::array();
    for (int n = 0; n < wsd.num_objects; ++n) row.push_back(buf.staleness[std::size_t(t) * wsd.num_objects + n]);
    rows.push_back(row);
  }
  for (int n = 0; n < wsd.num_objects; ++n)
    if (buf.staleness[n] == wsd.staleness_sentinel) ++never;
  io::write_json(ws.out("lks/staleness.json"), versioned({{"staleness", rows}}));
  rep.counts = {{"frames", wsd.num_frames}, {"objects", wsd.num_objects}, {"never_visible", never}};
  return rep;
}

Json prf_json(const metrics::Prf& p) { return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}}; }

}  // namespace

std::optional<Stage> parse_stage(const std::string& name) {
  for (const auto& [s, n] : kStageNames)
    if (n == name) return s;
  return std::nullopt;
}

std::string stage_name(Stage s) {
  for (const auto& [st, n] : kStageNames)
    if (st == s) return n;
  return "?";
}

std::vector<Stage> upstream(Stage s) {
  static const std::vector<Stage> chain = {Stage::Sample, Stage::Merge, Stage::Floor, Stage::Fit, Stage::Smooth, Stage::Finalize};
  const auto it = std::find(chain.begin(), chain.end(), s);
  if (it == chain.end()) return {};
  return {chain.begin(), it};
}

Json StageReport::to_json() const {
  return versioned({{"stage", stage}, {"seconds", seconds}, {"counts", counts}, {"warnings", warnings}});
}

StageReport run_stage(const Workspace& ws, Stage s, const PipelineConfig& cfg) {
  cfg.validate();
  fs::create_directories(ws.root() / "out");
  const auto t0 = std::chrono::steady_clock::now();
  StageReport rep;
  switch (s) {
    case Stage::Sample: rep = stage_sample(ws, cfg); break;
    case Stage::Merge: rep = stage_merge(ws, cfg); break;
    case Stage::Floor: rep = stage_floor(ws, cfg); break;
    case Stage::Fit: rep = stage_fit(ws, cfg); break;
    case Stage::Smooth: rep = stage_smooth(ws, cfg); break;
    case Stage::Finalize: rep = stage_finalize(ws, cfg); break;
    case Stage::EvalGeom: rep = stage_eval_geom(ws, cfg); break;
    case Stage::EvalSgg: rep = stage_eval_sgg(ws, cfg); break;
    case Stage::Lks: rep = stage_lks(ws, cfg); break;
  }
  rep.stage = stage_name(s);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::vector<StageReport> run_pipeline(const fs::path& root, Stage s, const PipelineConfig& cfg, bool stage_only) {
  const auto ws = Workspace::open(root);
  WorkspaceLock lock(root);
  std::vector<Stage> todo = stage_only ? std::vector<Stage>{} : upstream(s);
  todo.push_back(s);
  std::vector<StageReport> reports;
  fs::create_directories(root / "reports");
  for (Stage st : todo) {
    reports.push_back(run_stage(ws, st, cfg));
    io::write_json(root / "reports" / (stage_name(st) + ".json"), reports.back().to_json());
  }
  return reports;
}

Json floor_state_to_json(const FloorState& f) {
  const auto& fr = f.frame;
  Json corr = {{"scale", to_json(f.correction.scale)},
               {"rotation", to_json(f.correction.rotation)},
               {"translation", to_json(f.correction.translation)}};
  Json xy = to_json(f.xy.transform);
  xy["euler_zyx"] = to_json(f.xy.euler_zyx);
  xy["floor_normal"] = to_json(f.xy.floor_normal);
  xy["intersection"] = to_json(f.xy.intersection);
  return versioned({{"similarity", to_json(fr.similarity)},
                    {"mirror", fr.mirror_applied},
                    {"alignment", to_json(fr.alignment)},
                    {"final", to_json(fr.final)},
                    {"correction", corr},
                    {"xy_alignment", xy},
                    {"valid_frames", f.valid_frames}});
}

FloorState read_floor_state(const fs::path& path) {
  const Json j = io::read_json(path);
  const std::string p = path.string();
  FloorState f;
  try {
    f.frame = floor_align::build_floor_frame(similarity_from_json(j.at("similarity"), p), j.at("mirror").get<bool>());
    const Json& c = j.at("correction");
    f.correction.scale = vec3_from_json(c.at("scale"), p);
    f.correction.rotation = mat3_from_json(c.at("rotation"), p);
    f.correction.translation = vec3_from_json(c.at("translation"), p);
    const Json& xy = j.at("xy_alignment");
    f.xy.transform = rigid_from_json(xy, p);
    f.xy.euler_zyx = vec3_from_json(xy.at("euler_zyx"), p);
    f.xy.floor_normal = vec3_from_json(xy.at("floor_normal"), p);
    f.xy.intersection = vec3_from_json(xy.at("intersection"), p);
    f.valid_frames = j.at("valid_frames").get<int>();
  } catch (const Json::exception& e) {
    throw ParseError(p, 0, e.what());
  } catch (const InvalidInput& e) {
    throw ParseError(p, 0, e.what());
  }
  return f;
}

geom::Obb box_from_state(const track::BoxState& s, const floor_align::FloorFrame& floor) {
  const Vec3 u(std::cos(s.yaw), 0, std::sin(s.yaw));
  const Vec3 up = Vec3::UnitY();
  const Vec3 v = up.cross(u);
  const Mat3 rt = floor.similarity.rotation.transpose();
  geom::ObbParams p;
  p.center = floor_align::floor_to_world(floor, s.center);
  p.rotation.col(0) = rt * u;
  p.rotation.col(1) = rt * v;
  p.rotation.col(2) = rt * up;
  p.extents = s.extents.cwiseMax(0.0);
  Obb b = geom::make_obb(p);
  b.yaw = s.yaw;
  return b;
}

track::BoxState box_state_of(const geom::Obb& box, const floor_align::FloorFrame& floor) {
  track::BoxState s;
  s.center = floor_align::world_to_floor(floor, box.center);
  // Box axes in the floor frame; the one closest to +y is the height.
  Mat3 a = floor.similarity.rotation * box.rotation;
  int hi = 0;
  for (int k = 1; k < 3; ++k)
    if (std::abs(a(1, k)) > std::abs(a(1, hi))) hi = k;
  int li = hi == 0 ? 1 : 0;
  int wi = 3 - hi - li;
  if (box.yaw) {
    s.yaw = *box.yaw;
    const Vec3 u(std::cos(s.yaw), 0, std::sin(s.yaw));
    if (std::abs(a.col(wi).dot(u)) > std::abs(a.col(li).dot(u))) std::swap(li, wi);
  } else {
    s.yaw = std::atan2(a(2, li), a(0, li));
  }
  s.extents = Vec3(box.extents[li], box.extents[wi], box.extents[hi]);
  return s;
}

Json scene_graph_report(const std::vector<metrics::SceneGraphFrame>& frames, metrics::ConstraintMode mode,
                        const std::vector<int>& ks) {
  Json r = Json::object(), mr = Json::object();
  for (int k : ks) {
    r["R@" + std::to_string(k)] = metrics::recall_at_k(frames, mode, std::size_t(k));
    mr["mR@" + std::to_string(k)] = metrics::mean_recall_at_k(frames, mode, std::size_t(k));
  }
  return {{"mode", mode == metrics::ConstraintMode::WithConstraint ? "with" : "no"}, {"recall", r}, {"mean_recall", mr}};
}

Json label_report(const std::vector<metrics::ScoredLabel>& preds, const std::vector<metrics::LabeledInstance>& gts,
                  const std::vector<double>& thresholds) {
  Json out = Json::object();
  for (double tau : thresholds) {
    const auto rep = metrics::prf1(metrics::group_labels(metrics::threshold_filter(preds, tau)), gts);
    Json axes = Json::object();
    for (const auto& [axis, p] : rep.micro) axes[axis] = {{"micro", prf_json(p)}, {"macro", prf_json(rep.macro.at(axis))}};
    out["tau=" + fmt(tau)] = {{"axes", axes}, {"overall", {{"micro", prf_json(rep.overall_micro)}, {"macro", prf_json(rep.overall_macro)}}}};
  }
  return out;
}

std::vector<geom::Obb> apply_batch_corrections(const std::vector<geom::Obb>& boxes, const Corrections& c, int frame_count) {
  std::set<int> labels;
  std::set<std::pair<int, int>> present;
  for (const auto& b : boxes) {
    labels.insert(b.label);
    present.insert({b.label, b.frame});
  }
  std::vector<std::string> bad;
  for (const auto& e : c.edits) {
    if (!labels.count(e.label)) bad.push_back("edit: unknown label " + std::to_string(e.label));
    if (e.frame < 0 || e.frame >= frame_count) {
      bad.push_back("edit: frame " + std::to_string(e.frame) + " outside [0, " + std::to_string(frame_count) + ")");
    } else if (labels.count(e.label) && !present.count({e.label, e.frame})) {
      bad.push_back("edit: label " + std::to_string(e.label) + " has no box at frame " + std::to_string(e.frame));
    }
    if (!(e.scale.array() > 0).all() || !e.scale.allFinite()) bad.push_back("edit: non-positive scale for label " + std::to_string(e.label));
    if (geom::rotation_defect(e.rotation) > 1e-6) bad.push_back("edit: rotation for label " + std::to_string(e.label) + " is not proper");
  }
  for (const auto& r : c.renames)
    if (!labels.count(r.from)) bad.push_back("rename: unknown label " + std::to_string(r.from));
  for (const auto& d : c.deletions) {
    if (!labels.count(d.label)) bad.push_back("deletion: unknown label " + std::to_string(d.label));
    if (d.frames)
      for (int f : *d.frames)
        if (f < 0 || f >= frame_count) bad.push_back("deletion: frame " + std::to_string(f) + " outside the video");
  }
  if (!bad.empty()) {
    std::string msg = "corrections rejected, nothing applied:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw InvalidInput(msg);
  }

  std::map<std::pair<int, int>, Obb> by_key;  // (label, frame)
  for (const auto& b : boxes) by_key[{b.label, b.frame}] = b;
  for (const auto& e : c.edits) {
    const Obb& src = by_key.at({e.label, e.frame});
    geom::Corners corners;
    for (int i = 0; i < 8; ++i) {
      const Vec3 local = src.rotation.transpose() * (src.corners[i] - src.center);
      const Vec3 scaled = src.rotation * e.scale.cwiseProduct(local);
      corners[i] = src.center + e.rotation * scaled + e.translation;
    }
    const Obb edited = geom::obb_from_corners(corners, e.label, e.frame);
    const int last = frame_count - 1;
    int lo = e.frame, hi = e.frame;
    const int span = e.count ? *e.count : frame_count;
    if (e.direction != PropagationDirection::Backward) hi = std::min(last, e.frame + span);
    if (e.direction != PropagationDirection::Forward) lo = std::max(0, e.frame - span);
    for (int f = lo; f <= hi; ++f) {
      Obb b = edited;
      b.frame = f;
      by_key[{e.label, f}] = b;
    }
  }
  std::map<int, int> rename;
  for (const auto& r : c.renames) rename[r.from] = r.to;
  std::set<std::pair<int, int>> drop;
  std::set<int> drop_all;
  for (const auto& d : c.deletions) {
    if (!d.frames) {
      drop_all.insert(d.label);
    } else {
      for (int f : *d.frames) drop.insert({d.label, f});
    }
  }
  std::vector<Obb> out;
  for (auto& [key, b] : by_key) {
    if (drop_all.count(key.first) || drop.count(key)) continue;
    const auto r = rename.find(b.label);
    if (r != rename.end()) b.label = r->second;
    out.push_back(b);
  }
  std::stable_sort(out.begin(), out.end(), [](const Obb& a, const Obb& b) { return std::tie(a.frame, a.label) < std::tie(b.frame, b.label); });
  return out;
}

StageReport apply_corrections(const fs::path& root, const std::optional<fs::path>& corrections) {
  const auto ws = Workspace::open(root);
  WorkspaceLock lock(root);
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path obbs = ws.out("obbs.json");
  need(obbs, "obbs");
  const fs::path cp = corrections ? *corrections : ws.path("corrections.json");
  need(cp, "corrections");
  const auto c = read_corrections(cp);
  const auto boxes = read_boxes(obbs);
  const auto out = apply_batch_corrections(boxes, c, ws.manifest().frame_count);
  Json doc = boxes_to_json(out);
  doc["frame"] = "canonical";
  io::write_json(ws.out("obbs_corrected.json"), doc);
  StageReport rep;
  rep.stage = "apply-corrections";
  rep.counts = {{"edits", c.edits.size()}, {"renames", c.renames.size()}, {"deletions", c.deletions.size()},
                {"boxes_before", boxes.size()}, {"boxes_after", out.size()}};
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  fs::create_directories(root / "reports");
  io::write_json(root / "reports" / "apply-corrections.json", rep.to_json());
  return rep;
}

}  // namespace worldscaffold::pipeline
