#include "worldscaffold/pipeline/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "worldscaffold/cloud.hpp"
#include "worldscaffold/error.hpp"
#include "worldscaffold/floor_align.hpp"
#include "worldscaffold/io.hpp"
#include "worldscaffold/obbfit.hpp"
#include "worldscaffold/pipeline/workspace.hpp"

namespace worldscaffold::pipeline {

namespace {

using geom::Mat3;
using geom::Vec3;

struct Rect {
  int x0, y0, x1, y1;  // pixels [x0, x1) × [y0, y1)
};

struct ObjectSpec {
  int label;
  bool is_static;
  Vec3 center;    // canonical, frame 0
  Vec3 velocity;  // canonical, per frame
  Vec3 dims;
  double yaw;
  Rect rect;
};

const std::vector<ObjectSpec> kObjects = {
    {1, true, {-1.0, 0.6, 0.4}, Vec3::Zero(), {0.6, 0.4, 0.8}, 20 * M_PI / 180, {2, 4, 22, 20}},
    {2, true, {0.9, 1.0, 0.25}, Vec3::Zero(), {1.0, 0.5, 0.5}, -35 * M_PI / 180, {24, 4, 44, 20}},
    {3, false, {0.0, -1.0, 0.5}, {0.04, 0.015, 0.0}, {0.4, 0.3, 1.0}, 0.3, {40, 26, 60, 42}},
};

constexpr double kFloorHeight = 0.15;  // floor plane z in the final frame

geom::Obb planted_box(const ObjectSpec& o, int t) {
  geom::ObbParams p;
  p.center = o.center + double(t) * o.velocity;
  p.extents = o.dims;
  p.rotation = geom::rotation_z(o.yaw);
  return geom::make_obb(p, o.label, t);
}

cloud::BinaryMask rect_mask(const Rect& r, bool top_half_only = false) {
  cloud::BinaryMask m(kSynthWidth, kSynthHeight);
  const int y1 = top_half_only ? (r.y0 + r.y1) / 2 : r.y1;
  for (int y = r.y0; y < y1; ++y)
    for (int x = r.x0; x < r.x1; ++x) m.set(x, y, true);
  return m;
}

Json box_json(const Rect& r) { return Json::array({r.x0, r.y0, r.x1, r.y1}); }

// Square-ish grid of triangles on z = kFloorHeight in the final frame.
floor_align::FloorMesh floor_mesh() {
  floor_align::FloorMesh m;
  const int n = 6;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m.vertices.emplace_back(-2.5 + i, -2.5 + j, kFloorHeight);
  for (int i = 0; i + 1 < n; ++i)
    for (int j = 0; j + 1 < n; ++j) {
      const int a = i * n + j, b = a + 1, c = a + n, d = c + 1;
      m.faces.push_back({a, c, b});
      m.faces.push_back({b, c, d});
    }
  return m;
}

Json vec_list(const std::vector<Vec3>& pts) {
  Json arr = Json::array();
  for (const auto& p : pts) arr.push_back(to_json(p));
  return arr;
}

}  // namespace

SynthTruth write_synthetic_workspace(const fs::path& root, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0, 1);
  std::normal_distribution<double> gauss(0, 1);
  fs::create_directories(root);
  for (const char* d : {"features", "masks_image", "masks_video", "clouds", "depth", "graphs", "eval_geom", "frames"})
    fs::create_directories(root / d);
  const int T = kSynthFrames, W = kSynthWidth, H = kSynthHeight;
  write_manifest(root, {"synthetic", T, W, H});

  SynthTruth truth;
  truth.similarity = {1.7, geom::rotation_y(35 * M_PI / 180), Vec3(0.4, -0.2, 1.1)};
  const auto frame = floor_align::build_floor_frame(truth.similarity, false);
  const auto mesh = floor_mesh();
  const auto xy = floor_align::xy_plane_align(mesh, {});
  const geom::RigidTransform to_world = geom::compose_rigid(frame.final.inverse(), xy.transform.inverse());
  const auto world = [&](const Vec3& c) { return to_world.apply(c); };

  // Floor similarity correspondences: exact pairs plus two gross outliers per frame.
  Json corr = Json::array();
  for (int t = 0; t < T; ++t) {
    std::vector<Vec3> src, dst;
    for (int i = 0; i < 12; ++i) {
      const Vec3 s(2 * u01(rng) - 1, 2 * u01(rng) - 1, 2 * u01(rng) - 1);
      Vec3 d = truth.similarity.apply(s);
      if (i < 2) d += Vec3(0.5 + u01(rng), -0.5, 0.3);
      src.push_back(s);
      dst.push_back(d);
    }
    corr.push_back({{"frame", t}, {"source", vec_list(src)}, {"target", vec_list(dst)}});
  }
  io::write_json(root / "smpl_correspondences.json", versioned({{"frames", corr}}));

  {
    cloud::PointCloud mc;
    mc.points = mesh.vertices;
    io::write_ply(root / "floor_mesh.ply", mc, mesh.faces);
  }

  // Static scene in canonical coordinates: floor, back wall, side wall.
  cloud::PointCloud scene;
  for (int i = 0; i <= 40; ++i)
    for (int j = 0; j <= 40; ++j) scene.points.push_back(world({-2 + 0.1 * i, -2 + 0.1 * j, 0.0}));
  for (int i = 0; i <= 40; ++i)
    for (int k = 1; k <= 20; ++k) {
      scene.points.push_back(world({-2 + 0.1 * i, 2.0, 0.1 * k}));
      scene.points.push_back(world({-2.0, -2 + 0.1 * i, 0.1 * k}));
    }
  const std::size_t n_valid_scene = scene.points.size();
  scene.colors.assign(n_valid_scene, {120, 120, 120});
  scene.confidence.assign(n_valid_scene, 1.0);
  for (int i = 0; i < 20; ++i) {  // inpainting residue: near-black, low confidence
    scene.points.push_back(world({-1.5 + 0.1 * i, 0.0, 1.5}));
    scene.colors.push_back({3, 3, 3});
    scene.confidence.push_back(0.5);
  }
  for (std::size_t i = 0; i < 50; ++i) {  // below tau_static
    scene.points.push_back(world({0.05 * double(i) - 1.0, -1.5, 1.0}));
    scene.colors.push_back({200, 10, 10});
    scene.confidence.push_back(0.05);
  }
  io::write_ply(root / "clouds" / "static.ply", scene);

  // Object pixels: the 8 box corners sit in the mask core (the pixels that
  // survive the largest erosion). All other pixels get interior points.
  int max_kernel = 0;
  for (int k : obbfit::ErosionConfig{}.kernel_sizes) max_kernel = std::max(max_kernel, k);
  std::map<int, std::vector<int>> core_pixels;
  for (const auto& o : kObjects) {
    const auto core = obbfit::erode_mask(rect_mask(o.rect), max_kernel);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (core.at(x, y)) core_pixels[o.label].push_back(y * W + x);
    if (core_pixels[o.label].size() < 8) throw InvalidInput("synthetic fixture: object core too small");
  }

  Json gt2d = Json::array(), dets = Json::array(), poses = Json::array(), eval_gt = Json::array(), eval_pred = Json::array();
  for (int t = 0; t < T; ++t) {
    const Vec3 drift = double(t) * Vec3(0.003, -0.002, 0.001);
    cloud::PointCloud fc;
    fc.points.resize(std::size_t(W) * H);
    fc.colors.assign(fc.points.size(), {128, 128, 128});
    fc.confidence.assign(fc.points.size(), 0.0);
    std::vector<bool> taken(fc.points.size(), false);

    for (const auto& o : kObjects) {
      const geom::Obb box = planted_box(o, t);
      truth.boxes[{o.label, t}] = box;
      auto& pts = truth.points[{o.label, t}];
      const auto& core = core_pixels[o.label];
      std::size_t corner = 0;
      for (int y = o.rect.y0; y < o.rect.y1; ++y) {
        for (int x = o.rect.x0; x < o.rect.x1; ++x) {
          const int idx = y * W + x;
          Vec3 c;
          if (corner < 8 && std::find(core.begin(), core.end(), idx) != core.end()) {
            c = box.corners[corner++];
          } else {
            const Vec3 local(u01(rng) - 0.5, u01(rng) - 0.5, u01(rng) - 0.5);
            c = box.center + box.rotation * (0.9 * local.cwiseProduct(box.extents));
          }
          // Round through float32 so the truth matches what the PLY stores.
          const Vec3 w = world(c).cast<float>().cast<double>();
          fc.points[idx] = w;
          fc.confidence[idx] = 1.0;
          fc.colors[idx] = {std::uint8_t(60 * o.label), 90, 30};
          taken[idx] = true;
          pts.push_back(c);
        }
      }
      if (t % 5 == 0) gt2d.push_back({{"frame", t}, {"label", o.label}, {"box", box_json(o.rect)}});
      const Rect grown{std::max(0, o.rect.x0 - 1), std::max(0, o.rect.y0 - 1), std::min(W, o.rect.x1 + 1), std::min(H, o.rect.y1 + 1)};
      dets.push_back({{"frame", t}, {"label", o.label}, {"score", 0.9 - 0.01 * o.label}, {"box", box_json(grown)}});
      const Rect shifted{o.rect.x0 + 2, o.rect.y0 + 1, o.rect.x1 + 1, o.rect.y1};
      dets.push_back({{"frame", t}, {"label", o.label}, {"score", 0.5}, {"box", box_json(shifted)}});
      io::write_mask_png(root / "masks_image" / (frame_name(t) + "_" + std::to_string(o.label) + ".png"), rect_mask(o.rect));
      if (t % 2 == 1)
        io::write_mask_png(root / "masks_video" / (frame_name(t) + "_" + std::to_string(o.label) + ".png"),
                           rect_mask(o.rect, true));

      Json corners = Json::array();
      for (const auto& c : box.corners) corners.push_back(to_json(c));
      eval_gt.push_back({{"frame", t}, {"label", o.label}, {"box2d", box_json(o.rect)}, {"corners", corners}});
      geom::ObbParams pp = box.params();
      pp.center += Vec3(0.02, 0.0, 0.0);
      pp.rotation = geom::rotation_z(2 * M_PI / 180) * pp.rotation;
      const auto pb = geom::make_obb(pp);
      Json pc = Json::array();
      for (const auto& c : pb.corners) pc.push_back(to_json(c));
      eval_pred.push_back({{"frame", t}, {"label", o.label}, {"score", 0.9}, {"box2d", box_json(grown)}, {"corners", pc}});
    }
    dets.push_back({{"frame", t}, {"label", 9}, {"score", 0.1}, {"box", Json::array({50, 2, 60, 12})}});

    // Background pixels sample the static scene, offset by the frame drift.
    for (int i = 0; i < W * H; ++i) {
      if (taken[i]) continue;
      if (i % 13 == 7) {
        fc.points[i] = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const std::size_t s = (std::size_t(i) * 7919u + std::size_t(t) * 104729u) % n_valid_scene;
      fc.points[i] = scene.points[s] - drift;
      fc.confidence[i] = 0.6 + 0.4 * u01(rng);
    }
    io::write_ply(root / "clouds" / ("frame_" + frame_name(t) + ".ply"), fc);

    io::RawImage depth{W, H, std::vector<float>(std::size_t(W) * H, 2.0f)};
    for (const auto& o : kObjects)
      for (int y = o.rect.y0; y < o.rect.y1; ++y)
        for (int x = o.rect.x0; x < o.rect.x1; ++x) depth.data[std::size_t(y) * W + x] = 1.5f;
    io::write_raw_f32(root / "depth" / (frame_name(t) + ".f32"), depth);

    const geom::RigidTransform pose{geom::rotation_z(2.0 * t * M_PI / 180), Vec3(0.1 * t, 0.0, 1.5)};
    Json pj = to_json(pose);
    pj["frame"] = t;
    poses.push_back(pj);
  }
  io::write_json(root / "gt2d.json", versioned({{"boxes", gt2d}}));
  io::write_json(root / "detections.json", versioned({{"detections", dets}}));
  io::write_json(root / "poses.json", versioned({{"convention", "camera_to_world"}, {"poses", poses}}));
  io::write_json(root / "intrinsics.json", versioned({{"fx", 50.0}, {"fy", 50.0}, {"cx", 32.0}, {"cy", 24.0}}));
  Json flags = Json::object();
  for (const auto& o : kObjects) {
    flags[std::to_string(o.label)] = o.is_static;
    truth.static_flags[o.label] = o.is_static;
  }
  io::write_json(root / "static_flags.json", versioned({{"static", flags}}));
  io::write_json(root / "corrections.json",
                 versioned({{"floor", {{"scale", to_json(Vec3(Vec3::Ones()))}, {"rotation", to_json(Mat3(Mat3::Identity()))}, {"translation", to_json(Vec3(Vec3::Zero()))}}},
                            {"boxes", Json::array({{{"label", 3}, {"frame", 5}, {"translation", to_json(Vec3(0, 0, 0.05))},
                                                    {"direction", "forward"}, {"count", 3}}})},
                            {"renames", Json::array()},
                            {"deletions", Json::array()}}));
  io::write_json(root / "eval_geom" / "gt.json", versioned({{"boxes", eval_gt}}));
  io::write_json(root / "eval_geom" / "pred.json", versioned({{"boxes", eval_pred}}));

  // Keypoints on a strip twice the image width; frame t sees it shifted by 8t px.
  const int n_kp = 150, dim = 32;
  std::vector<geom::Vec2> base(n_kp);
  sampler::DescriptorMatrix desc(n_kp, dim);
  for (int i = 0; i < n_kp; ++i) {
    base[i] = {u01(rng) * (W + 8.0 * (T - 1)), u01(rng) * H};
    for (int d = 0; d < dim; ++d) desc(i, d) = float(gauss(rng));
  }
  for (int t = 0; t < T; ++t) {
    sampler::FrameFeatures f;
    f.frame_index = std::uint32_t(t);
    std::vector<int> vis;
    for (int i = 0; i < n_kp; ++i) {
      const geom::Vec2 k = base[i] - geom::Vec2(8.0 * t, 0.0);
      if (k.x() >= 0 && k.x() < W) {
        vis.push_back(i);
        f.keypoints.push_back(k);
      }
    }
    f.descriptors.resize(Eigen::Index(vis.size()), dim);
    for (std::size_t r = 0; r < vis.size(); ++r) f.descriptors.row(Eigen::Index(r)) = desc.row(vis[r]);
    write_features(root / "features" / (frame_name(t) + ".bin"), f);
  }

  // Toy scene graph: frame 0 recovers both GT triplets in the top 10, frame 1
  // only one (its second GT triplet ranks 12th), so R@10 = (1 + 0.5) / 2.
  Json f0c = Json::array({Json::array({0, 1, 2, 0.9}), Json::array({0, 2, 5, 0.8}), Json::array({1, 2, 4, 0.3})});
  Json f1c = Json::array({Json::array({0, 1, 3, 0.95})});
  for (int j = 2; j <= 11; ++j) f1c.push_back(Json::array({1, j, 1, 0.9 - 0.05 * (j - 2)}));
  f1c.push_back(Json::array({0, 3, 7, 0.1}));
  io::write_json(root / "graphs" / "pred.json",
                 versioned({{"frames", Json::array({{{"frame", 0}, {"candidates", f0c}}, {{"frame", 1}, {"candidates", f1c}}})}}));
  io::write_json(root / "graphs" / "gt.json",
                 versioned({{"frames", Json::array({{{"frame", 0}, {"gt", Json::array({Json::array({0, 1, 2}), Json::array({0, 2, 5})})}},
                                                    {{"frame", 1}, {"gt", Json::array({Json::array({0, 1, 3}), Json::array({0, 3, 7})})}}})}}));
  const auto lab = [](int f, int s, int o, const char* axis, int l, double p) {
    return Json{{"frame", f}, {"subject", s}, {"object", o}, {"axis", axis}, {"label", l}, {"p_yes", p}};
  };
  io::write_json(root / "graphs" / "labels_pred.json",
                 versioned({{"labels", Json::array({lab(0, 0, 1, "attention", 0, 0.8), lab(0, 0, 1, "contacting", 1, 0.9),
                                                    lab(0, 0, 1, "contacting", 2, 0.4), lab(1, 0, 3, "spatial", 3, 0.6)})}}));
  const auto inst = [](int f, int s, int o, const char* axis, std::vector<int> l) {
    return Json{{"frame", f}, {"subject", s}, {"object", o}, {"axis", axis}, {"labels", l}};
  };
  io::write_json(root / "graphs" / "labels_gt.json",
                 versioned({{"instances", Json::array({inst(0, 0, 1, "attention", {0}), inst(0, 0, 1, "contacting", {1, 2}),
                                                       inst(1, 0, 3, "spatial", {4})})}}));

  // World state for the buffer: object 0 always visible, object 1 at {2, 7},
  // object 2 never.
  track::WorldState wsd;
  wsd.num_frames = T;
  wsd.num_objects = 3;
  wsd.feature_dim = 4;
  wsd.labels = {1, 2, 3};
  wsd.static_flags = {1, 1, 0};
  wsd.visibility.assign(std::size_t(T) * 3, 0);
  for (int t = 0; t < T; ++t) {
    wsd.visibility[std::size_t(t) * 3] = 1;
    if (t == 2 || t == 7) wsd.visibility[std::size_t(t) * 3 + 1] = 1;
  }
  for (int t = 0; t < T; ++t)
    for (int n = 0; n < 3; ++n)
      for (int d = 0; d < 4; ++d) wsd.features.push_back(float(10 * t + n) + 0.1f * float(d));
  write_world_state(root / "world_state", wsd);

  // Truth in the canonical frame.
  Json objs = Json::array();
  for (const auto& o : kObjects) {
    Json frames = Json::array();
    for (int t = 0; t < T; ++t) {
      const auto& b = truth.boxes.at({o.label, t});
      Json corners = Json::array();
      for (const auto& c : b.corners) corners.push_back(to_json(c));
      frames.push_back({{"frame", t}, {"corners", corners}, {"points", vec_list(truth.points.at({o.label, t}))}});
    }
    objs.push_back({{"label", o.label}, {"static", o.is_static}, {"frames", frames}});
  }
  io::write_json(root / "synth_truth.json", versioned({{"similarity", to_json(truth.similarity)}, {"objects", objs}}));
  return truth;
}

SynthTruth read_synth_truth(const fs::path& path) {
  const Json j = io::read_json(path);
  const std::string p = path.string();
  SynthTruth t;
  try {
    t.similarity = similarity_from_json(j.at("similarity"), p);
    for (const auto& o : j.at("objects")) {
      const int label = o.at("label").get<int>();
      t.static_flags[label] = o.at("static").get<bool>();
      for (const auto& f : o.at("frames")) {
        const int fr = f.at("frame").get<int>();
        geom::Corners c;
        for (int i = 0; i < 8; ++i) c[i] = vec3_from_json(f.at("corners")[i], p);
        t.boxes[{label, fr}] = geom::obb_from_corners(c, label, fr);
        auto& pts = t.points[{label, fr}];
        for (const auto& v : f.at("points")) pts.push_back(vec3_from_json(v, p));
      }
    }
  } catch (const Json::exception& e) {
    throw ParseError(p, 0, e.what());
  }
  return t;
}

}  // namespace worldscaffold::pipeline
