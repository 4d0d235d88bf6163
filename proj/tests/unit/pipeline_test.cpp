#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "worldscaffold/error.hpp"
#include "worldscaffold/io.hpp"
#include "worldscaffold/pipeline/config.hpp"
#include "worldscaffold/pipeline/stages.hpp"
#include "worldscaffold/pipeline/synth.hpp"
#include "worldscaffold/pipeline/validate.hpp"
#include "worldscaffold/pipeline/workspace.hpp"

using namespace worldscaffold;
using namespace worldscaffold::pipeline;
using geom::Vec3;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ws_pipeline_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative path -> bytes for every regular file under `root`.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

// Names, sizes, mtimes and bytes.
std::size_t workspace_hash(const fs::path& root) {
  std::size_t h = 0;
  const auto mix = [&](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); };
  for (const auto& [name, bytes] : tree(root)) {
    mix(std::hash<std::string>{}(name));
    mix(std::hash<std::string>{}(bytes));
    mix(std::size_t(fs::last_write_time(root / name).time_since_epoch().count()));
  }
  return h;
}

PipelineConfig defaults() { return parse_config(default_config_toml()); }

double outside_distance(const geom::Obb& b, const Vec3& p) {
  const Vec3 l = b.rotation.transpose() * (p - b.center);
  return (l.cwiseAbs() - b.extents / 2).cwiseMax(0.0).maxCoeff();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WORLDSCAFFOLD_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

class SynthWorkspace : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = scratch(::testing::UnitTest::GetInstance()->current_test_info()->name());
    truth_ = write_synthetic_workspace(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path root_;
  SynthTruth truth_;
};

}  // namespace

// ---- config ------------------------------------------------------------------

TEST(Config, EmbeddedDefaultsMatchStructDefaults) {
  const PipelineConfig a = defaults();
  const PipelineConfig b;
  EXPECT_EQ(a.sampler.min_frames, b.sampler.min_frames);
  EXPECT_EQ(a.sampler.seed, b.sampler.seed);
  EXPECT_EQ(a.icp.max_iters, b.icp.max_iters);
  EXPECT_DOUBLE_EQ(a.icp.trim_fraction, b.icp.trim_fraction);
  EXPECT_EQ(a.similarity.iters, b.similarity.iters);
  EXPECT_DOUBLE_EQ(a.similarity.inlier_threshold, b.similarity.inlier_threshold);
  EXPECT_DOUBLE_EQ(a.cloud.tau_static, 0.1);
  EXPECT_DOUBLE_EQ(a.cloud.tau_frame, 0.01);
  EXPECT_EQ(a.erosion.kernel_sizes, b.erosion.kernel_sizes);
  EXPECT_EQ(a.metrics.ks, (std::vector<int>{10, 20, 50}));
  EXPECT_EQ(a.seed, 0u);
  EXPECT_NO_THROW(a.validate());
}

TEST(Config, OverrideAndSeedPropagation) {
  auto c = parse_config("seed = 7\n[cloud]\ntau_static = 0.2\n");
  EXPECT_DOUBLE_EQ(c.cloud.tau_static, 0.2);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.sampler.seed, 7u);
  EXPECT_EQ(c.similarity.seed, 7u);
  c.set_seed(11);
  EXPECT_EQ(c.sampler.seed, 11u);
}

TEST(Config, UnknownKeyRejected) {
  EXPECT_THROW(parse_config("[cloud]\ntau_statc = 0.2\n"), InvalidInput);
  EXPECT_THROW(parse_config("[nonsense]\nx = 1\n"), InvalidInput);
  EXPECT_THROW(parse_config("[cloud]\ntau_static = \"high\"\n"), InvalidInput);
}

TEST(Config, OutOfRangeRejected) {
  EXPECT_THROW(parse_config("[icp]\ntrim_fraction = 1.5\n"), Error);
  EXPECT_THROW(parse_config("[metrics]\nconstraint = \"maybe\"\n"), InvalidInput);
}

TEST(Config, ParseErrorCarriesOffset) {
  try {
    parse_config("seed = 1\nx = [\n", "cfg.toml");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.path(), "cfg.toml");
    EXPECT_GE(e.offset(), 9u);
  }
}

// ---- stage plumbing ----------------------------------------------------------

TEST(Stages, NamesRoundTripAndUpstreamChain) {
  for (Stage s : {Stage::Sample, Stage::Merge, Stage::Floor, Stage::Fit, Stage::Smooth, Stage::Finalize, Stage::EvalGeom,
                  Stage::EvalSgg, Stage::Lks})
    EXPECT_EQ(parse_stage(stage_name(s)), s);
  EXPECT_FALSE(parse_stage("bogus"));
  EXPECT_EQ(upstream(Stage::Fit), (std::vector<Stage>{Stage::Sample, Stage::Merge, Stage::Floor}));
  EXPECT_TRUE(upstream(Stage::EvalSgg).empty());
  EXPECT_TRUE(upstream(Stage::Lks).empty());
}

TEST(Workspace, MissingManifestIsDependencyError) {
  const fs::path p = scratch("nomanifest");
  fs::create_directories(p);
  try {
    Workspace::open(p);
    FAIL();
  } catch (const MissingDependency& e) {
    EXPECT_EQ(e.artifact(), "manifest");
  }
  fs::remove_all(p);
}

TEST(Workspace, FeaturesRoundTripAndTruncation) {
  const fs::path p = scratch("features");
  fs::create_directories(p);
  sampler::FrameFeatures f;
  f.frame_index = 4;
  f.keypoints = {{1, 2}, {3, 4}};
  f.descriptors = sampler::DescriptorMatrix::Random(2, 8);
  write_features(p / "f.bin", f);
  const auto g = read_features(p / "f.bin");
  EXPECT_EQ(g.frame_index, 4u);
  EXPECT_EQ(g.keypoints, f.keypoints);
  EXPECT_EQ(g.descriptors, f.descriptors);
  const std::string bytes = slurp(p / "f.bin");
  std::ofstream(p / "t.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  try {
    read_features(p / "t.bin");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GT(e.offset(), 0u);
    EXPECT_LE(e.offset(), bytes.size());
  }
  fs::remove_all(p);
}

TEST(Workspace, LockIsExclusive) {
  const fs::path p = scratch("lock");
  fs::create_directories(p);
  {
    WorkspaceLock a(p);
    EXPECT_THROW(WorkspaceLock b(p), InvalidInput);
  }
  EXPECT_NO_THROW(WorkspaceLock c(p));
  fs::remove_all(p);
}

TEST_F(SynthWorkspace, MaskUnionAtIngestion) {
  const auto ws = Workspace::open(root_);
  // Odd frames also carry top-half video masks; the union is the full rect.
  const auto m = ws.load_masks(3);
  ASSERT_EQ(m.size(), 3u);
  int on = 0;
  for (int y = 0; y < ws.manifest().image_height; ++y)
    for (int x = 0; x < ws.manifest().image_width; ++x) on += m.at(1).at(x, y);
  EXPECT_EQ(on, 20 * 16);
}

// ---- end to end --------------------------------------------------------------

TEST_F(SynthWorkspace, EndToEndBoxesContainPlantedPoints) {
  const auto reports = run_pipeline(root_, Stage::Finalize, defaults(), false);
  ASSERT_EQ(reports.size(), 6u);
  for (const auto& r : reports) EXPECT_TRUE(fs::exists(root_ / "reports" / (r.stage + ".json")));

  const auto boxes = read_boxes(root_ / "out" / "obbs.json");
  ASSERT_EQ(boxes.size(), 3u * kSynthFrames);
  std::set<std::pair<int, int>> seen;
  for (const auto& b : boxes) {
    seen.insert({b.label, b.frame});
    const auto& pts = truth_.points.at({b.label, b.frame});
    // Static objects come out exact up to float32 storage; the moving one
    // carries a small smoother bias.
    const double tol = truth_.static_flags.at(b.label) ? 1e-5 : 1e-3;
    double worst = 0;
    for (const auto& p : pts) worst = std::max(worst, outside_distance(b, p));
    EXPECT_LE(worst, tol) << "label " << b.label << " frame " << b.frame;
    // The fitted box is tight around its content: same size as the planted box.
    const auto& planted = truth_.boxes.at({b.label, b.frame});
    EXPECT_NEAR(b.volume(), planted.volume(), 10 * tol);
  }
  EXPECT_EQ(seen.size(), 3u * kSynthFrames);
}

TEST_F(SynthWorkspace, FloorRecoversPlantedSimilarity) {
  run_pipeline(root_, Stage::Floor, defaults(), false);
  const auto f = read_floor_state(root_ / "out" / "floor.json");
  EXPECT_NEAR(f.frame.similarity.scale, truth_.similarity.scale, 1e-9);
  EXPECT_LT((f.frame.similarity.rotation - truth_.similarity.rotation).norm(), 1e-9);
  EXPECT_LT((f.frame.similarity.translation - truth_.similarity.translation).norm(), 1e-9);
}

TEST_F(SynthWorkspace, MergeUndoesFrameDrift) {
  run_pipeline(root_, Stage::Merge, defaults(), false);
  const Json reg = io::read_json(root_ / "out" / "registration.json");
  ASSERT_EQ(reg.at("frames").size(), std::size_t(kSynthFrames));
  for (const auto& e : reg.at("frames")) {
    const int t = e.at("frame").get<int>();
    const auto tr = rigid_from_json(e.at("transform"), "registration");
    const Vec3 drift = double(t) * Vec3(0.003, -0.002, 0.001);
    EXPECT_LT((tr.rotation - geom::Mat3::Identity()).norm(), 1e-6) << t;
    EXPECT_LT((tr.translation - drift).norm(), 1e-5) << t;
  }
}

TEST_F(SynthWorkspace, FitWithoutMasksNamesMasks) {
  fs::remove_all(root_ / "masks_image");
  fs::remove_all(root_ / "masks_video");
  try {
    run_pipeline(root_, Stage::Fit, defaults(), false);
    FAIL();
  } catch (const MissingDependency& e) {
    EXPECT_EQ(e.artifact(), "masks");
  }
}

TEST_F(SynthWorkspace, StageOnlyNeedsUpstreamOutputs) {
  EXPECT_THROW(run_pipeline(root_, Stage::Smooth, defaults(), true), MissingDependency);
}

TEST_F(SynthWorkspace, EvalSggToyRecall) {
  run_pipeline(root_, Stage::EvalSgg, defaults(), true);
  const Json j = io::read_json(root_ / "out" / "eval_sgg.json");
  const Json& r = j.at("relationships");
  EXPECT_EQ(r.at("mode"), "with");
  EXPECT_DOUBLE_EQ(r.at("recall").at("R@10").get<double>(), 0.75);
  EXPECT_DOUBLE_EQ(r.at("mean_recall").at("mR@10").get<double>(), 0.75);
  EXPECT_DOUBLE_EQ(r.at("recall").at("R@20").get<double>(), 1.0);
  EXPECT_TRUE(j.at("labels").contains("tau=0.5"));
}

TEST_F(SynthWorkspace, EvalGeomReflectsPlantedPerturbation) {
  run_pipeline(root_, Stage::EvalGeom, defaults(), true);
  const Json s = io::read_json(root_ / "out" / "eval_geom.json").at("summary");
  EXPECT_EQ(s.at("matched").get<int>(), 3 * kSynthFrames);
  EXPECT_NEAR(s.at("mean_center_l2").get<double>(), 0.02, 1e-9);
  EXPECT_NEAR(s.at("mean_rotation").get<double>(), 2 * M_PI / 180, 1e-9);
  EXPECT_NEAR(s.at("mean_dims_l1").get<double>(), 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(s.at("hit_rates").at("IoU@0.5").get<double>(), 1.0);
}

TEST_F(SynthWorkspace, LksStaleness) {
  run_pipeline(root_, Stage::Lks, defaults(), true);
  const Json st = io::read_json(root_ / "out" / "lks" / "staleness.json").at("staleness");
  ASSERT_EQ(st.size(), std::size_t(kSynthFrames));
  for (int t = 0; t < kSynthFrames; ++t) {
    EXPECT_EQ(st[t][0].get<int>(), 0);
    EXPECT_EQ(st[t][1].get<int>(), std::min(std::abs(t - 2), std::abs(t - 7)));
    EXPECT_EQ(st[t][2].get<int>(), 1000);
  }
}

TEST_F(SynthWorkspace, RerunIsByteIdenticalAndLeavesNoTempFiles) {
  run_pipeline(root_, Stage::Finalize, defaults(), false);
  const auto first = tree(root_ / "out");
  run_pipeline(root_, Stage::Finalize, defaults(), false);
  EXPECT_EQ(tree(root_ / "out"), first);
  for (const auto& [name, bytes] : first) EXPECT_EQ(name.find(".tmp."), std::string::npos) << name;
}

// ---- validation --------------------------------------------------------------

TEST_F(SynthWorkspace, ValidateCompleteFixture) {
  const auto rep = validate_workspace(root_);
  EXPECT_TRUE(rep.ok());
  EXPECT_TRUE(rep.errors.empty());
  run_pipeline(root_, Stage::Finalize, defaults(), false);
  EXPECT_TRUE(validate_workspace(root_).ok());
}

TEST_F(SynthWorkspace, ValidateTruncatedPly) {
  const fs::path ply = root_ / "clouds" / "frame_000003.ply";
  fs::resize_file(ply, fs::file_size(ply) / 2);
  const auto rep = validate_workspace(root_);
  ASSERT_EQ(rep.errors.size(), 1u);
  EXPECT_EQ(fs::path(rep.errors[0].path), ply);
}

TEST_F(SynthWorkspace, ValidatePerturbedBox) {
  const fs::path p = root_ / "eval_geom" / "gt.json";
  Json j = io::read_json(p);
  j["boxes"][4]["corners"][0][2] = j["boxes"][4]["corners"][0][2].get<double>() + 0.01;
  io::write_json(p, j);
  const auto rep = validate_workspace(root_);
  ASSERT_EQ(rep.errors.size(), 1u);
  EXPECT_EQ(fs::path(rep.errors[0].path), p);
  EXPECT_NE(rep.errors[0].message.find("invariant"), std::string::npos);
  ASSERT_TRUE(rep.errors[0].deviation);
  EXPECT_NEAR(*rep.errors[0].deviation, 0.01, 2e-3);
}

TEST_F(SynthWorkspace, ValidateIsSideEffectFree) {
  run_pipeline(root_, Stage::Finalize, defaults(), false);
  const auto before = workspace_hash(root_);
  validate_workspace(root_);
  EXPECT_EQ(workspace_hash(root_), before);
}

TEST_F(SynthWorkspace, ValidateFrameCountMismatch) {
  fs::remove(root_ / "features" / "000011.bin");
  EXPECT_FALSE(validate_workspace(root_).ok());
}

// ---- corrections -------------------------------------------------------------

namespace {

std::vector<geom::Obb> track_boxes(int frames) {
  std::vector<geom::Obb> out;
  for (int t = 0; t < frames; ++t) {
    geom::ObbParams p{Vec3(0.1 * t, 0, 0.5), Vec3(1, 2, 1), geom::Mat3::Identity()};
    out.push_back(geom::make_obb(p, 7, t));
    p.center.y() = 3;
    out.push_back(geom::make_obb(p, 8, t));
  }
  return out;
}

const geom::Obb& find(const std::vector<geom::Obb>& bs, int label, int frame) {
  for (const auto& b : bs)
    if (b.label == label && b.frame == frame) return b;
  throw std::runtime_error("box not found");
}

}  // namespace

TEST(Corrections, ForwardCountThree) {
  const auto boxes = track_boxes(12);
  Corrections c;
  BoxEdit e;
  e.label = 7;
  e.frame = 5;
  e.translation = Vec3(0, 0, 0.25);
  e.count = 3;
  c.edits = {e};
  const auto out = apply_batch_corrections(boxes, c, 12);
  const auto& edited = find(out, 7, 5);
  EXPECT_NEAR(edited.center.z(), 0.75, 1e-12);
  for (int t = 0; t < 12; ++t) {
    const auto& b = find(out, 7, t);
    if (t >= 5 && t <= 8) {
      EXPECT_LT((b.center - edited.center).norm(), 1e-12) << t;
    } else {
      EXPECT_LT((b.center - find(boxes, 7, t).center).norm(), 1e-12) << t;
    }
    EXPECT_LT((find(out, 8, t).center - find(boxes, 8, t).center).norm(), 1e-12);
  }
}

TEST(Corrections, BothAllCoversEveryFrame) {
  const auto boxes = track_boxes(10);
  Corrections c;
  BoxEdit e;
  e.label = 7;
  e.frame = 4;
  e.scale = Vec3(2, 1, 1);
  e.direction = PropagationDirection::Both;
  e.count = std::nullopt;
  c.edits = {e};
  const auto out = apply_batch_corrections(boxes, c, 10);
  for (int t = 0; t < 10; ++t) {
    const auto& b = find(out, 7, t);
    EXPECT_NEAR(b.volume(), 4.0, 1e-12);
    EXPECT_LT((b.center - find(boxes, 7, 4).center).norm(), 1e-12);
  }
}

TEST(Corrections, BackwardStopsAtFirstFrame) {
  const auto boxes = track_boxes(10);
  Corrections c;
  BoxEdit e;
  e.label = 7;
  e.frame = 2;
  e.direction = PropagationDirection::Backward;
  e.count = 5;
  c.edits = {e};
  const auto out = apply_batch_corrections(boxes, c, 10);
  for (int t = 0; t <= 2; ++t) EXPECT_NEAR(find(out, 7, t).center.x(), 0.2, 1e-12);
  EXPECT_NEAR(find(out, 7, 3).center.x(), 0.3, 1e-12);
}

TEST(Corrections, EditOrderScaleRotateTranslate) {
  const auto boxes = track_boxes(3);
  Corrections c;
  BoxEdit e;
  e.label = 8;
  e.frame = 1;
  e.scale = Vec3(3, 1, 1);
  e.rotation = geom::rotation_z(M_PI / 2);
  e.translation = Vec3(1, 0, 0);
  e.count = 0;
  c.edits = {e};
  const auto out = apply_batch_corrections(boxes, c, 3);
  const auto& b = find(out, 8, 1);
  EXPECT_LT((b.center - (find(boxes, 8, 1).center + Vec3(1, 0, 0))).norm(), 1e-12);
  // Scaled along the box x axis (extent 3), then that axis is turned onto world y.
  double along_y = 0;
  for (int k = 0; k < 3; ++k) along_y = std::max(along_y, std::abs(b.rotation.col(k).y()) * b.extents[k]);
  EXPECT_NEAR(along_y, 3.0, 1e-12);
  EXPECT_LT((find(out, 8, 0).center - find(boxes, 8, 0).center).norm(), 1e-12);
}

TEST(Corrections, IdentityEditOnlyPropagates) {
  const auto boxes = track_boxes(8);
  Corrections c;
  BoxEdit e;
  e.label = 7;
  e.frame = 3;
  e.count = 2;
  c.edits = {e};
  const auto out = apply_batch_corrections(boxes, c, 8);
  const auto& src = find(boxes, 7, 3);
  for (int t = 3; t <= 5; ++t) {
    const auto& b = find(out, 7, t);
    for (int i = 0; i < 8; ++i) EXPECT_LT((b.corners[i] - src.corners[i]).norm(), 1e-12);
  }
  EXPECT_LT((find(out, 7, 6).center - find(boxes, 7, 6).center).norm(), 1e-12);
}

TEST(Corrections, RenamesAndDeletionsLast) {
  const auto boxes = track_boxes(4);
  Corrections c;
  c.renames = {{8, 9}};
  c.deletions = {{7, std::vector<int>{0, 1}}};
  const auto out = apply_batch_corrections(boxes, c, 4);
  EXPECT_EQ(out.size(), 6u);
  EXPECT_NO_THROW(find(out, 9, 0));
  EXPECT_THROW(find(out, 8, 0), std::runtime_error);
  EXPECT_THROW(find(out, 7, 1), std::runtime_error);
  EXPECT_NO_THROW(find(out, 7, 2));
}

TEST(Corrections, UnknownLabelAndFrameListedNothingApplied) {
  const auto boxes = track_boxes(4);
  Corrections c;
  BoxEdit good;
  good.label = 7;
  good.frame = 1;
  good.translation = Vec3(0, 0, 1);
  BoxEdit bad_label = good;
  bad_label.label = 42;
  BoxEdit bad_frame = good;
  bad_frame.frame = 17;
  c.edits = {good, bad_label, bad_frame};
  try {
    apply_batch_corrections(boxes, c, 4);
    FAIL();
  } catch (const InvalidInput& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("42"), std::string::npos);
    EXPECT_NE(msg.find("17"), std::string::npos);
  }
}

TEST_F(SynthWorkspace, ApplyCorrectionsFromWorkspaceFile) {
  run_pipeline(root_, Stage::Finalize, defaults(), false);
  const auto before = tree(root_ / "out");
  apply_corrections(root_, std::nullopt);
  const auto base = read_boxes(root_ / "out" / "obbs.json");
  const auto fixed = read_boxes(root_ / "out" / "obbs_corrected.json");
  const auto& src = find(base, 3, 5);
  for (int t = 5; t <= 8; ++t) EXPECT_NEAR(find(fixed, 3, t).center.z(), src.center.z() + 0.05, 1e-9);
  EXPECT_NEAR(find(fixed, 3, 9).center.z(), find(base, 3, 9).center.z(), 1e-12);

  // A failing batch leaves the outputs untouched.
  io::write_json(root_ / "bad.json",
                 versioned({{"boxes", Json::array({{{"label", 99}, {"frame", 0}, {"direction", "forward"}, {"count", 1}}})}}));
  const auto after_good = tree(root_ / "out");
  EXPECT_THROW(apply_corrections(root_, root_ / "bad.json"), InvalidInput);
  EXPECT_EQ(tree(root_ / "out"), after_good);
  EXPECT_EQ(before.count("obbs_corrected.json"), 0u);
}

// ---- CLI ---------------------------------------------------------------------

TEST_F(SynthWorkspace, CliExitCodes) {
  const std::string ws = " --workspace " + root_.string();
  EXPECT_EQ(run_cli("validate" + ws), 0);
  EXPECT_EQ(run_cli("finalize" + ws + " --seed 0"), 0);
  EXPECT_EQ(run_cli("eval-sgg --pred " + (root_ / "graphs/pred.json").string() + " --gt " +
                    (root_ / "graphs/gt.json").string() + " --mode no --k 10,20,50"),
            0);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("sample"), 1);

  std::ofstream(root_ / "bad.toml") << "x = [\n";
  EXPECT_EQ(run_cli("sample" + ws + " --config " + (root_ / "bad.toml").string()), 3);

  fs::resize_file(root_ / "clouds" / "static.ply", 40);
  EXPECT_EQ(run_cli("validate" + ws), 1);
  EXPECT_EQ(run_cli("merge" + ws), 3);

  fs::remove_all(root_ / "masks_image");
  fs::remove_all(root_ / "masks_video");
  EXPECT_EQ(run_cli("fit --stage-only" + ws), 2);
}
