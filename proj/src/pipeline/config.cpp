#include "worldscaffold/pipeline/config.hpp"

#include <cmath>
#include <set>

#define TOML_EXCEPTIONS 1
#include <tomlplusplus/toml.hpp>

#include "worldscaffold/error.hpp"
#include "worldscaffold/io.hpp"

namespace worldscaffold::pipeline {

namespace {

const std::string kDefaultToml = R"(# worldscaffold pipeline configuration.
# Every key is optional; omitted keys keep the values shown here.

# Seed copied into every randomized stage (homography RANSAC, similarity
# RANSAC, Monte Carlo IoU).
seed = 0

[sampler]
overlap_threshold = 0.95   # alpha: keep a frame once overlap with the last keyframe drops below this
ratio = 0.75               # Lowe ratio for descriptor matching
ransac_threshold = 4.0     # homography reprojection threshold, px
ransac_iters = 2000
ransac_confidence = 0.995
min_frames = 17            # K_min: below this the uniform-stride fallback is used

[icp]
trim_fraction = 0.8        # rho: fraction of closest correspondences kept
max_iters = 100            # I_max
mse_epsilon = 1e-5         # epsilon: stop when |MSE_prev - MSE| falls below this
min_correspondences = 10

[similarity]
iters = 500                # RANSAC iterations
inlier_threshold = 0.03    # inlier threshold, m
scale_min = 0.4            # scale bounds [0.4, 3.0]
scale_max = 3.0
min_valid_fraction = 0.2   # min valid frames max(3, 20%)
min_valid_frames = 3

[cloud]
tau_static = 0.1           # tau_static: confidence threshold for the static scene
tau_frame = 0.01           # tau_frame: confidence threshold for per-frame points
depth_edge_rtol = 0.03     # depth-edge rtol
frame_voxel = 0.01         # dynamic voxel (per-frame point reduction), m
merge_voxel = 0.02         # merge voxel (static-dynamic overlap removal), m
near_black_intensity = 8   # per-channel intensity bound for near-black suppression
near_black_confidence = 1.0

[fusion]
box_threshold = 0.25       # detection box threshold
nms_iou = 0.5              # NMS IoU threshold (GT boxes carry pseudo-score 1.001)

[erosion]
kernel_sizes = [0, 3, 5, 7, 10]  # erosion kernels, px
min_points = 50                  # min points per scale
confidence_floor = 1e-3          # confidence threshold max(1e-3, P5)
confidence_percentile = 5.0

[kalman]
# Placeholder magnitudes; no published values exist for these.
process_noise = 1e-5
measurement_noise = 1e-2
initial_velocity_variance = 1.0

[floor]
mirror = false             # optional ZY-plane mirror M = diag(-1, 1, 1)

[metrics]
ks = [10, 20, 50]          # R@K and mR@K cut-offs
constraint = "with"        # "with" (one predicate per pair) or "no"
match_iou = 0.5            # 2D IoU for prediction-to-GT matching
hit_thresholds = [0.5, 0.75]
rotation_mod_pi = false    # reduce rotation error by the 180-degree box symmetry
label_thresholds = [0.3, 0.5, 0.7, 0.9]  # tau for p_yes >= tau
monte_carlo_samples = 1000000  # for IoU of boxes that are not upright
)";

std::uint64_t byte_offset(std::string_view text, const toml::source_position& pos) {
  std::uint64_t line = 1, col = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (line == pos.line && col == pos.column) return i;
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return text.size();
}

class Section {
 public:
  Section(const toml::table* t, std::string name) : table_(t), name_(std::move(name)) {}

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!table_) return;
    const toml::node* n = table_->get(key);
    if (!n) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!n->is_boolean()) fail(key, "expected a boolean");
      out = *n->value<bool>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!n->is_number()) fail(key, "expected a number");
      out = *n->value<double>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!n->is_integer()) fail(key, "expected an integer");
      const auto v = *n->value<std::int64_t>();
      if constexpr (std::is_unsigned_v<T>) {
        if (v < 0) fail(key, "expected a non-negative integer");
      }
      out = T(v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!n->is_string()) fail(key, "expected a string");
      out = *n->value<std::string>();
    }
  }

  template <typename T>
  void get_list(const char* key, std::vector<T>& out) {
    seen_.insert(key);
    if (!table_) return;
    const toml::node* n = table_->get(key);
    if (!n) return;
    const toml::array* arr = n->as_array();
    if (!arr) fail(key, "expected an array");
    std::vector<T> vals;
    for (const auto& e : *arr) {
      if constexpr (std::is_integral_v<T>) {
        if (!e.is_integer()) fail(key, "expected integers");
        vals.push_back(T(*e.value<std::int64_t>()));
      } else {
        if (!e.is_number()) fail(key, "expected numbers");
        vals.push_back(*e.value<double>());
      }
    }
    out = std::move(vals);
  }

  void allow(const char* key) { seen_.insert(key); }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) fail(std::string(k.str()).c_str(), "unknown key");
    }
  }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw InvalidInput("config " + (name_.empty() ? key : name_ + "." + key) + ": " + what);
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

const toml::table* subtable(const toml::table& root, const char* name) {
  const toml::node* n = root.get(name);
  if (!n) return nullptr;
  if (!n->is_table()) throw InvalidInput(std::string("config ") + name + ": expected a table");
  return n->as_table();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidInput("config: " + what);
}

}  // namespace

void PipelineConfig::validate() const {
  require(sampler.overlap_threshold >= 0 && sampler.overlap_threshold <= 1, "sampler.overlap_threshold outside [0, 1]");
  require(sampler.ratio > 0 && sampler.ratio <= 1, "sampler.ratio outside (0, 1]");
  require(sampler.ransac_threshold > 0, "sampler.ransac_threshold must be positive");
  require(sampler.ransac_iters > 0, "sampler.ransac_iters must be positive");
  require(sampler.ransac_confidence > 0 && sampler.ransac_confidence < 1, "sampler.ransac_confidence outside (0, 1)");
  require(sampler.min_frames >= 0, "sampler.min_frames must be non-negative");
  require(icp.trim_fraction > 0 && icp.trim_fraction <= 1, "icp.trim_fraction outside (0, 1]");
  require(icp.max_iters > 0, "icp.max_iters must be positive");
  require(icp.mse_epsilon >= 0, "icp.mse_epsilon must be non-negative");
  require(icp.min_correspondences >= 3, "icp.min_correspondences must be at least 3");
  require(similarity.iters > 0, "similarity.iters must be positive");
  require(similarity.inlier_threshold > 0, "similarity.inlier_threshold must be positive");
  require(similarity.scale_min > 0 && similarity.scale_min <= similarity.scale_max, "similarity scale bounds invalid");
  require(similarity.min_valid_fraction >= 0 && similarity.min_valid_fraction <= 1,
          "similarity.min_valid_fraction outside [0, 1]");
  require(similarity.min_valid_frames >= 1, "similarity.min_valid_frames must be positive");
  require(cloud.tau_static >= 0 && cloud.tau_frame >= 0, "cloud confidence thresholds must be non-negative");
  require(cloud.depth_edge_rtol > 0, "cloud.depth_edge_rtol must be positive");
  require(cloud.frame_voxel > 0 && cloud.merge_voxel > 0, "cloud voxel sizes must be positive");
  require(fusion.nms_iou > 0 && fusion.nms_iou <= 1, "fusion.nms_iou outside (0, 1]");
  require(!erosion.kernel_sizes.empty(), "erosion.kernel_sizes is empty");
  for (int k : erosion.kernel_sizes) require(k >= 0, "erosion kernel sizes must be non-negative");
  require(erosion.confidence_percentile >= 0 && erosion.confidence_percentile <= 100,
          "erosion.confidence_percentile outside [0, 100]");
  kalman.validate();
  require(!metrics.ks.empty(), "metrics.ks is empty");
  for (int k : metrics.ks) require(k > 0, "metrics.ks must be positive");
  require(metrics.match_iou > 0 && metrics.match_iou <= 1, "metrics.match_iou outside (0, 1]");
  for (double t : metrics.label_thresholds) require(t >= 0 && t <= 1, "metrics.label_thresholds outside [0, 1]");
  require(metrics.monte_carlo_samples >= 10'000, "metrics.monte_carlo_samples below 10^4");
}

void PipelineConfig::set_seed(std::uint64_t s) {
  seed = s;
  sampler.seed = s;
  similarity.seed = s;
}

const std::string& default_config_toml() { return kDefaultToml; }

PipelineConfig parse_config(std::string_view text, const std::string& origin) {
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    throw ParseError(origin, byte_offset(text, e.source().begin), std::string(e.description()));
  }

  PipelineConfig cfg;
  Section top(&root, "");
  top.get("seed", cfg.seed);
  for (const char* s : {"sampler", "icp", "similarity", "cloud", "fusion", "erosion", "kalman", "floor", "metrics"})
    top.allow(s);
  top.finish();

  Section sp(subtable(root, "sampler"), "sampler");
  sp.get("overlap_threshold", cfg.sampler.overlap_threshold);
  sp.get("ratio", cfg.sampler.ratio);
  sp.get("ransac_threshold", cfg.sampler.ransac_threshold);
  sp.get("ransac_iters", cfg.sampler.ransac_iters);
  sp.get("ransac_confidence", cfg.sampler.ransac_confidence);
  sp.get("min_frames", cfg.sampler.min_frames);
  sp.finish();

  Section ic(subtable(root, "icp"), "icp");
  ic.get("trim_fraction", cfg.icp.trim_fraction);
  ic.get("max_iters", cfg.icp.max_iters);
  ic.get("mse_epsilon", cfg.icp.mse_epsilon);
  ic.get("min_correspondences", cfg.icp.min_correspondences);
  ic.finish();

  Section si(subtable(root, "similarity"), "similarity");
  si.get("iters", cfg.similarity.iters);
  si.get("inlier_threshold", cfg.similarity.inlier_threshold);
  si.get("scale_min", cfg.similarity.scale_min);
  si.get("scale_max", cfg.similarity.scale_max);
  si.get("min_valid_fraction", cfg.similarity.min_valid_fraction);
  si.get("min_valid_frames", cfg.similarity.min_valid_frames);
  si.finish();

  Section cl(subtable(root, "cloud"), "cloud");
  cl.get("tau_static", cfg.cloud.tau_static);
  cl.get("tau_frame", cfg.cloud.tau_frame);
  cl.get("depth_edge_rtol", cfg.cloud.depth_edge_rtol);
  cl.get("frame_voxel", cfg.cloud.frame_voxel);
  cl.get("merge_voxel", cfg.cloud.merge_voxel);
  cl.get("near_black_intensity", cfg.cloud.near_black_intensity);
  cl.get("near_black_confidence", cfg.cloud.near_black_confidence);
  cl.finish();

  Section fu(subtable(root, "fusion"), "fusion");
  fu.get("box_threshold", cfg.fusion.box_threshold);
  fu.get("nms_iou", cfg.fusion.nms_iou);
  fu.finish();

  Section er(subtable(root, "erosion"), "erosion");
  er.get_list("kernel_sizes", cfg.erosion.kernel_sizes);
  er.get("min_points", cfg.erosion.min_points);
  er.get("confidence_floor", cfg.erosion.confidence_floor);
  er.get("confidence_percentile", cfg.erosion.confidence_percentile);
  er.finish();

  Section ka(subtable(root, "kalman"), "kalman");
  ka.get("process_noise", cfg.kalman.process_noise);
  ka.get("measurement_noise", cfg.kalman.measurement_noise);
  ka.get("initial_velocity_variance", cfg.kalman.initial_velocity_variance);
  ka.finish();

  Section fl(subtable(root, "floor"), "floor");
  fl.get("mirror", cfg.floor.mirror);
  fl.finish();

  Section me(subtable(root, "metrics"), "metrics");
  me.get_list("ks", cfg.metrics.ks);
  std::string mode = "with";
  me.get("constraint", mode);
  if (mode == "with") {
    cfg.metrics.constraint = metrics::ConstraintMode::WithConstraint;
  } else if (mode == "no") {
    cfg.metrics.constraint = metrics::ConstraintMode::NoConstraint;
  } else {
    throw InvalidInput("config metrics.constraint: expected \"with\" or \"no\"");
  }
  me.get("match_iou", cfg.metrics.match_iou);
  me.get_list("hit_thresholds", cfg.metrics.hit_thresholds);
  me.get("rotation_mod_pi", cfg.metrics.rotation_mod_pi);
  me.get_list("label_thresholds", cfg.metrics.label_thresholds);
  me.get("monte_carlo_samples", cfg.metrics.monte_carlo_samples);
  me.finish();

  cfg.set_seed(cfg.seed);
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  io::require_file(path);
  return parse_config(io::read_file(path), path.string());
}

}  // namespace worldscaffold::pipeline
