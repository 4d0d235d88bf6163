#pragma once

// Scene-graph evaluation: ranked triplet recall, mean recall, and
// per-label precision / recall / F1.

#include <map>
#include <set>
#include <string>
#include <vector>

namespace worldscaffold::metrics {

struct Triplet {
  int subject = 0;
  int object = 0;
  int predicate = 0;

  auto operator<=>(const Triplet&) const = default;
};

struct ScoredTriplet {
  Triplet triplet;
  double score = 0.0;
};

struct SceneGraphFrame {
  int frame = 0;
  std::vector<ScoredTriplet> candidates;
  std::vector<Triplet> gt;

  void validate() const;  // finite scores, duplicate-free GT
};

enum class ConstraintMode { WithConstraint, NoConstraint };

/// Ranked by score descending, ties by ascending (subject, object,
/// predicate). WithConstraint first keeps the best predicate per pair.
std::vector<ScoredTriplet> build_graph(const SceneGraphFrame& frame, ConstraintMode mode, std::size_t k);

/// Mean over frames with GT of |top-k ∩ GT| / |GT|. Throws InvalidInput if
/// no frame has GT.
double recall_at_k(const std::vector<SceneGraphFrame>& frames, ConstraintMode mode, std::size_t k);

/// Per-predicate recall pooled over frames, averaged over predicates that
/// occur in GT.
double mean_recall_at_k(const std::vector<SceneGraphFrame>& frames, ConstraintMode mode, std::size_t k);

/// The label set of one (frame, subject, object) pair on one axis.
struct LabeledInstance {
  int frame = 0;
  int subject = 0;
  int object = 0;
  std::string axis;
  std::set<int> labels;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct LabelCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

struct PrfReport {
  std::map<std::string, Prf> micro;  // per axis
  std::map<std::string, Prf> macro;  // per axis
  Prf overall_micro;
  Prf overall_macro;
  std::map<std::string, std::map<int, LabelCounts>> counts;
};

/// Per-label TP/FP/FN over all instances; a pair missing on one side counts
/// as an empty label set. Macro averages skip labels with neither GT nor
/// predictions.
PrfReport prf1(const std::vector<LabeledInstance>& preds, const std::vector<LabeledInstance>& gts);

Prf prf_from_counts(const LabelCounts& c);

struct ScoredLabel {
  int frame = 0;
  int subject = 0;
  int object = 0;
  std::string axis;
  int label = 0;
  double p_yes = 0.0;
};

/// Keeps labels with p_yes ≥ tau. Throws InvalidInput for a confidence
/// outside [0, 1].
std::vector<ScoredLabel> threshold_filter(const std::vector<ScoredLabel>& preds, double tau);

/// Groups labels into one LabeledInstance per (frame, subject, object, axis).
std::vector<LabeledInstance> group_labels(const std::vector<ScoredLabel>& labels);

}  // namespace worldscaffold::metrics
