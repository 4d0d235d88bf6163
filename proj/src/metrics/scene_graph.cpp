#include "worldscaffold/metrics/scene_graph.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "worldscaffold/error.hpp"

namespace worldscaffold::metrics {

namespace {

bool ranked_before(const ScoredTriplet& a, const ScoredTriplet& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.triplet < b.triplet;
}

using InstanceKey = std::tuple<int, int, int, std::string>;

}  // namespace

void SceneGraphFrame::validate() const {
  for (const auto& c : candidates)
    if (!std::isfinite(c.score)) throw InvalidInput("scene graph frame " + std::to_string(frame) + ": non-finite score");
  std::set<Triplet> seen;
  for (const auto& t : gt)
    if (!seen.insert(t).second) throw InvalidInput("scene graph frame " + std::to_string(frame) + ": duplicate GT triplet");
}

std::vector<ScoredTriplet> build_graph(const SceneGraphFrame& frame, ConstraintMode mode, std::size_t k) {
  frame.validate();
  std::vector<ScoredTriplet> ranked = frame.candidates;
  std::sort(ranked.begin(), ranked.end(), ranked_before);
  if (mode == ConstraintMode::WithConstraint) {
    std::set<std::pair<int, int>> used;
    std::vector<ScoredTriplet> best;
    for (const auto& c : ranked)
      if (used.insert({c.triplet.subject, c.triplet.object}).second) best.push_back(c);
    ranked = std::move(best);
  }
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

double recall_at_k(const std::vector<SceneGraphFrame>& frames, ConstraintMode mode, std::size_t k) {
  double sum = 0.0;
  int counted = 0;
  for (const auto& f : frames) {
    if (f.gt.empty()) continue;
    const auto top = build_graph(f, mode, k);
    std::set<Triplet> predicted;
    for (const auto& c : top) predicted.insert(c.triplet);
    const auto hits = std::count_if(f.gt.begin(), f.gt.end(), [&](const Triplet& t) { return predicted.count(t) > 0; });
    sum += double(hits) / double(f.gt.size());
    ++counted;
  }
  if (counted == 0) throw InvalidInput("recall_at_k: no frame has ground truth");
  return sum / counted;
}

double mean_recall_at_k(const std::vector<SceneGraphFrame>& frames, ConstraintMode mode, std::size_t k) {
  std::map<int, std::pair<long, long>> per_class;  // predicate -> (hits, total)
  for (const auto& f : frames) {
    if (f.gt.empty()) continue;
    const auto top = build_graph(f, mode, k);
    std::set<Triplet> predicted;
    for (const auto& c : top) predicted.insert(c.triplet);
    for (const auto& t : f.gt) {
      auto& [hits, total] = per_class[t.predicate];
      ++total;
      if (predicted.count(t)) ++hits;
    }
  }
  if (per_class.empty()) throw InvalidInput("mean_recall_at_k: no ground truth");
  double sum = 0.0;
  for (const auto& [p, ht] : per_class) sum += double(ht.first) / double(ht.second);
  return sum / double(per_class.size());
}

Prf prf_from_counts(const LabelCounts& c) {
  Prf r;
  r.precision = c.tp + c.fp > 0 ? double(c.tp) / double(c.tp + c.fp) : 0.0;
  r.recall = c.tp + c.fn > 0 ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

PrfReport prf1(const std::vector<LabeledInstance>& preds, const std::vector<LabeledInstance>& gts) {
  std::map<InstanceKey, std::pair<std::set<int>, std::set<int>>> inst;  // (pred, gt)
  for (const auto& p : preds) {
    auto& s = inst[{p.frame, p.subject, p.object, p.axis}].first;
    s.insert(p.labels.begin(), p.labels.end());
  }
  for (const auto& g : gts) {
    auto& s = inst[{g.frame, g.subject, g.object, g.axis}].second;
    s.insert(g.labels.begin(), g.labels.end());
  }
  PrfReport rep;
  for (const auto& [key, sets] : inst) {
    auto& axis = rep.counts[std::get<3>(key)];
    const auto& [pred, gt] = sets;
    for (int l : pred) (gt.count(l) ? axis[l].tp : axis[l].fp)++;
    for (int l : gt)
      if (!pred.count(l)) axis[l].fn++;
  }
  LabelCounts all;
  double macro_p = 0, macro_r = 0, macro_f = 0;
  int macro_n = 0;
  for (const auto& [axis, labels] : rep.counts) {
    LabelCounts pooled;
    Prf mac;
    int n = 0;
    for (const auto& [l, c] : labels) {
      pooled.tp += c.tp;
      pooled.fp += c.fp;
      pooled.fn += c.fn;
      if (c.tp + c.fp + c.fn == 0) continue;
      const Prf p = prf_from_counts(c);
      mac.precision += p.precision;
      mac.recall += p.recall;
      mac.f1 += p.f1;
      ++n;
    }
    macro_p += mac.precision;
    macro_r += mac.recall;
    macro_f += mac.f1;
    macro_n += n;
    if (n > 0) {
      mac.precision /= n;
      mac.recall /= n;
      mac.f1 /= n;
    }
    rep.micro[axis] = prf_from_counts(pooled);
    rep.macro[axis] = mac;
    all.tp += pooled.tp;
    all.fp += pooled.fp;
    all.fn += pooled.fn;
  }
  rep.overall_micro = prf_from_counts(all);
  if (macro_n > 0) rep.overall_macro = {macro_p / macro_n, macro_r / macro_n, macro_f / macro_n};
  return rep;
}

std::vector<ScoredLabel> threshold_filter(const std::vector<ScoredLabel>& preds, double tau) {
  std::vector<ScoredLabel> out;
  for (const auto& p : preds) {
    if (!(p.p_yes >= 0.0 && p.p_yes <= 1.0)) throw InvalidInput("threshold_filter: confidence outside [0, 1]");
    if (p.p_yes >= tau) out.push_back(p);
  }
  return out;
}

std::vector<LabeledInstance> group_labels(const std::vector<ScoredLabel>& labels) {
  std::map<InstanceKey, std::set<int>> grouped;
  for (const auto& l : labels) grouped[{l.frame, l.subject, l.object, l.axis}].insert(l.label);
  std::vector<LabeledInstance> out;
  for (auto& [key, set] : grouped) {
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), std::move(set)});
  }
  return out;
}

}  // namespace worldscaffold::metrics
