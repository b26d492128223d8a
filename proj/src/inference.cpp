#include "mcoref/inference.hpp"

#include <json.hpp>

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace mcoref {

using nlohmann::json;

std::set<std::pair<int, int>> pairwise_labels(const Eigen::MatrixXd& f, double tau) {
  if (tau <= 0.0 || tau >= 1.0) throw std::invalid_argument("threshold must lie in (0,1)");
  if (f.rows() != f.cols()) throw std::invalid_argument("compatibility matrix must be square");
  std::set<std::pair<int, int>> out;
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    for (Eigen::Index j = i + 1; j < f.cols(); ++j)
      if (f(i, j) > tau) out.insert({static_cast<int>(i), static_cast<int>(j)});
  return out;
}

Partition build_chains(const std::set<std::pair<int, int>>& pairs, int num_mentions) {
  std::vector<int> parent(static_cast<size_t>(num_mentions));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  };
  for (const auto& [i, j] : pairs) {
    if (i < 0 || j < 0 || i >= num_mentions || j >= num_mentions)
      throw std::invalid_argument("build_chains: pair index out of range");
    int ri = find(i), rj = find(j);
    if (ri != rj) parent[static_cast<size_t>(std::max(ri, rj))] = std::min(ri, rj);
  }
  std::map<int, std::vector<int>> components;  // keyed by root = smallest member
  for (int m = 0; m < num_mentions; ++m) components[find(m)].push_back(m);
  Partition out;
  for (auto& [root, members] : components) out.push_back(std::move(members));
  return out;
}

Partition chains_from_compatibility(const Document& doc, const Eigen::MatrixXd& f,
                                    const InferenceConfig& cfg, const PronounLexicon& lexicon) {
  if (cfg.threshold <= 0.0 || cfg.threshold >= 1.0)
    throw std::invalid_argument("InferenceConfig.threshold must lie in (0,1)");
  std::set<std::pair<int, int>> pairs = pairwise_labels(f, cfg.threshold);
  if (cfg.apply_rule_filter) pairs = eliminate_implausible(pairs, doc, lexicon);
  return build_chains(pairs, static_cast<int>(doc.mentions.size()));
}

std::string ChainPrediction::to_json(const std::string& doc_id) const {
  json j;
  j["id"] = doc_id;
  j["chains"] = chains;
  json boxes = json::array();
  json regions = json::array();
  for (const auto& [mention, box] : mention_boxes)
    boxes.push_back(json{box[0], box[1], box[2], box[3]});
  for (const auto& [mention, region] : mention_regions) regions.push_back(region);
  j["boxes"] = std::move(boxes);
  j["regions"] = std::move(regions);
  return j.dump();
}

MetricReport evaluate_cached(const std::vector<DocumentEvalCache>& caches,
                             const InferenceConfig& cfg, const PronounLexicon& lexicon,
                             int* total_chains) {
  MucCounts muc_acc;
  BlancCounts blanc_acc;
  GroundingCounts grounding_acc;
  int chains_seen = 0;
  for (const DocumentEvalCache& cache : caches) {
    const Document& doc = *cache.doc;
    if (!doc.gold_chains)
      throw std::runtime_error("evaluation requires gold chains; first missing: doc '" +
                               doc.id + "'");
    if (!doc.gold_boxes)
      throw std::runtime_error("evaluation requires gold boxes; first missing: doc '" +
                               doc.id + "'");
    Partition chains = chains_from_compatibility(doc, cache.f, cfg, lexicon);
    chains_seen += static_cast<int>(chains.size());
    muc_acc.add(muc_counts(*doc.gold_chains, chains));
    if (doc.mentions.size() >= 2) blanc_acc.add(blanc_counts(*doc.gold_chains, chains));
    grounding_acc.add(grounding_counts(cache.boxes, *doc.gold_boxes, cache.pronoun_flags));
  }
  if (total_chains) *total_chains = chains_seen;
  MetricReport report;
  report.muc = muc_from_counts(muc_acc);
  report.blanc = blanc_from_counts(blanc_acc);
  report.grounding = grounding_from_counts(grounding_acc);
  return report;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
  return grid;
}

std::vector<ThresholdSweepPoint> sweep_thresholds(const std::vector<DocumentEvalCache>& caches,
                                                  bool apply_rule_filter,
                                                  const PronounLexicon& lexicon,
                                                  const std::vector<double>& grid) {
  std::vector<ThresholdSweepPoint> out;
  for (double tau : grid) {
    InferenceConfig cfg;
    cfg.threshold = tau;
    cfg.apply_rule_filter = apply_rule_filter;
    ThresholdSweepPoint point;
    point.threshold = tau;
    point.metrics = evaluate_cached(caches, cfg, lexicon, &point.total_chains);
    out.push_back(std::move(point));
  }
  return out;
}

const ThresholdSweepPoint& best_by_muc_f1(const std::vector<ThresholdSweepPoint>& points) {
  if (points.empty()) throw std::invalid_argument("threshold sweep is empty");
  size_t best = 0;
  for (size_t i = 1; i < points.size(); ++i)
    if (points[i].metrics.muc.f1 > points[best].metrics.muc.f1) best = i;
  return points[best];
}

}  // namespace mcoref
