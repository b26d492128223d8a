#pragma once

#include <Eigen/Dense>

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mcoref/corpus.hpp"
#include "mcoref/grounding.hpp"
#include "mcoref/linguistics.hpp"
#include "mcoref/metrics.hpp"

namespace mcoref {

struct InferenceConfig {
  double threshold = 0.5;  // tau in (0,1); fallback when no validation sweep ran
  bool apply_rule_filter = true;
};

// Partition of the document's mentions plus one region/box per mention.
struct ChainPrediction {
  Partition chains;
  std::map<int, Box> mention_boxes;
  std::map<int, int> mention_regions;

  std::string to_json(const std::string& doc_id) const;
};

// {(i, j) : i < j, f_ij > tau}
std::set<std::pair<int, int>> pairwise_labels(const Eigen::MatrixXd& f, double tau);

// Connected components of the pair graph; unlinked mentions become
// singletons; components are sorted by their smallest member.
Partition build_chains(const std::set<std::pair<int, int>>& pairs, int num_mentions);

// threshold -> (rule filter) -> connected components
Partition chains_from_compatibility(const Document& doc, const Eigen::MatrixXd& f,
                                    const InferenceConfig& cfg, const PronounLexicon& lexicon);

// encode -> grounding -> compatibility -> threshold -> (rule filter) ->
// chains; one argmax region per mention.
template <typename Scalar>
ChainPrediction predict(const Document& doc, const ModelStateT<Scalar>& state,
                        const InferenceConfig& cfg, const PronounLexicon& lexicon,
                        const EmbeddingProvider& provider) {
  if (doc.regions.empty()) throw std::invalid_argument("predict: document has no regions");
  DocumentForward<Scalar> fwd = run_document_forward(doc, state, provider);
  ChainPrediction out;
  out.chains = chains_from_compatibility(doc, fwd.compat.f.template cast<double>(), cfg, lexicon);
  for (int i = 0; i < static_cast<int>(doc.mentions.size()); ++i) {
    const int region = impute_region<Scalar>(fwd.scores.g.row(i).transpose());
    out.mention_regions[i] = region;
    out.mention_boxes[i] = doc.regions[static_cast<size_t>(region)].box;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus-level evaluation and the validation threshold sweep. Forward passes
// are cached so a sweep reuses one encoding per document.
// ---------------------------------------------------------------------------

struct DocumentEvalCache {
  const Document* doc = nullptr;
  Eigen::MatrixXd f;
  std::map<int, Box> boxes;  // argmax region box per mention
  std::vector<bool> pronoun_flags;
};

template <typename Scalar>
DocumentEvalCache make_eval_cache(const Document& doc, const ModelStateT<Scalar>& state,
                                  const EmbeddingProvider& provider) {
  DocumentForward<Scalar> fwd = run_document_forward(doc, state, provider);
  DocumentEvalCache cache;
  cache.doc = &doc;
  cache.f = fwd.compat.f.template cast<double>();
  for (int i = 0; i < static_cast<int>(doc.mentions.size()); ++i) {
    const int region = impute_region<Scalar>(fwd.scores.g.row(i).transpose());
    cache.boxes[i] = doc.regions[static_cast<size_t>(region)].box;
    cache.pronoun_flags.push_back(doc.mentions[static_cast<size_t>(i)].is_pronoun);
  }
  return cache;
}

template <typename Scalar>
std::vector<DocumentEvalCache> make_eval_caches(const std::vector<Document>& docs,
                                                const ModelStateT<Scalar>& state,
                                                const EmbeddingProvider& provider) {
  std::vector<DocumentEvalCache> out;
  out.reserve(docs.size());
  for (const Document& d : docs) out.push_back(make_eval_cache(d, state, provider));
  return out;
}

// Gold chains/boxes must be present on every document; the first offender is
// named. Metrics are corpus-level (link counts pooled across documents).
MetricReport evaluate_cached(const std::vector<DocumentEvalCache>& caches,
                             const InferenceConfig& cfg, const PronounLexicon& lexicon,
                             int* total_chains = nullptr);

struct ThresholdSweepPoint {
  double threshold = 0.0;
  MetricReport metrics;
  int total_chains = 0;
};

std::vector<double> default_threshold_grid();  // 0.05, 0.10, ..., 0.95

std::vector<ThresholdSweepPoint> sweep_thresholds(
    const std::vector<DocumentEvalCache>& caches, bool apply_rule_filter,
    const PronounLexicon& lexicon, const std::vector<double>& grid = default_threshold_grid());

// Highest MUC-F1; ties resolve to the lowest threshold.
const ThresholdSweepPoint& best_by_muc_f1(const std::vector<ThresholdSweepPoint>& points);

template <typename Scalar>
MetricReport evaluate_corpus(const std::vector<Document>& docs, const ModelStateT<Scalar>& state,
                             const InferenceConfig& cfg, const PronounLexicon& lexicon,
                             const EmbeddingProvider& provider) {
  return evaluate_cached(make_eval_caches(docs, state, provider), cfg, lexicon);
}

}  // namespace mcoref
