#pragma once

#include <map>
#include <string>
#include <vector>

#include "mcoref/corpus.hpp"

namespace mcoref {

using Partition = std::vector<std::vector<int>>;

struct PRF1 {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

struct GroundingAccuracy {
  double noun_phrases = 0.0;
  double pronouns = 0.0;
  double overall = 0.0;
};

struct MetricReport {
  PRF1 muc;
  PRF1 blanc;
  GroundingAccuracy grounding;

  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

// Link counts, accumulable across documents for corpus-level scores.
struct MucCounts {
  double recall_num = 0, recall_den = 0, precision_num = 0, precision_den = 0;
  void add(const MucCounts& o);
};
struct BlancCounts {
  double ck = 0, cr = 0, c_both = 0, nk = 0, nr = 0, n_both = 0;
  void add(const BlancCounts& o);
};
struct GroundingCounts {
  double np_correct = 0, np_total = 0, pr_correct = 0, pr_total = 0;
  void add(const GroundingCounts& o);
};

MucCounts muc_counts(const Partition& gold, const Partition& pred);
BlancCounts blanc_counts(const Partition& gold, const Partition& pred);
GroundingCounts grounding_counts(const std::map<int, Box>& predictions,
                                 const std::map<int, std::vector<Box>>& gold,
                                 const std::vector<bool>& pronoun_flags);

PRF1 muc_from_counts(const MucCounts& c);
PRF1 blanc_from_counts(const BlancCounts& c);
GroundingAccuracy grounding_from_counts(const GroundingCounts& c);

// Both partitions must cover the same mention universe (the same index set,
// each index exactly once); size-1 chains contribute nothing to either sum.
PRF1 muc(const Partition& gold, const Partition& pred);

// Link-class averaged precision/recall; requires a universe of >= 2 mentions.
PRF1 blanc(const Partition& gold, const Partition& pred);

// Intersection over union. Zero-area boxes give 0 unless bit-identical.
double iou(const Box& a, const Box& b);

// Any-box protocol at IoU > 0.5 (strict). Mentions without a prediction
// count as incorrect; only mentions with gold boxes are evaluated.
GroundingAccuracy grounding_accuracy(const std::map<int, Box>& predictions,
                                     const std::map<int, std::vector<Box>>& gold,
                                     const std::vector<bool>& pronoun_flags);

double harmonic_mean(double precision, double recall);

}  // namespace mcoref
