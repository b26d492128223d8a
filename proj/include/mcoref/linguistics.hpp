#pragma once

#include <Eigen/Dense>

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mcoref/corpus.hpp"

namespace mcoref {

enum class Number { kSingular, kPlural, kUnknown };

// Closed pronoun classes, keyed by grammatical number. Tokens are lowercase.
struct PronounLexicon {
  std::set<std::string> singular;
  std::set<std::string> plural;
  std::set<std::string> unknown_number;

  static PronounLexicon defaults();
  static PronounLexicon load(const std::string& path);
  void save(const std::string& path) const;

  bool contains(const std::string& lowercase_token) const;
  std::optional<Number> number_of(const std::string& lowercase_token) const;
};

// Symmetric mention-pair prior in [0,1], diagonal pinned to 1.
struct PriorTable {
  Eigen::MatrixXd values;

  double operator()(int i, int j) const { return values(i, j); }
  int size() const { return static_cast<int>(values.rows()); }
};

struct RuleConfig {
  double distance_scale = 5.0;   // sigma, in mention ranks
  double last_word_weight = 0.8;
  double overlap_weight = 0.6;
  int pronoun_window = 10;       // mentions
};

bool is_pronoun_token(const std::string& token, const PronounLexicon& lexicon);

// Default blocklist of abstract narrative phrases that never ground.
std::vector<std::vector<std::string>> default_abstract_blocklist();
std::vector<std::vector<std::string>> load_blocklist(const std::string& path);

// Drops mentions whose lowercased token sequence exactly matches a blocklist
// entry; gold chains and boxes are re-indexed to the surviving mentions.
Document filter_abstract_mentions(const Document& doc,
                                  const std::vector<std::vector<std::string>>& blocklist);

// Rule-derived coreference prior q(m, m'):
//   (a) exact match of non-pronoun mentions            -> 1
//   (b) pronoun + nearest preceding compatible noun    -> 1
//   (d) last-word match                                -> w_last * exp(-delta/sigma)
//   (e) word overlap (articles excluded)               -> w_olap * exp(-delta/sigma)
// Distance (c) enters through the exponential decay; rules combine by max.
PriorTable build_prior_table(const Document& doc, const RuleConfig& cfg,
                             const PronounLexicon& lexicon);

// Post-inference filter: drops pronoun-pronoun links with no shared noun
// anchor in the label graph and links with incompatible grammatical number.
std::set<std::pair<int, int>> eliminate_implausible(
    const std::set<std::pair<int, int>>& labels, const Document& doc,
    const PronounLexicon& lexicon);

// Grammatical number of a mention: pronouns resolve through the lexicon,
// noun phrases are unresolvable.
Number mention_number(const Document& doc, int mention_index, const PronounLexicon& lexicon);

}  // namespace mcoref
