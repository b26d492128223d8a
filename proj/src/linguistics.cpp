#include "mcoref/linguistics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mcoref/embeddings.hpp"

namespace mcoref {

namespace {

const std::set<std::string> kArticles = {"a", "an", "the"};

std::vector<std::string> lowered_tokens(const Document& doc, int mention_index) {
  std::vector<std::string> toks = doc.mention_tokens(mention_index);
  for (std::string& t : toks) t = to_lower(t);
  return toks;
}

}  // namespace

PronounLexicon PronounLexicon::defaults() {
  PronounLexicon lex;
  lex.singular = {"it", "its", "he", "him", "she", "her", "this", "that"};
  lex.plural = {"them", "they", "their", "those"};
  lex.unknown_number = {"which", "who"};
  return lex;
}

PronounLexicon PronounLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pronoun lexicon: " + path);
  PronounLexicon lex;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string token, number;
    ss >> token >> number;
    token = to_lower(token);
    if (number == "singular") lex.singular.insert(token);
    else if (number == "plural") lex.plural.insert(token);
    else if (number == "unknown" || number.empty()) lex.unknown_number.insert(token);
    else
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": number must be singular|plural|unknown");
  }
  if (lex.singular.empty() && lex.plural.empty() && lex.unknown_number.empty())
    throw std::runtime_error("pronoun lexicon is empty: " + path);
  return lex;
}

void PronounLexicon::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write pronoun lexicon: " + path);
  for (const auto& t : singular) out << t << " singular\n";
  for (const auto& t : plural) out << t << " plural\n";
  for (const auto& t : unknown_number) out << t << " unknown\n";
}

bool PronounLexicon::contains(const std::string& t) const {
  return singular.count(t) || plural.count(t) || unknown_number.count(t);
}

std::optional<Number> PronounLexicon::number_of(const std::string& t) const {
  if (singular.count(t)) return Number::kSingular;
  if (plural.count(t)) return Number::kPlural;
  if (unknown_number.count(t)) return Number::kUnknown;
  return std::nullopt;
}

bool is_pronoun_token(const std::string& token, const PronounLexicon& lexicon) {
  return lexicon.contains(to_lower(token));
}

std::vector<std::vector<std::string>> default_abstract_blocklist() {
  return {{"in", "this", "image"},   {"in", "the", "front"}, {"in", "the", "background"},
          {"we", "can", "see"},      {"i", "can", "see"},    {"in", "this", "picture"}};
}

std::vector<std::vector<std::string>> load_blocklist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open blocklist file: " + path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<std::string> phrase;
    std::string tok;
    while (ss >> tok) phrase.push_back(to_lower(tok));
    if (!phrase.empty()) out.push_back(std::move(phrase));
  }
  return out;
}

Document filter_abstract_mentions(const Document& doc,
                                  const std::vector<std::vector<std::string>>& blocklist) {
  std::vector<int> keep;
  for (size_t m = 0; m < doc.mentions.size(); ++m) {
    std::vector<std::string> toks = lowered_tokens(doc, static_cast<int>(m));
    bool blocked = std::any_of(blocklist.begin(), blocklist.end(),
                               [&toks](const auto& phrase) { return phrase == toks; });
    if (!blocked) keep.push_back(static_cast<int>(m));
  }
  if (keep.size() == doc.mentions.size()) return doc;

  std::vector<int> remap(doc.mentions.size(), -1);
  for (size_t i = 0; i < keep.size(); ++i) remap[keep[i]] = static_cast<int>(i);

  Document out = doc;
  out.mentions.clear();
  for (int idx : keep) out.mentions.push_back(doc.mentions[idx]);
  if (doc.gold_chains) {
    std::vector<std::vector<int>> chains;
    for (const auto& chain : *doc.gold_chains) {
      std::vector<int> mapped;
      for (int idx : chain)
        if (idx >= 0 && idx < static_cast<int>(remap.size()) && remap[idx] >= 0)
          mapped.push_back(remap[idx]);
      if (!mapped.empty()) chains.push_back(std::move(mapped));
    }
    out.gold_chains = std::move(chains);
  }
  if (doc.gold_boxes) {
    std::map<int, std::vector<Box>> boxes;
    for (const auto& [idx, bs] : *doc.gold_boxes)
      if (idx >= 0 && idx < static_cast<int>(remap.size()) && remap[idx] >= 0)
        boxes[remap[idx]] = bs;
    out.gold_boxes = std::move(boxes);
  }
  return out;
}

Number mention_number(const Document& doc, int mention_index, const PronounLexicon& lexicon) {
  const Mention& m = doc.mentions.at(mention_index);
  if (!m.is_pronoun || m.length() != 1) return Number::kUnknown;
  auto n = lexicon.number_of(to_lower(doc.tokens.at(m.start)));
  return n.value_or(Number::kUnknown);
}

PriorTable build_prior_table(const Document& doc, const RuleConfig& cfg,
                             const PronounLexicon& lexicon) {
  const int n = static_cast<int>(doc.mentions.size());
  PriorTable table;
  table.values = Eigen::MatrixXd::Zero(n, n);
  table.values.diagonal().setOnes();

  std::vector<std::vector<std::string>> toks(n);
  std::vector<std::set<std::string>> content(n);
  for (int i = 0; i < n; ++i) {
    toks[i] = lowered_tokens(doc, i);
    for (const std::string& t : toks[i])
      if (!kArticles.count(t)) content[i].insert(t);
  }

  // rank i precedes rank j; mentions are ordered by span start
  for (int j = 1; j < n; ++j) {
    const bool j_pronoun = doc.mentions[j].is_pronoun;
    // rule (b): the single nearest preceding, number-compatible noun
    int antecedent = -1;
    if (j_pronoun) {
      Number jn = mention_number(doc, j, lexicon);
      for (int i = j - 1; i >= 0 && j - i <= cfg.pronoun_window; --i) {
        if (doc.mentions[i].is_pronoun) continue;
        Number in = mention_number(doc, i, lexicon);
        bool compatible = jn == Number::kUnknown || in == Number::kUnknown || jn == in;
        if (compatible) {
          antecedent = i;
          break;
        }
      }
    }
    for (int i = 0; i < j; ++i) {
      const bool i_pronoun = doc.mentions[i].is_pronoun;
      double q = 0.0;
      const double decay = std::exp(-static_cast<double>(j - i) / cfg.distance_scale);
      if (!i_pronoun && !j_pronoun) {
        if (toks[i] == toks[j]) q = std::max(q, 1.0);  // (a)
        if (!toks[i].empty() && !toks[j].empty() && toks[i].back() == toks[j].back())
          q = std::max(q, cfg.last_word_weight * decay);  // (d)
        bool overlap = std::any_of(content[i].begin(), content[i].end(),
                                   [&](const std::string& t) { return content[j].count(t) > 0; });
        if (overlap) q = std::max(q, cfg.overlap_weight * decay);  // (e)
      }
      if (j_pronoun && i == antecedent) q = 1.0;  // (b)
      table.values(i, j) = q;
      table.values(j, i) = q;
    }
  }
  return table;
}

std::set<std::pair<int, int>> eliminate_implausible(
    const std::set<std::pair<int, int>>& labels, const Document& doc,
    const PronounLexicon& lexicon) {
  const int n = static_cast<int>(doc.mentions.size());
  auto number = [&](int i) { return mention_number(doc, i, lexicon); };

  // number filter first so the anchor check below sees the final graph
  std::set<std::pair<int, int>> compatible;
  for (const auto& [i, j] : labels) {
    Number ni = number(i), nj = number(j);
    bool clash = ni != Number::kUnknown && nj != Number::kUnknown && ni != nj;
    if (!clash) compatible.insert({i, j});
  }

  std::vector<std::set<int>> adj(n);
  for (const auto& [i, j] : compatible) {
    adj[i].insert(j);
    adj[j].insert(i);
  }

  std::set<std::pair<int, int>> out;
  for (const auto& [i, j] : compatible) {
    if (doc.mentions[i].is_pronoun && doc.mentions[j].is_pronoun) {
      bool anchored = false;
      for (int k : adj[i]) {
        if (k != j && !doc.mentions[k].is_pronoun && adj[j].count(k)) {
          anchored = true;
          break;
        }
      }
      if (!anchored) continue;
    }
    out.insert({i, j});
  }
  return out;
}

}  // namespace mcoref
