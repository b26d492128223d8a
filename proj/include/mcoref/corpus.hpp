#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcoref {

// Corner-format box, normalized to [0,1]: (x1, y1, x2, y2) with x1 < x2.
using Box = std::array<double, 4>;

// Mouse-trace summary: (x_min, x_max, y_min, y_max, area).
using TraceVector = std::array<double, 5>;

// Detector-style proposal.
struct Region {
  Box box{};
  std::vector<double> category_embedding;
  std::vector<double> visual_features;
};

// Half-open token span [start, end). A mention is either a noun phrase or a
// pronoun; the trace, when present, aggregates the pointer trajectory over
// the mention's words.
struct Mention {
  int start = 0;
  int end = 0;
  bool is_pronoun = false;
  std::optional<TraceVector> trace;

  int length() const { return end - start; }
};

struct Document {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<Region> regions;
  std::vector<Mention> mentions;
  std::optional<std::vector<std::vector<int>>> gold_chains;
  std::optional<std::map<int, std::vector<Box>>> gold_boxes;

  std::vector<std::string> mention_tokens(int mention_index) const;
};

struct CorpusConfig {
  int d_o = 16;
  int d_v = 32;
  std::string embedding_provider_id;
  bool trace_enabled = true;
};

// Knobs for the synthetic corpus generator.
struct SynthConfig {
  int num_entities = 5;
  int num_documents = 100;
  int regions_per_image = 10;
  int mentions_per_document = 6;
  double distractor_rate = 0.5;
  double feature_noise = 0.05;
  double trace_noise = 0.05;
  double pronoun_rate = 0.25;
  std::uint64_t seed = 0;
  int d_o = 16;
  int d_v = 32;
  int d_w = 32;

  void validate() const;  // throws std::invalid_argument on bad values
};

bool operator==(const Region& a, const Region& b);
bool operator==(const Mention& a, const Mention& b);
bool operator==(const Document& a, const Document& b);

// Line-delimited records, one document per line. Malformed records raise
// std::runtime_error naming the line; documents failing validation against
// `config` raise as well.
std::vector<Document> load_corpus(const std::string& path, const CorpusConfig& config);
void save_corpus(const std::vector<Document>& docs, const std::string& path);

std::string document_to_json(const Document& doc);
Document document_from_json(const std::string& line);

// (min x, max x, min y, max y, area). Empty input returns nullopt, the
// absent-trace marker.
std::optional<TraceVector> trace_to_vector(
    const std::vector<std::array<double, 3>>& points);

// Empty result iff every invariant holds; each entry names the offending
// field and the violated constraint.
std::vector<std::string> validate_document(const Document& doc, const CorpusConfig& config);

}  // namespace mcoref
