#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "mcoref/corpus.hpp"
#include "mcoref/embeddings.hpp"
#include "mcoref/rng.hpp"

namespace mcoref {

// Latent generation record for one document, kept out of the dataset files
// so oracle tests can check recovered structure against the truth.
struct DocumentLatent {
  std::vector<int> mention_entities;  // per mention, entity id
  std::vector<int> region_entities;   // per region, entity id or -1 for noise
};

struct SynthManifest {
  std::vector<DocumentLatent> documents;
  std::vector<Eigen::VectorXd> visual_prototypes;    // per entity, d_v
  std::vector<Eigen::VectorXd> category_prototypes;  // per entity, d_o
  std::vector<bool> entity_plural;

  void save(const std::string& path) const;
  static SynthManifest load(const std::string& path);

  // Region index generated by `entity` in document `doc`, or -1.
  int entity_region(int doc, int entity) const;
};

struct SynthCorpus {
  std::vector<Document> documents;
  SynthManifest manifest;
  EmbeddingProvider embeddings{0};
  CorpusConfig corpus_config;
};

// Pure function of the config, seed included: two calls yield byte-identical
// corpora. Every document carries gold chains and per-mention gold boxes.
SynthCorpus generate_synthetic(const SynthConfig& cfg);

}  // namespace mcoref
