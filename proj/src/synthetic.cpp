#include "mcoref/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "mcoref/linguistics.hpp"

namespace mcoref {

using nlohmann::json;

namespace {

Eigen::VectorXd random_unit(DeterministicRng& rng, int dim) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  double n = v.norm();
  return n > 0 ? Eigen::VectorXd(v / n) : v;
}

Eigen::VectorXd random_gauss(DeterministicRng& rng, int dim, double scale) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = scale * rng.normal();
  return v;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Box random_box(DeterministicRng& rng) {
  double x1 = rng.uniform(0.0, 0.7);
  double y1 = rng.uniform(0.0, 0.7);
  double w = rng.uniform(0.15, 0.3);
  double h = rng.uniform(0.15, 0.3);
  return Box{x1, y1, std::min(1.0, x1 + w), std::min(1.0, y1 + h)};
}

double box_iou(const Box& a, const Box& b) {
  const double ix = std::min(a[2], b[2]) - std::max(a[0], b[0]);
  const double iy = std::min(a[3], b[3]) - std::max(a[1], b[1]);
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double area = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  return area > 0 ? inter / area : 0.0;
}

// Detector proposals are NMS-filtered; keep generated boxes from piling up.
// The overlap bound relaxes if the sampler runs out of room.
Box place_box(DeterministicRng& rng, const std::vector<Box>& placed) {
  double max_iou = 0.2;
  for (int attempt = 1;; ++attempt) {
    Box candidate = random_box(rng);
    bool ok = true;
    for (const Box& b : placed)
      if (box_iou(candidate, b) > max_iou) {
        ok = false;
        break;
      }
    if (ok) return candidate;
    if (attempt % 25 == 0) max_iou += 0.1;
  }
}

TraceVector perturbed_trace(const Box& b, double noise, DeterministicRng& rng) {
  double x1 = b[0] + noise * 0.1 * rng.normal();
  double x2 = b[2] + noise * 0.1 * rng.normal();
  double y1 = b[1] + noise * 0.1 * rng.normal();
  double y2 = b[3] + noise * 0.1 * rng.normal();
  x1 = std::clamp(x1, 0.0, 1.0);
  x2 = std::clamp(x2, 0.0, 1.0);
  y1 = std::clamp(y1, 0.0, 1.0);
  y2 = std::clamp(y2, 0.0, 1.0);
  if (x1 > x2) std::swap(x1, x2);
  if (y1 > y2) std::swap(y1, y2);
  return TraceVector{x1, x2, y1, y2, (x2 - x1) * (y2 - y1)};
}

const std::vector<std::string> kFillers = {"is", "near", "and", "with", "standing", "by", "on"};

// Hard distractors are other instances of a known entity category, not exact
// copies: a fixed instance-variation offset keeps them identifiable as their
// category while separable from the mentioned instance.
constexpr double kInstanceVariation = 0.35;

}  // namespace

SynthCorpus generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  DeterministicRng rng(cfg.seed);

  const int E = cfg.num_entities;
  SynthManifest manifest;
  manifest.visual_prototypes.reserve(E);
  manifest.category_prototypes.reserve(E);
  std::vector<Eigen::VectorXd> word_prototypes;
  std::vector<std::vector<std::string>> entity_vocab(E);
  // detector categories are word embeddings of the category label, so the
  // category prototype is the entity's word prototype carried into d_o (a
  // fixed seeded projection when the dimensions differ)
  Eigen::MatrixXd word_to_category;
  if (cfg.d_o != cfg.d_w) {
    word_to_category.resize(cfg.d_o, cfg.d_w);
    for (int i = 0; i < cfg.d_o; ++i)
      for (int j = 0; j < cfg.d_w; ++j)
        word_to_category(i, j) = rng.normal() / std::sqrt(static_cast<double>(cfg.d_w));
  }
  auto word_to_category_proj = [&](const Eigen::VectorXd& w) {
    if (cfg.d_o == cfg.d_w) return w;
    Eigen::VectorXd projected = word_to_category * w;
    double n = projected.norm();
    return n > 0 ? Eigen::VectorXd(projected / n) : projected;
  };
  for (int e = 0; e < E; ++e) {
    manifest.visual_prototypes.push_back(random_unit(rng, cfg.d_v));
    word_prototypes.push_back(random_unit(rng, cfg.d_w));
    manifest.category_prototypes.push_back(word_to_category_proj(word_prototypes.back()));
    manifest.entity_plural.push_back(rng.uniform() < 0.2);
    for (int k = 0; k < 3; ++k)
      entity_vocab[e].push_back("obj" + std::to_string(e) + static_cast<char>('a' + k));
  }
  // background categories: detector proposals for scene objects that no
  // mention refers to; never share a prototype with a foreground entity
  const int n_background = std::max(2 * E, 8);
  std::vector<Eigen::VectorXd> bg_visual, bg_category;
  for (int b = 0; b < n_background; ++b) {
    bg_visual.push_back(random_unit(rng, cfg.d_v));
    bg_category.push_back(word_to_category_proj(random_unit(rng, cfg.d_w)));
  }

  // vocabulary embeddings: entity nouns cluster around the entity word
  // prototype; pronouns, articles and fillers get unrelated vectors
  EmbeddingProvider embeddings(cfg.d_w);
  for (int e = 0; e < E; ++e)
    for (const std::string& tok : entity_vocab[e])
      embeddings.insert(tok, word_prototypes[e] + random_gauss(rng, cfg.d_w, 0.15));
  PronounLexicon lexicon = PronounLexicon::defaults();
  auto insert_vocab = [&](const std::set<std::string>& words) {
    for (const std::string& w : words) embeddings.insert(w, random_gauss(rng, cfg.d_w, 0.5));
  };
  insert_vocab(lexicon.singular);
  insert_vocab(lexicon.plural);
  insert_vocab(lexicon.unknown_number);
  embeddings.insert("the", random_gauss(rng, cfg.d_w, 0.5));
  for (const std::string& f : kFillers) embeddings.insert(f, random_gauss(rng, cfg.d_w, 0.5));

  const std::vector<std::string> singular_pronouns(lexicon.singular.begin(), lexicon.singular.end());
  const std::vector<std::string> plural_pronouns(lexicon.plural.begin(), lexicon.plural.end());

  SynthCorpus out;
  out.embeddings = embeddings;
  out.corpus_config = CorpusConfig{cfg.d_o, cfg.d_v, "synthetic", true};

  const int m_per_doc = cfg.mentions_per_document;
  // active entities: strictly fewer than the mention count so at least one
  // chain has two or more mentions
  const int k_cap = std::min(E, m_per_doc - 1);
  const int k_min = std::min(2, k_cap);
  if (cfg.regions_per_image < k_min)
    throw std::invalid_argument(
        "SynthConfig: regions_per_image smaller than the number of entity instances placed");

  for (int di = 0; di < cfg.num_documents; ++di) {
    Document doc;
    doc.id = "synth-" + std::to_string(di);
    DocumentLatent latent;

    int k = rng.uniform_int(k_min, std::min(k_cap, cfg.regions_per_image));
    std::vector<int> pool(E);
    for (int e = 0; e < E; ++e) pool[e] = e;
    rng.shuffle(pool);
    std::vector<int> active(pool.begin(), pool.begin() + k);

    std::vector<Box> placed;
    std::vector<Box> entity_box(E);
    for (int e : active) {
      entity_box[e] = place_box(rng, placed);
      placed.push_back(entity_box[e]);
    }

    // one region per active entity, then distractors, then shuffled
    struct ProtoRegion {
      Region region;
      int entity;
    };
    std::vector<ProtoRegion> regions;
    for (int e : active) {
      Region r;
      r.box = entity_box[e];
      r.category_embedding =
          to_std(manifest.category_prototypes[e] + random_gauss(rng, cfg.d_o, cfg.feature_noise));
      r.visual_features =
          to_std(manifest.visual_prototypes[e] + random_gauss(rng, cfg.d_v, cfg.feature_noise));
      regions.push_back({std::move(r), e});
    }
    // distractors: with probability distractor_rate another instance of an
    // inactive foreground entity (confusable with the mentions), otherwise
    // an instance of a background category
    std::vector<int> inactive(pool.begin() + k, pool.end());
    for (int d = k; d < cfg.regions_per_image; ++d) {
      Region r;
      r.box = place_box(rng, placed);
      placed.push_back(r.box);
      int src = -1;
      if (!inactive.empty() && rng.uniform() < cfg.distractor_rate)
        src = inactive[rng.uniform_int(0, static_cast<int>(inactive.size()) - 1)];
      const int bg = src >= 0 ? -1 : rng.uniform_int(0, n_background - 1);
      const Eigen::VectorXd& cat_proto = src >= 0 ? manifest.category_prototypes[static_cast<size_t>(src)]
                                                  : bg_category[static_cast<size_t>(bg)];
      const Eigen::VectorXd& vis_proto = src >= 0 ? manifest.visual_prototypes[static_cast<size_t>(src)]
                                                  : bg_visual[static_cast<size_t>(bg)];
      r.category_embedding = to_std(cat_proto + random_gauss(rng, cfg.d_o, cfg.feature_noise));
      r.visual_features =
          to_std(vis_proto + random_unit(rng, cfg.d_v) * kInstanceVariation +
                 random_gauss(rng, cfg.d_v, cfg.feature_noise));
      regions.push_back({std::move(r), src});
    }
    rng.shuffle(regions);
    std::vector<int> region_of_entity(E, -1);
    for (size_t ri = 0; ri < regions.size(); ++ri) {
      doc.regions.push_back(regions[ri].region);
      latent.region_entities.push_back(regions[ri].entity);
      int e = regions[ri].entity;
      if (e >= 0 && std::find(active.begin(), active.end(), e) != active.end())
        region_of_entity[e] = static_cast<int>(ri);
    }

    // mention/entity assignment; consecutive mentions stay on the same
    // entity half the time, mirroring how narratives revisit a referent
    // before moving on. The first mention of an entity is a noun so pronouns
    // always have an antecedent.
    std::vector<int> mention_entity(m_per_doc);
    mention_entity[0] = active[rng.uniform_int(0, k - 1)];
    for (int mi = 1; mi < m_per_doc; ++mi)
      mention_entity[mi] = (rng.uniform() < 0.5) ? mention_entity[mi - 1]
                                                 : active[rng.uniform_int(0, k - 1)];
    std::vector<bool> entity_seen(E, false);
    for (int mi = 0; mi < m_per_doc; ++mi) {
      int e = mention_entity[mi];
      bool pronoun = entity_seen[e] && rng.uniform() < cfg.pronoun_rate;
      entity_seen[e] = true;

      if (rng.uniform() < 0.5) {  // leading filler
        doc.tokens.push_back(kFillers[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(kFillers.size()) - 1))]);
      }
      Mention m;
      m.start = static_cast<int>(doc.tokens.size());
      if (pronoun) {
        const auto& pros = manifest.entity_plural[e] ? plural_pronouns : singular_pronouns;
        doc.tokens.push_back(pros[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pros.size()) - 1))]);
        m.is_pronoun = true;
      } else {
        if (rng.uniform() < 0.5) doc.tokens.push_back("the");
        const auto& vocab = entity_vocab[e];
        doc.tokens.push_back(vocab[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(vocab.size()) - 1))]);
      }
      m.end = static_cast<int>(doc.tokens.size());
      m.trace = perturbed_trace(entity_box[e], cfg.trace_noise, rng);
      doc.mentions.push_back(m);
      latent.mention_entities.push_back(e);
    }

    std::vector<std::vector<int>> chains;
    std::map<int, std::vector<Box>> gold_boxes;
    std::vector<int> chain_of(E, -1);
    for (int mi = 0; mi < m_per_doc; ++mi) {
      int e = mention_entity[mi];
      if (chain_of[e] < 0) {
        chain_of[e] = static_cast<int>(chains.size());
        chains.emplace_back();
      }
      chains[chain_of[e]].push_back(mi);
      gold_boxes[mi] = {doc.regions[region_of_entity[e]].box};
    }
    doc.gold_chains = std::move(chains);
    doc.gold_boxes = std::move(gold_boxes);

    manifest.documents.push_back(std::move(latent));
    out.documents.push_back(std::move(doc));
  }
  out.manifest = std::move(manifest);
  return out;
}

int SynthManifest::entity_region(int doc, int entity) const {
  const auto& regions = documents.at(doc).region_entities;
  for (size_t r = 0; r < regions.size(); ++r)
    if (regions[r] == entity) return static_cast<int>(r);
  return -1;
}

void SynthManifest::save(const std::string& path) const {
  json j;
  json docs = json::array();
  for (const auto& d : documents)
    docs.push_back(json{{"mention_entities", d.mention_entities},
                        {"region_entities", d.region_entities}});
  j["documents"] = std::move(docs);
  auto dump_protos = [](const std::vector<Eigen::VectorXd>& ps) {
    json arr = json::array();
    for (const auto& p : ps) arr.push_back(std::vector<double>(p.data(), p.data() + p.size()));
    return arr;
  };
  j["visual_prototypes"] = dump_protos(visual_prototypes);
  j["category_prototypes"] = dump_protos(category_prototypes);
  j["entity_plural"] = entity_plural;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

SynthManifest SynthManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  json j = json::parse(in);
  SynthManifest m;
  for (const auto& jd : j.at("documents")) {
    DocumentLatent d;
    d.mention_entities = jd.at("mention_entities").get<std::vector<int>>();
    d.region_entities = jd.at("region_entities").get<std::vector<int>>();
    m.documents.push_back(std::move(d));
  }
  auto read_protos = [](const json& arr) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& jp : arr) {
      auto v = jp.get<std::vector<double>>();
      out.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    return out;
  };
  m.visual_prototypes = read_protos(j.at("visual_prototypes"));
  m.category_prototypes = read_protos(j.at("category_prototypes"));
  m.entity_plural = j.at("entity_plural").get<std::vector<bool>>();
  return m;
}

}  // namespace mcoref
