#include "mcoref/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mcoref {

using nlohmann::json;

std::vector<std::string> Document::mention_tokens(int mention_index) const {
  const Mention& m = mentions.at(mention_index);
  std::vector<std::string> out;
  for (int i = m.start; i < m.end && i < static_cast<int>(tokens.size()); ++i)
    out.push_back(tokens[i]);
  return out;
}

void SynthConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string("SynthConfig.") + name + " must be positive");
  };
  positive(num_entities, "num_entities");
  positive(num_documents, "num_documents");
  positive(regions_per_image, "regions_per_image");
  positive(mentions_per_document, "mentions_per_document");
  positive(d_o, "d_o");
  positive(d_v, "d_v");
  positive(d_w, "d_w");
  if (mentions_per_document < 2)
    throw std::invalid_argument("SynthConfig.mentions_per_document must be >= 2");
  auto rate = [](double v, const char* name) {
    if (v < 0.0 || v > 1.0)
      throw std::invalid_argument(std::string("SynthConfig.") + name + " must lie in [0,1]");
  };
  rate(distractor_rate, "distractor_rate");
  rate(feature_noise, "feature_noise");
  rate(trace_noise, "trace_noise");
  rate(pronoun_rate, "pronoun_rate");
}

bool operator==(const Region& a, const Region& b) {
  return a.box == b.box && a.category_embedding == b.category_embedding &&
         a.visual_features == b.visual_features;
}

bool operator==(const Mention& a, const Mention& b) {
  return a.start == b.start && a.end == b.end && a.is_pronoun == b.is_pronoun &&
         a.trace == b.trace;
}

bool operator==(const Document& a, const Document& b) {
  return a.id == b.id && a.tokens == b.tokens && a.regions == b.regions &&
         a.mentions == b.mentions && a.gold_chains == b.gold_chains &&
         a.gold_boxes == b.gold_boxes;
}

namespace {

json box_to_json(const Box& b) { return json{b[0], b[1], b[2], b[3]}; }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::runtime_error("box must be [x1,y1,x2,y2]");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json doc_to_json(const Document& d) {
  json j;
  j["id"] = d.id;
  j["tokens"] = d.tokens;
  json regions = json::array();
  for (const Region& r : d.regions) {
    regions.push_back(json{{"box", box_to_json(r.box)},
                           {"category_embedding", r.category_embedding},
                           {"visual_features", r.visual_features}});
  }
  j["regions"] = std::move(regions);
  json mentions = json::array();
  for (const Mention& m : d.mentions) {
    json jm{{"span", json{m.start, m.end}}, {"is_pronoun", m.is_pronoun}};
    if (m.trace) {
      const TraceVector& t = *m.trace;
      jm["trace"] = json{t[0], t[1], t[2], t[3], t[4]};
    } else {
      jm["trace"] = nullptr;
    }
    mentions.push_back(std::move(jm));
  }
  j["mentions"] = std::move(mentions);
  if (d.gold_chains) j["gold_chains"] = *d.gold_chains;
  if (d.gold_boxes) {
    json gb = json::object();
    for (const auto& [idx, boxes] : *d.gold_boxes) {
      json arr = json::array();
      for (const Box& b : boxes) arr.push_back(box_to_json(b));
      gb[std::to_string(idx)] = std::move(arr);
    }
    j["gold_boxes"] = std::move(gb);
  }
  return j;
}

Document doc_from_json(const json& j) {
  Document d;
  d.id = j.at("id").get<std::string>();
  d.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const json& jr : j.at("regions")) {
    Region r;
    r.box = box_from_json(jr.at("box"));
    r.category_embedding = jr.at("category_embedding").get<std::vector<double>>();
    r.visual_features = jr.at("visual_features").get<std::vector<double>>();
    d.regions.push_back(std::move(r));
  }
  for (const json& jm : j.at("mentions")) {
    Mention m;
    const json& span = jm.at("span");
    if (!span.is_array() || span.size() != 2) throw std::runtime_error("mention span must be [start,end]");
    m.start = span[0].get<int>();
    m.end = span[1].get<int>();
    m.is_pronoun = jm.at("is_pronoun").get<bool>();
    const json& tr = jm.at("trace");
    if (!tr.is_null()) {
      if (!tr.is_array() || tr.size() != 5) throw std::runtime_error("trace must be 5 floats or null");
      m.trace = TraceVector{tr[0].get<double>(), tr[1].get<double>(), tr[2].get<double>(),
                            tr[3].get<double>(), tr[4].get<double>()};
    }
    d.mentions.push_back(std::move(m));
  }
  if (j.contains("gold_chains"))
    d.gold_chains = j.at("gold_chains").get<std::vector<std::vector<int>>>();
  if (j.contains("gold_boxes")) {
    std::map<int, std::vector<Box>> gb;
    for (const auto& [key, val] : j.at("gold_boxes").items()) {
      std::vector<Box> boxes;
      for (const json& jb : val) boxes.push_back(box_from_json(jb));
      gb[std::stoi(key)] = std::move(boxes);
    }
    d.gold_boxes = std::move(gb);
  }
  return d;
}

}  // namespace

std::string document_to_json(const Document& doc) { return doc_to_json(doc).dump(); }

Document document_from_json(const std::string& line) {
  return doc_from_json(json::parse(line));
}

std::vector<Document> load_corpus(const std::string& path, const CorpusConfig& config) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<Document> docs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Document d;
    try {
      d = document_from_json(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": parse error: " + e.what());
    }
    std::vector<std::string> violations = validate_document(d, config);
    if (!violations.empty()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": validation error: " + violations.front());
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

void save_corpus(const std::vector<Document>& docs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const Document& d : docs) out << document_to_json(d) << "\n";
  if (!out) throw std::runtime_error("I/O error writing corpus file: " + path);
}

std::optional<TraceVector> trace_to_vector(
    const std::vector<std::array<double, 3>>& points) {
  if (points.empty()) return std::nullopt;
  double xmin = points[0][0], xmax = points[0][0];
  double ymin = points[0][1], ymax = points[0][1];
  for (const auto& p : points) {
    xmin = std::min(xmin, p[0]);
    xmax = std::max(xmax, p[0]);
    ymin = std::min(ymin, p[1]);
    ymax = std::max(ymax, p[1]);
  }
  return TraceVector{xmin, xmax, ymin, ymax, (xmax - xmin) * (ymax - ymin)};
}

std::vector<std::string> validate_document(const Document& doc, const CorpusConfig& config) {
  std::vector<std::string> out;
  auto add = [&out, &doc](const std::string& msg) { out.push_back("doc '" + doc.id + "': " + msg); };

  if (doc.regions.empty()) add("regions: must be nonempty");
  for (size_t r = 0; r < doc.regions.size(); ++r) {
    const Region& reg = doc.regions[r];
    const std::string at = "regions[" + std::to_string(r) + "]";
    if (!(reg.box[0] < reg.box[2])) add(at + ".box: requires x1 < x2");
    if (!(reg.box[1] < reg.box[3])) add(at + ".box: requires y1 < y2");
    for (double v : reg.box)
      if (v < 0.0 || v > 1.0) {
        add(at + ".box: coordinates must lie in [0,1]");
        break;
      }
    if (static_cast<int>(reg.category_embedding.size()) != config.d_o)
      add(at + ".category_embedding: dimension " + std::to_string(reg.category_embedding.size()) +
          " != d_o " + std::to_string(config.d_o));
    if (static_cast<int>(reg.visual_features.size()) != config.d_v)
      add(at + ".visual_features: dimension " + std::to_string(reg.visual_features.size()) +
          " != d_v " + std::to_string(config.d_v));
  }

  const int n_tokens = static_cast<int>(doc.tokens.size());
  for (size_t m = 0; m < doc.mentions.size(); ++m) {
    const Mention& men = doc.mentions[m];
    const std::string at = "mentions[" + std::to_string(m) + "]";
    if (!(0 <= men.start && men.start < men.end && men.end <= n_tokens))
      add(at + ".span: requires 0 <= start < end <= token count");
    if (men.trace) {
      const TraceVector& t = *men.trace;
      if (!(t[0] <= t[1])) add(at + ".trace: requires x_min <= x_max");
      if (!(t[2] <= t[3])) add(at + ".trace: requires y_min <= y_max");
      if (t[4] < 0.0) add(at + ".trace: requires area >= 0");
    }
  }

  const int n_mentions = static_cast<int>(doc.mentions.size());
  if (doc.gold_chains) {
    std::vector<bool> seen(n_mentions, false);
    for (size_t c = 0; c < doc.gold_chains->size(); ++c) {
      for (int idx : (*doc.gold_chains)[c]) {
        const std::string at = "gold_chains[" + std::to_string(c) + "]";
        if (idx < 0 || idx >= n_mentions) {
          add(at + ": mention index " + std::to_string(idx) + " out of range");
          continue;
        }
        if (seen[idx]) add(at + ": mention index " + std::to_string(idx) + " repeated across chains");
        seen[idx] = true;
      }
    }
  }
  if (doc.gold_boxes) {
    for (const auto& [idx, boxes] : *doc.gold_boxes) {
      const std::string at = "gold_boxes[" + std::to_string(idx) + "]";
      if (idx < 0 || idx >= n_mentions) add(at + ": mention index out of range");
      if (boxes.empty()) add(at + ": must list at least one box");
      for (const Box& b : boxes) {
        if (!(b[0] < b[2] && b[1] < b[3])) add(at + ": box corners out of order");
      }
    }
  }
  return out;
}

}  // namespace mcoref
