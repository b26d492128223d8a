#include "mcoref/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mcoref {

using nlohmann::json;

double harmonic_mean(double precision, double recall) {
  return (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

namespace {

// The mention universe is the index set itself; both partitions must carry
// exactly the same set, each index exactly once.
std::map<int, int> dense_universe(const Partition& gold, const Partition& pred) {
  auto collect = [](const Partition& p, const char* which) {
    std::map<int, int> seen;
    for (const auto& chain : p)
      for (int m : chain) {
        if (m < 0) throw std::invalid_argument("negative mention index in partition");
        if (++seen[m] > 1)
          throw std::invalid_argument(std::string(which) + ": mention repeated across chains");
      }
    return seen;
  };
  std::map<int, int> g = collect(gold, "gold");
  std::map<int, int> p = collect(pred, "pred");
  auto keys = [](const std::map<int, int>& m) {
    std::vector<int> k;
    for (const auto& [key, cnt] : m) k.push_back(key);
    return k;
  };
  if (keys(g) != keys(p))
    throw std::invalid_argument("partitions cover different mention universes");
  std::map<int, int> dense;
  int next = 0;
  for (const auto& [key, cnt] : g) dense[key] = next++;
  return dense;
}

std::vector<int> chain_ids(const Partition& p, const std::map<int, int>& dense) {
  std::vector<int> id(dense.size(), -1);
  for (size_t c = 0; c < p.size(); ++c)
    for (int m : p[c]) id[static_cast<size_t>(dense.at(m))] = static_cast<int>(c);
  return id;
}

// MUC one direction: sum over key chains of (|K| - #partitions by response).
double muc_side(const Partition& key, const std::map<int, int>& dense,
                const std::vector<int>& response_ids) {
  double num = 0, den = 0;
  for (const auto& chain : key) {
    if (chain.size() < 2) continue;
    std::vector<int> touched;
    for (int m : chain) touched.push_back(response_ids[static_cast<size_t>(dense.at(m))]);
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    num += static_cast<double>(chain.size()) - static_cast<double>(touched.size());
    den += static_cast<double>(chain.size()) - 1.0;
  }
  return den > 0 ? num / den : 0.0;
}

}  // namespace

void MucCounts::add(const MucCounts& o) {
  recall_num += o.recall_num;
  recall_den += o.recall_den;
  precision_num += o.precision_num;
  precision_den += o.precision_den;
}
void BlancCounts::add(const BlancCounts& o) {
  ck += o.ck;
  cr += o.cr;
  c_both += o.c_both;
  nk += o.nk;
  nr += o.nr;
  n_both += o.n_both;
}
void GroundingCounts::add(const GroundingCounts& o) {
  np_correct += o.np_correct;
  np_total += o.np_total;
  pr_correct += o.pr_correct;
  pr_total += o.pr_total;
}

MucCounts muc_counts(const Partition& gold, const Partition& pred) {
  std::map<int, int> dense = dense_universe(gold, pred);
  std::vector<int> gid = chain_ids(gold, dense);
  std::vector<int> pid = chain_ids(pred, dense);
  MucCounts c;
  auto side = [&dense](const Partition& key, const std::vector<int>& response_ids,
                       double& num, double& den) {
    for (const auto& chain : key) {
      if (chain.size() < 2) continue;
      std::vector<int> touched;
      for (int m : chain) touched.push_back(response_ids[static_cast<size_t>(dense.at(m))]);
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      num += static_cast<double>(chain.size()) - static_cast<double>(touched.size());
      den += static_cast<double>(chain.size()) - 1.0;
    }
  };
  side(gold, pid, c.recall_num, c.recall_den);
  side(pred, gid, c.precision_num, c.precision_den);
  return c;
}

PRF1 muc_from_counts(const MucCounts& c) {
  PRF1 out;
  out.recall = c.recall_den > 0 ? c.recall_num / c.recall_den : 0.0;
  out.precision = c.precision_den > 0 ? c.precision_num / c.precision_den : 0.0;
  out.f1 = harmonic_mean(out.precision, out.recall);
  return out;
}

PRF1 muc(const Partition& gold, const Partition& pred) {
  return muc_from_counts(muc_counts(gold, pred));
}

BlancCounts blanc_counts(const Partition& gold, const Partition& pred) {
  std::map<int, int> dense = dense_universe(gold, pred);
  const int n = static_cast<int>(dense.size());
  std::vector<int> gid = chain_ids(gold, dense);
  std::vector<int> pid = chain_ids(pred, dense);

  // count links arithmetically: coref links per chain, intersections per
  // (gold chain, pred chain) cell, non-coref counts by complement
  auto pairs2 = [](double k) { return k * (k - 1.0) / 2.0; };
  std::map<int, double> gold_sizes, pred_sizes;
  std::map<std::pair<int, int>, double> cell;
  for (int m = 0; m < n; ++m) {
    gold_sizes[gid[static_cast<size_t>(m)]] += 1;
    pred_sizes[pid[static_cast<size_t>(m)]] += 1;
    cell[{gid[static_cast<size_t>(m)], pid[static_cast<size_t>(m)]}] += 1;
  }
  BlancCounts c;
  for (const auto& [id, s] : gold_sizes) c.ck += pairs2(s);
  for (const auto& [id, s] : pred_sizes) c.cr += pairs2(s);
  for (const auto& [id, s] : cell) c.c_both += pairs2(s);
  const double total = pairs2(static_cast<double>(n));
  c.nk = total - c.ck;
  c.nr = total - c.cr;
  c.n_both = total - c.ck - c.cr + c.c_both;  // inclusion-exclusion
  return c;
}

PRF1 blanc_from_counts(const BlancCounts& c) {
  auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
  const double rc = ratio(c.c_both, c.ck), pc = ratio(c.c_both, c.cr);
  const double rn = ratio(c.n_both, c.nk), pn = ratio(c.n_both, c.nr);
  PRF1 out;
  out.recall = 0.5 * (rc + rn);
  out.precision = 0.5 * (pc + pn);
  out.f1 = 0.5 * (harmonic_mean(pc, rc) + harmonic_mean(pn, rn));
  return out;
}

PRF1 blanc(const Partition& gold, const Partition& pred) {
  std::map<int, int> dense = dense_universe(gold, pred);
  if (dense.size() < 2)
    throw std::invalid_argument("blanc: needs a universe of at least 2 mentions");
  return blanc_from_counts(blanc_counts(gold, pred));
}

double iou(const Box& a, const Box& b) {
  const double area_a = std::max(0.0, a[2] - a[0]) * std::max(0.0, a[3] - a[1]);
  const double area_b = std::max(0.0, b[2] - b[0]) * std::max(0.0, b[3] - b[1]);
  if (area_a <= 0.0 || area_b <= 0.0) return a == b ? 1.0 : 0.0;
  const double ix = std::min(a[2], b[2]) - std::max(a[0], b[0]);
  const double iy = std::min(a[3], b[3]) - std::max(a[1], b[1]);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (area_a + area_b - inter);
}

GroundingCounts grounding_counts(const std::map<int, Box>& predictions,
                                 const std::map<int, std::vector<Box>>& gold,
                                 const std::vector<bool>& pronoun_flags) {
  GroundingCounts c;
  for (const auto& [mention, gold_boxes] : gold) {
    if (gold_boxes.empty())
      throw std::invalid_argument("grounding_accuracy: mention without gold boxes");
    const bool pronoun =
        mention < static_cast<int>(pronoun_flags.size()) && pronoun_flags[static_cast<size_t>(mention)];
    bool correct = false;
    auto pred = predictions.find(mention);
    if (pred != predictions.end()) {
      for (const Box& gb : gold_boxes)
        if (iou(pred->second, gb) > 0.5) {  // strictly larger per protocol
          correct = true;
          break;
        }
    }
    (pronoun ? c.pr_total : c.np_total) += 1;
    if (correct) (pronoun ? c.pr_correct : c.np_correct) += 1;
  }
  return c;
}

GroundingAccuracy grounding_from_counts(const GroundingCounts& c) {
  GroundingAccuracy out;
  out.noun_phrases = c.np_total > 0 ? c.np_correct / c.np_total : 0.0;
  out.pronouns = c.pr_total > 0 ? c.pr_correct / c.pr_total : 0.0;
  const double total = c.np_total + c.pr_total;
  out.overall = total > 0 ? (c.np_correct + c.pr_correct) / total : 0.0;
  return out;
}

GroundingAccuracy grounding_accuracy(const std::map<int, Box>& predictions,
                                     const std::map<int, std::vector<Box>>& gold,
                                     const std::vector<bool>& pronoun_flags) {
  return grounding_from_counts(grounding_counts(predictions, gold, pronoun_flags));
}

std::string MetricReport::to_json() const {
  json j;
  j["muc"] = {{"r", muc.recall}, {"p", muc.precision}, {"f1", muc.f1}};
  j["blanc"] = {{"r", blanc.recall}, {"p", blanc.precision}, {"f1", blanc.f1}};
  j["grounding"] = {{"noun_phrases", grounding.noun_phrases},
                    {"pronouns", grounding.pronouns},
                    {"overall", grounding.overall}};
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  json j = json::parse(text);
  MetricReport r;
  r.muc = {j.at("muc").at("r"), j.at("muc").at("p"), j.at("muc").at("f1")};
  r.blanc = {j.at("blanc").at("r"), j.at("blanc").at("p"), j.at("blanc").at("f1")};
  r.grounding.noun_phrases = j.at("grounding").at("noun_phrases");
  r.grounding.pronouns = j.at("grounding").at("pronouns");
  r.grounding.overall = j.at("grounding").at("overall");
  return r;
}

}  // namespace mcoref
