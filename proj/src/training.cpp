#include "mcoref/training.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace mcoref {

using nlohmann::json;

std::string reg_variant_name(RegVariant v) {
  switch (v) {
    case RegVariant::kNone: return "none";
    case RegVariant::kL1: return "l1";
    case RegVariant::kMse: return "mse";
    case RegVariant::kFro: return "fro";
  }
  return "none";
}

RegVariant reg_variant_from_name(const std::string& s) {
  if (s == "none") return RegVariant::kNone;
  if (s == "l1") return RegVariant::kL1;
  if (s == "mse") return RegVariant::kMse;
  if (s == "fro") return RegVariant::kFro;
  throw std::invalid_argument("unknown regularizer variant: " + s);
}

TrainConfig TrainConfig::defaults_for(Arch arch) {
  TrainConfig cfg;
  if (arch == Arch::kMlp) {
    cfg.lr = 1e-4;
    cfg.batch_size = 64;
    cfg.weight_decay = 1e-4;
    cfg.lambda = 0.01;
  } else {
    cfg.lr = 3e-5;
    cfg.batch_size = 8;
    cfg.weight_decay = 0.01;
    cfg.lambda = 0.001;
  }
  cfg.epochs = 60;
  return cfg;
}

void TrainConfig::validate() const {
  if (lr < 0) throw std::invalid_argument("TrainConfig.lr must be >= 0");
  if (lambda < 0) throw std::invalid_argument("TrainConfig.lambda must be >= 0");
  if (weight_decay < 0) throw std::invalid_argument("TrainConfig.weight_decay must be >= 0");
  if (epochs < 0) throw std::invalid_argument("TrainConfig.epochs must be >= 0");
  if (!supervised && !allow_single_doc_batch && batch_size < 2)
    throw std::invalid_argument("TrainConfig.batch_size must be >= 2 with the contrastive loss");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig.batch_size must be >= 1");
}

double contrastive_from_logits(const Eigen::MatrixXd& logits,
                               const std::vector<int>& positive_col, bool include_positive) {
  if (static_cast<size_t>(logits.rows()) != positive_col.size())
    throw std::invalid_argument("contrastive_from_logits: positive column per row required");
  double total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int own = positive_col[static_cast<size_t>(i)];
    if (own < 0 || own >= logits.cols())
      throw std::invalid_argument("contrastive_from_logits: positive column out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      if ((include_positive || j != own) && logits(i, j) > mx) mx = logits(i, j);
    double s = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      if (include_positive || j != own) s += std::exp(logits(i, j) - mx);
    total += mx + std::log(s) - logits(i, own);
  }
  return total / static_cast<double>(logits.rows());
}

double prior_regularizer(const Eigen::MatrixXd& f, const Eigen::MatrixXd& q, RegVariant v) {
  if (f.rows() != q.rows() || f.cols() != q.cols() || f.rows() != f.cols())
    throw std::invalid_argument("prior_regularizer: shape mismatch");
  if (v == RegVariant::kNone) return 0.0;
  const Eigen::Index n = f.rows();
  double sum = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;  // diagonal excluded
      const double d = f(i, j) - q(i, j);
      sum += v == RegVariant::kL1 ? std::abs(d) : d * d;
    }
  if (v == RegVariant::kMse) {
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1);
    return pairs > 0 ? sum / pairs : 0.0;
  }
  return sum;
}

double supervised_bce(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
  if (static_cast<size_t>(scores.size()) != labels.size())
    throw std::invalid_argument("supervised_bce: score/label length mismatch");
  double total = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y != 1 && y != -1) throw std::invalid_argument("supervised_bce: labels must be +1/-1");
    // -log sigma(ys) = log(1 + exp(-ys)), computed stably
    const double t = -static_cast<double>(y) * scores(i);
    total += t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
  }
  return total;
}

std::string TrainReport::to_json() const {
  json j;
  j["objective"] = objective;
  j["contrastive"] = contrastive;
  j["regularizer"] = regularizer;
  json vals = json::array();
  for (const MetricReport& m : val_metrics) vals.push_back(json::parse(m.to_json()));
  j["val_metrics"] = std::move(vals);
  j["val_thresholds"] = val_thresholds;
  j["has_validation"] = has_validation;
  j["best_epoch"] = best_epoch;
  j["best_threshold"] = best_threshold;
  return j.dump(2);
}

TrainReport TrainReport::from_json(const std::string& text) {
  json j = json::parse(text);
  TrainReport r;
  r.objective = j.at("objective").get<std::vector<double>>();
  r.contrastive = j.at("contrastive").get<std::vector<double>>();
  r.regularizer = j.at("regularizer").get<std::vector<double>>();
  for (const json& jm : j.at("val_metrics")) r.val_metrics.push_back(MetricReport::from_json(jm.dump()));
  r.val_thresholds = j.at("val_thresholds").get<std::vector<double>>();
  r.has_validation = j.at("has_validation");
  r.best_epoch = j.at("best_epoch");
  r.best_threshold = j.at("best_threshold");
  return r;
}

void TrainReport::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write train report: " + path);
  out << to_json() << "\n";
}

TrainReport TrainReport::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open train report: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

}  // namespace mcoref
