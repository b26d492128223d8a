#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mcoref/autodiff.hpp"
#include "mcoref/grounding.hpp"
#include "mcoref/inference.hpp"
#include "mcoref/linguistics.hpp"
#include "mcoref/metrics.hpp"
#include "mcoref/model.hpp"
#include "mcoref/rng.hpp"

namespace mcoref {

enum class RegVariant { kNone, kL1, kMse, kFro };
enum class SelectionMetric { kMucF1, kGroundingOverall };

std::string reg_variant_name(RegVariant v);
RegVariant reg_variant_from_name(const std::string& s);

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 64;
  double weight_decay = 1e-4;
  double lambda = 0.01;
  int epochs = 60;
  RegVariant reg_variant = RegVariant::kFro;
  std::uint64_t seed = 0;
  bool literal_eq5 = false;       // keep the positive out of the denominator
  bool supervised = false;        // pairwise BCE baseline (needs gold chains)
  bool allow_single_doc_batch = false;  // regularizer-only debugging
  SelectionMetric selection = SelectionMetric::kMucF1;

  static TrainConfig defaults_for(Arch arch);
  void validate() const;
};

struct TrainReport {
  std::vector<double> objective;     // per-epoch mean over batches
  std::vector<double> contrastive;   // per-epoch mean of the per-mention term
  std::vector<double> regularizer;   // per-epoch mean of the pre-lambda sum
  std::vector<MetricReport> val_metrics;
  std::vector<double> val_thresholds;
  bool has_validation = false;
  int best_epoch = -1;
  double best_threshold = 0.5;

  std::string to_json() const;
  static TrainReport from_json(const std::string& text);
  void save(const std::string& path) const;
  static TrainReport load(const std::string& path);
};

// ---------------------------------------------------------------------------
// Loss math on plain values (the spec-level scalar forms).
// ---------------------------------------------------------------------------

// Softmax cross-entropy over one row of logits per mention; positive_col
// names the in-batch positive. With include_positive the denominator carries
// the positive term (bounded at 0); without it this is the literal
// unbounded form. Returns the mean over rows.
double contrastive_from_logits(const Eigen::MatrixXd& logits,
                               const std::vector<int>& positive_col,
                               bool include_positive = true);

// Off-diagonal deviation between compatibility and the rule prior.
double prior_regularizer(const Eigen::MatrixXd& f, const Eigen::MatrixXd& q, RegVariant v);

// -sum log sigma(s) over y=+1 and -sum log(1 - sigma(s)) over y=-1.
double supervised_bce(const Eigen::VectorXd& scores, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Objective graph on the tape.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ObjectiveGraph {
  Tape<Scalar> tape;
  typename Tape<Scalar>::Var objective{};
  typename Tape<Scalar>::Var contrastive{};
  typename Tape<Scalar>::Var regularizer{};  // pre-lambda sum over documents
  std::map<std::string, typename Tape<Scalar>::Var> params;

  double objective_value() const { return static_cast<double>(tape.value(objective)(0, 0)); }
  double contrastive_value() const {
    return contrastive.valid() ? static_cast<double>(tape.value(contrastive)(0, 0)) : 0.0;
  }
  double regularizer_value() const {
    return regularizer.valid() ? static_cast<double>(tape.value(regularizer)(0, 0)) : 0.0;
  }
};

// Weakly supervised objective: in-batch contrastive loss plus
// lambda * sum over documents of the prior regularizer.
template <typename Scalar>
ObjectiveGraph<Scalar> build_objective(const ModelStateT<Scalar>& state,
                                       const std::vector<const DocInputs<Scalar>*>& batch,
                                       const std::vector<const Eigen::MatrixXd*>& q_tables,
                                       const TrainConfig& cfg) {
  using Mat = MatX<Scalar>;
  if (batch.empty()) throw std::invalid_argument("build_objective: empty batch");
  const bool use_reg = cfg.reg_variant != RegVariant::kNone && !q_tables.empty();
  if (use_reg && q_tables.size() != batch.size())
    throw std::invalid_argument("build_objective: q table count does not match batch");
  const int B = static_cast<int>(batch.size());
  if (B < 2 && !cfg.allow_single_doc_batch)
    throw std::invalid_argument(
        "contrastive loss needs a batch of >= 2 documents (no negatives otherwise)");

  ObjectiveGraph<Scalar> out;
  TapeEngine<Scalar> eng{&out.tape};
  auto bound = BoundModel<Scalar, TapeEngine<Scalar>>::bind(eng, state);
  out.params = bound.p;

  std::vector<DocGraph<typename Tape<Scalar>::Var>> graphs;
  std::vector<typename Tape<Scalar>::Var> mention_blocks;
  std::vector<int> doc_of_mention;
  for (int b = 0; b < B; ++b) {
    graphs.push_back(document_graph(bound, *batch[static_cast<size_t>(b)]));
    mention_blocks.push_back(graphs.back().mention_embs);
    const auto rows = out.tape.value(graphs.back().mention_embs).rows();
    for (Eigen::Index r = 0; r < rows; ++r) doc_of_mention.push_back(b);
  }
  const int M = static_cast<int>(doc_of_mention.size());

  if (B >= 2) {
    // logit matrix: column b' holds each mention's best-region score in
    // image b'; the mention's own column is the positive (Eq. 4 pseudo-label)
    auto all_mentions = out.tape.concat_rows(mention_blocks);
    std::vector<typename Tape<Scalar>::Var> columns;
    for (int b = 0; b < B; ++b)
      columns.push_back(
          out.tape.rowwise_max(out.tape.matmul_nt(all_mentions, graphs[static_cast<size_t>(b)].region_embs)));
    auto logits = out.tape.concat_cols(columns);
    Mat mask = Mat::Ones(M, B);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> positives;
    for (int m = 0; m < M; ++m) {
      positives.push_back({m, doc_of_mention[static_cast<size_t>(m)]});
      if (cfg.literal_eq5) mask(m, doc_of_mention[static_cast<size_t>(m)]) = Scalar(0);
    }
    auto lse = out.tape.masked_rowwise_logsumexp(logits, mask);
    auto pos = out.tape.pick(logits, positives);
    out.contrastive = out.tape.scale(out.tape.sum(out.tape.sub(lse, pos)),
                                     Scalar(1) / static_cast<Scalar>(M));
  } else {
    out.contrastive = out.tape.leaf(Mat::Zero(1, 1));
  }

  typename Tape<Scalar>::Var reg_sum;
  if (use_reg) {
    for (int b = 0; b < B; ++b) {
      const Eigen::MatrixXd& q = *q_tables[static_cast<size_t>(b)];
      const auto n = out.tape.value(graphs[static_cast<size_t>(b)].f).rows();
      if (q.rows() != n || q.cols() != n)
        throw std::invalid_argument("prior table shape does not match compatibility matrix");
      if (n < 2) continue;
      Mat offdiag = Mat::Ones(n, n) - Mat::Identity(n, n);
      auto diff = out.tape.sub(graphs[static_cast<size_t>(b)].f, out.tape.leaf(q.cast<Scalar>()));
      typename Tape<Scalar>::Var term;
      switch (cfg.reg_variant) {
        case RegVariant::kFro:
          term = out.tape.sum(out.tape.hadamard(out.tape.square(diff), out.tape.leaf(offdiag)));
          break;
        case RegVariant::kMse:
          term = out.tape.scale(
              out.tape.sum(out.tape.hadamard(out.tape.square(diff), out.tape.leaf(offdiag))),
              Scalar(1) / static_cast<Scalar>(n * (n - 1)));
          break;
        case RegVariant::kL1:
          term = out.tape.sum(out.tape.hadamard(out.tape.abs(diff), out.tape.leaf(offdiag)));
          break;
        case RegVariant::kNone:
          break;
      }
      reg_sum = reg_sum.valid() ? out.tape.add(reg_sum, term) : term;
    }
  }
  if (reg_sum.valid()) {
    out.regularizer = reg_sum;
    // both loss terms live under the same per-mention sum in the objective;
    // with the contrastive term averaged over mentions, the regularizer sum
    // is averaged by the same count to keep their ratio batch-independent
    out.objective = out.tape.add(
        out.contrastive,
        out.tape.scale(reg_sum, static_cast<Scalar>(cfg.lambda) / static_cast<Scalar>(M)));
  } else {
    out.objective = out.contrastive;
  }
  return out;
}

// Supervised pairwise baseline: BCE over all mention pairs against gold
// chain labels, summed over the batch.
template <typename Scalar>
ObjectiveGraph<Scalar> build_supervised_objective(
    const ModelStateT<Scalar>& state, const std::vector<const DocInputs<Scalar>*>& batch,
    const std::vector<const Document*>& docs) {
  using Mat = MatX<Scalar>;
  if (batch.empty() || batch.size() != docs.size())
    throw std::invalid_argument("build_supervised_objective: batch/docs mismatch");
  ObjectiveGraph<Scalar> out;
  TapeEngine<Scalar> eng{&out.tape};
  auto bound = BoundModel<Scalar, TapeEngine<Scalar>>::bind(eng, state);
  out.params = bound.p;

  typename Tape<Scalar>::Var total;
  for (size_t b = 0; b < batch.size(); ++b) {
    const Document& doc = *docs[b];
    if (!doc.gold_chains)
      throw std::invalid_argument("supervised baseline needs gold chains; doc '" + doc.id + "'");
    const int n = static_cast<int>(doc.mentions.size());
    if (n < 2) continue;
    std::vector<int> chain_of(static_cast<size_t>(n), -1);
    for (size_t c = 0; c < doc.gold_chains->size(); ++c)
      for (int m : (*doc.gold_chains)[c]) chain_of[static_cast<size_t>(m)] = static_cast<int>(c);

    auto graph = document_graph(bound, *batch[b]);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> at;
    std::vector<double> neg_label;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        at.push_back({i, j});
        const bool same = chain_of[static_cast<size_t>(i)] >= 0 &&
                          chain_of[static_cast<size_t>(i)] == chain_of[static_cast<size_t>(j)];
        neg_label.push_back(same ? -1.0 : 1.0);
      }
    const auto P = static_cast<Eigen::Index>(at.size());
    auto s = out.tape.pick(graph.f, at);
    Mat neg(P, 1);
    for (Eigen::Index p = 0; p < P; ++p) neg(p, 0) = static_cast<Scalar>(neg_label[static_cast<size_t>(p)]);
    // loss per pair: log(1 + exp(-y s)) via a stable two-column logsumexp
    auto t = out.tape.hadamard(s, out.tape.leaf(neg));
    auto two_col = out.tape.concat_cols({out.tape.leaf(Mat::Zero(P, 1)), t});
    auto loss = out.tape.sum(out.tape.masked_rowwise_logsumexp(two_col, Mat::Ones(P, 2)));
    total = total.valid() ? out.tape.add(total, loss) : loss;
  }
  if (!total.valid())
    throw std::invalid_argument("supervised baseline: no document with >= 2 mentions");
  out.objective = total;
  return out;
}

// Exact gradients of the recorded objective for every parameter.
template <typename Scalar>
std::map<std::string, MatX<Scalar>> gradients(ObjectiveGraph<Scalar>& graph) {
  if (!std::isfinite(graph.objective_value()))
    throw std::runtime_error("gradients: objective is not finite");
  graph.tape.backward(graph.objective);
  std::map<std::string, MatX<Scalar>> out;
  for (const auto& [name, var] : graph.params) out.emplace(name, graph.tape.grad(var));
  return out;
}

// ---------------------------------------------------------------------------
// Spec-surface scalar wrappers.
// ---------------------------------------------------------------------------

template <typename Scalar = double>
double contrastive_loss(const std::vector<Document>& batch, const ModelStateT<Scalar>& state,
                        const EmbeddingProvider& provider, bool literal_eq5 = false,
                        bool allow_single_doc_batch = false) {
  std::vector<DocInputs<Scalar>> inputs;
  for (const Document& d : batch) inputs.push_back(build_doc_inputs<Scalar>(d, provider, state.config));
  std::vector<const DocInputs<Scalar>*> ptrs;
  for (const auto& in : inputs) ptrs.push_back(&in);
  TrainConfig cfg;
  cfg.reg_variant = RegVariant::kNone;
  cfg.literal_eq5 = literal_eq5;
  cfg.allow_single_doc_batch = allow_single_doc_batch;
  auto graph = build_objective<Scalar>(state, ptrs, {}, cfg);
  return graph.contrastive_value();
}

template <typename Scalar = double>
double total_objective(const std::vector<Document>& batch, const ModelStateT<Scalar>& state,
                       const std::vector<Eigen::MatrixXd>& q_tables, const TrainConfig& cfg,
                       const EmbeddingProvider& provider) {
  std::vector<DocInputs<Scalar>> inputs;
  for (const Document& d : batch) inputs.push_back(build_doc_inputs<Scalar>(d, provider, state.config));
  std::vector<const DocInputs<Scalar>*> ptrs;
  for (const auto& in : inputs) ptrs.push_back(&in);
  std::vector<const Eigen::MatrixXd*> qs;
  for (const auto& q : q_tables) qs.push_back(&q);
  auto graph = build_objective<Scalar>(state, ptrs, qs, cfg);
  return graph.objective_value();
}

// ---------------------------------------------------------------------------
// AdamW optimizer and the training loop.
// ---------------------------------------------------------------------------

template <typename Scalar>
class AdamW {
public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ModelStateT<Scalar>& state, const std::map<std::string, MatX<Scalar>>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, param] : state.params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const MatX<Scalar>& g = git->second;
      MatX<Scalar>& m = moment1_.try_emplace(name, MatX<Scalar>::Zero(param.rows(), param.cols()))
                            .first->second;
      MatX<Scalar>& v = moment2_.try_emplace(name, MatX<Scalar>::Zero(param.rows(), param.cols()))
                            .first->second;
      m = Scalar(beta1_) * m + Scalar(1 - beta1_) * g;
      v = Scalar(beta2_) * v + Scalar(1 - beta2_) * g.cwiseProduct(g);
      MatX<Scalar> m_hat = m / Scalar(bc1);
      MatX<Scalar> v_hat = v / Scalar(bc2);
      // decoupled weight decay
      param -= Scalar(lr_) * (m_hat.array() / (v_hat.array().sqrt() + Scalar(eps_))).matrix();
      param -= Scalar(lr_ * wd_) * param;
    }
  }

private:
  double lr_, wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, MatX<Scalar>> moment1_, moment2_;
};

template <typename Scalar>
struct FitResult {
  ModelStateT<Scalar> state;       // best-validation state (last when no val set)
  ModelStateT<Scalar> last_state;  // state after the final epoch
  TrainReport report;
};

// Shuffled seeded minibatches, AdamW updates, per-epoch validation via the
// inference threshold sweep; returns the best-validation state (the last
// state when no validation set is given).
template <typename Scalar>
FitResult<Scalar> fit(const std::vector<Document>& corpus, const TrainConfig& cfg,
                      const ModelConfig& model_cfg, const std::vector<Document>& val,
                      const EmbeddingProvider& provider, const PronounLexicon& lexicon,
                      const RuleConfig& rule_cfg) {
  if (corpus.empty()) throw std::invalid_argument("fit: empty corpus");
  cfg.validate();
  model_cfg.validate();

  ModelStateT<Scalar> state = init_model<Scalar>(model_cfg, cfg.seed);
  TrainReport report;
  if (cfg.epochs == 0) return {state, state, std::move(report)};

  std::vector<DocInputs<Scalar>> inputs;
  inputs.reserve(corpus.size());
  for (const Document& d : corpus) inputs.push_back(build_doc_inputs<Scalar>(d, provider, model_cfg));
  std::vector<Eigen::MatrixXd> q_tables;
  const bool use_reg = cfg.reg_variant != RegVariant::kNone && !cfg.supervised;
  if (use_reg) {
    q_tables.reserve(corpus.size());
    for (const Document& d : corpus)
      q_tables.push_back(build_prior_table(d, rule_cfg, lexicon).values);
  }

  AdamW<Scalar> optimizer(cfg.lr, cfg.weight_decay);
  DeterministicRng shuffle_rng(cfg.seed ^ 0x5deece66dULL);
  std::vector<int> order(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) order[i] = static_cast<int>(i);

  ModelStateT<Scalar> best_state = state;
  double best_score = -1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    std::vector<std::vector<int>> batches;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size))
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                           order.begin() + static_cast<std::ptrdiff_t>(
                                               std::min(at + static_cast<size_t>(cfg.batch_size),
                                                        order.size())));
    // a trailing single document cannot form negatives; fold it back
    if (batches.size() > 1 && batches.back().size() == 1) {
      batches[batches.size() - 2].push_back(batches.back()[0]);
      batches.pop_back();
    }

    double obj_sum = 0, con_sum = 0, reg_sum = 0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const std::vector<int>& batch_ids = batches[bi];
      std::vector<const DocInputs<Scalar>*> batch_inputs;
      std::vector<const Eigen::MatrixXd*> batch_q;
      std::vector<const Document*> batch_docs;
      for (int id : batch_ids) {
        batch_inputs.push_back(&inputs[static_cast<size_t>(id)]);
        if (use_reg) batch_q.push_back(&q_tables[static_cast<size_t>(id)]);
        batch_docs.push_back(&corpus[static_cast<size_t>(id)]);
      }
      ObjectiveGraph<Scalar> graph =
          cfg.supervised ? build_supervised_objective<Scalar>(state, batch_inputs, batch_docs)
                         : build_objective<Scalar>(state, batch_inputs, batch_q, cfg);
      const double obj = graph.objective_value();
      if (!std::isfinite(obj))
        throw std::runtime_error("fit: non-finite objective at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(bi) +
                                 " (contrastive=" + std::to_string(graph.contrastive_value()) +
                                 ", regularizer=" + std::to_string(graph.regularizer_value()) + ")");
      obj_sum += obj;
      con_sum += graph.contrastive_value();
      reg_sum += graph.regularizer_value();
      std::map<std::string, MatX<Scalar>> grads = gradients(graph);
      optimizer.step(state, grads);
    }
    const double nb = static_cast<double>(batches.size());
    report.objective.push_back(obj_sum / nb);
    report.contrastive.push_back(con_sum / nb);
    report.regularizer.push_back(reg_sum / nb);

    if (!val.empty()) {
      report.has_validation = true;
      std::vector<DocumentEvalCache> caches = make_eval_caches(val, state, provider);
      std::vector<ThresholdSweepPoint> sweep = sweep_thresholds(caches, true, lexicon);
      const ThresholdSweepPoint* chosen = &best_by_muc_f1(sweep);
      if (cfg.selection == SelectionMetric::kGroundingOverall) {
        size_t best_i = 0;
        for (size_t i = 1; i < sweep.size(); ++i)
          if (sweep[i].metrics.grounding.overall > sweep[best_i].metrics.grounding.overall)
            best_i = i;
        chosen = &sweep[best_i];
      }
      report.val_metrics.push_back(chosen->metrics);
      report.val_thresholds.push_back(chosen->threshold);
      const double score = cfg.selection == SelectionMetric::kMucF1
                               ? chosen->metrics.muc.f1
                               : chosen->metrics.grounding.overall;
      if (score > best_score) {
        best_score = score;
        best_state = state;
        report.best_epoch = epoch;
        report.best_threshold = chosen->threshold;
      }
    } else {
      report.val_metrics.push_back(MetricReport{});
      report.val_thresholds.push_back(0.5);
      report.best_epoch = epoch;  // best = last without validation
    }
  }

  if (!val.empty()) return {std::move(best_state), std::move(state), std::move(report)};
  return {state, state, std::move(report)};
}

}  // namespace mcoref
