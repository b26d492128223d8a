#include "mcoref/training.hpp"

#include <doctest.h>

#include "mcoref/synthetic.hpp"
#include "oracles.hpp"

using namespace mcoref;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ModelConfig tiny_model(Arch arch, const SynthConfig& scfg, bool traces = true) {
  ModelConfig cfg;
  cfg.arch = arch;
  cfg.d = 8;
  cfg.d_w = scfg.d_w;
  cfg.d_m = 4;
  cfg.d_o = scfg.d_o;
  cfg.d_v = scfg.d_v;
  cfg.use_traces = traces;
  cfg.transformer.layers = 2;
  cfg.transformer.heads = 2;
  cfg.transformer.ffn_dim1 = 16;
  cfg.transformer.ffn_dim2 = 8;
  return cfg;
}

SynthConfig tiny_synth(int docs = 2) {
  SynthConfig scfg;
  scfg.num_entities = 3;
  scfg.num_documents = docs;
  scfg.regions_per_image = 3;
  scfg.mentions_per_document = 4;
  scfg.d_o = 3;
  scfg.d_v = 5;
  scfg.d_w = 8;
  scfg.seed = 404;
  return scfg;
}

double eval_objective(const ModelStateT<double>& state, const std::vector<Document>& docs,
                      const std::vector<Eigen::MatrixXd>& qs, const TrainConfig& cfg,
                      const EmbeddingProvider& provider) {
  if (cfg.supervised) {
    std::vector<DocInputs<double>> inputs;
    for (const Document& d : docs) inputs.push_back(build_doc_inputs<double>(d, provider, state.config));
    std::vector<const DocInputs<double>*> ptrs;
    std::vector<const Document*> dptrs;
    for (size_t i = 0; i < docs.size(); ++i) {
      ptrs.push_back(&inputs[i]);
      dptrs.push_back(&docs[i]);
    }
    auto graph = build_supervised_objective<double>(state, ptrs, dptrs);
    return graph.objective_value();
  }
  return total_objective<double>(docs, state, qs, cfg, provider);
}

// Finite-difference check of every parameter of the full objective.
double max_grad_error(const ModelStateT<double>& state, const std::vector<Document>& docs,
                      const std::vector<Eigen::MatrixXd>& qs, const TrainConfig& cfg,
                      const EmbeddingProvider& provider, double step) {
  std::vector<DocInputs<double>> inputs;
  for (const Document& d : docs) inputs.push_back(build_doc_inputs<double>(d, provider, state.config));
  std::vector<const DocInputs<double>*> ptrs;
  std::vector<const Document*> dptrs;
  std::vector<const Eigen::MatrixXd*> qptrs;
  for (size_t i = 0; i < docs.size(); ++i) {
    ptrs.push_back(&inputs[i]);
    dptrs.push_back(&docs[i]);
  }
  for (const auto& q : qs) qptrs.push_back(&q);
  ObjectiveGraph<double> graph =
      cfg.supervised ? build_supervised_objective<double>(state, ptrs, dptrs)
                     : build_objective<double>(state, ptrs, qptrs, cfg);
  auto grads = gradients(graph);

  double worst = 0;
  for (const auto& [name, analytic] : grads) {
    ModelStateT<double> probe = state;
    auto numeric = oracle::finite_difference(
        [&](const MatrixXd& p) {
          probe.params.at(name) = p;
          return eval_objective(probe, docs, qs, cfg, provider);
        },
        state.params.at(name), step);
    worst = std::max(worst, oracle::max_rel_error(analytic, numeric, 1e-4));
  }
  return worst;
}

}  // namespace

TEST_CASE("contrastive loss worked examples") {
  // positive equals the single negative: -log(1/2)
  MatrixXd two(1, 2);
  two << 0.7, 0.7;
  CHECK(contrastive_from_logits(two, {0}) == doctest::Approx(std::log(2.0)));

  // k equal logits, one positive: ln k
  for (int k : {3, 5, 8}) {
    MatrixXd row = MatrixXd::Constant(1, k, -0.3);
    CHECK(contrastive_from_logits(row, {1}) == doctest::Approx(std::log(static_cast<double>(k))));
  }

  // dominant positive drives the loss to zero
  MatrixXd dom(1, 3);
  dom << 40.0, 0.0, 1.0;
  CHECK(contrastive_from_logits(dom, {0}) == doctest::Approx(0.0).epsilon(1e-12));

  // the literal form drops the positive from the denominator
  MatrixXd lit(1, 2);
  lit << 1.0, 1.0;
  CHECK(contrastive_from_logits(lit, {0}, false) == doctest::Approx(0.0));
  // and is unbounded below once the positive dominates
  CHECK(contrastive_from_logits(dom, {0}, false) < -30.0);
}

TEST_CASE("prior regularizer closed forms") {
  const int n = 5;
  MatrixXd f = MatrixXd::Constant(n, n, 0.4);
  MatrixXd q = f;

  for (RegVariant v : {RegVariant::kFro, RegVariant::kMse, RegVariant::kL1})
    CHECK(prior_regularizer(f, q, v) == 0.0);

  const double delta = 0.17;
  MatrixXd q2 = f.array() + delta;
  const double pairs = n * (n - 1);
  CHECK(prior_regularizer(f, q2, RegVariant::kFro) == doctest::Approx(pairs * delta * delta));
  CHECK(prior_regularizer(f, q2, RegVariant::kMse) == doctest::Approx(delta * delta));
  CHECK(prior_regularizer(f, q2, RegVariant::kL1) == doctest::Approx(pairs * delta));

  // one symmetric off-diagonal pair differing by 0.5: two entries of 0.25
  MatrixXd q3 = f;
  q3(0, 1) += 0.5;
  q3(1, 0) += 0.5;
  CHECK(prior_regularizer(f, q3, RegVariant::kFro) == doctest::Approx(0.5));

  MatrixXd bad = MatrixXd::Zero(3, 3);
  CHECK_THROWS_AS(prior_regularizer(f, bad, RegVariant::kFro), std::invalid_argument);
}

TEST_CASE("supervised bce worked examples") {
  VectorXd zero(1);
  zero << 0.0;
  CHECK(supervised_bce(zero, {1}) == doctest::Approx(std::log(2.0)));
  CHECK(supervised_bce(zero, {-1}) == doctest::Approx(std::log(2.0)));
  VectorXd big(1);
  big << 50.0;
  CHECK(supervised_bce(big, {1}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(supervised_bce(zero, {0}), std::invalid_argument);
}

TEST_CASE("objective composition: lambda scaling and f == q") {
  SynthConfig scfg = tiny_synth();
  SynthCorpus synth = generate_synthetic(scfg);
  ModelConfig mcfg = tiny_model(Arch::kMlp, scfg);
  auto state = init_model<double>(mcfg, 5);

  PronounLexicon lex = PronounLexicon::defaults();
  RuleConfig rule_cfg;
  std::vector<Eigen::MatrixXd> qs;
  for (const Document& d : synth.documents)
    qs.push_back(build_prior_table(d, rule_cfg, lex).values);

  TrainConfig cfg;
  cfg.reg_variant = RegVariant::kFro;
  cfg.lambda = 0.0;
  const double contrastive_only = total_objective<double>(synth.documents, state, qs, cfg, synth.embeddings);
  cfg.lambda = 0.03;
  const double with_reg = total_objective<double>(synth.documents, state, qs, cfg, synth.embeddings);
  cfg.lambda = 0.06;
  const double with_2reg = total_objective<double>(synth.documents, state, qs, cfg, synth.embeddings);
  CHECK(with_2reg - contrastive_only ==
        doctest::Approx(2.0 * (with_reg - contrastive_only)).epsilon(1e-9));

  // reg variant none drops the term entirely
  cfg.reg_variant = RegVariant::kNone;
  CHECK(total_objective<double>(synth.documents, state, qs, cfg, synth.embeddings) ==
        doctest::Approx(contrastive_only));

  // with q set to the model's own compatibility, the objective equals the
  // bare contrastive loss for any lambda
  std::vector<Eigen::MatrixXd> q_self;
  for (const Document& d : synth.documents)
    q_self.push_back(run_document_forward(d, state, synth.embeddings).compat.f);
  cfg.reg_variant = RegVariant::kFro;
  cfg.lambda = 3.33;
  CHECK(total_objective<double>(synth.documents, state, q_self, cfg, synth.embeddings) ==
        doctest::Approx(contrastive_only).epsilon(1e-9));
}

TEST_CASE("tape contrastive matches an eagerly assembled logit matrix") {
  SynthConfig scfg = tiny_synth(3);
  SynthCorpus synth = generate_synthetic(scfg);
  ModelConfig mcfg = tiny_model(Arch::kTransformer, scfg);
  auto state = init_model<double>(mcfg, 8);
  const auto& docs = synth.documents;

  std::vector<DocumentForward<double>> fwds;
  for (const Document& d : docs) fwds.push_back(run_document_forward(d, state, synth.embeddings));
  int total_mentions = 0;
  for (const Document& d : docs) total_mentions += static_cast<int>(d.mentions.size());
  MatrixXd logits(total_mentions, docs.size());
  std::vector<int> own;
  int row = 0;
  for (size_t b = 0; b < docs.size(); ++b) {
    for (Eigen::Index m = 0; m < fwds[b].mention_embs.rows(); ++m, ++row) {
      own.push_back(static_cast<int>(b));
      for (size_t b2 = 0; b2 < docs.size(); ++b2) {
        VectorXd scores = fwds[b2].region_embs * fwds[b].mention_embs.row(m).transpose();
        logits(row, static_cast<Eigen::Index>(b2)) = scores.maxCoeff();
      }
    }
  }
  const double eager = contrastive_from_logits(logits, own);
  const double taped = contrastive_loss<double>(docs, state, synth.embeddings);
  CHECK(taped == doctest::Approx(eager).epsilon(1e-12));

  const double literal = contrastive_from_logits(logits, own, false);
  CHECK(contrastive_loss<double>(docs, state, synth.embeddings, true) ==
        doctest::Approx(literal).epsilon(1e-12));
}

TEST_CASE("gradients match finite differences for every variant") {
  SynthConfig scfg = tiny_synth();
  SynthCorpus synth = generate_synthetic(scfg);
  PronounLexicon lex = PronounLexicon::defaults();
  RuleConfig rule_cfg;
  std::vector<Eigen::MatrixXd> qs;
  for (const Document& d : synth.documents)
    qs.push_back(build_prior_table(d, rule_cfg, lex).values);

  for (Arch arch : {Arch::kMlp, Arch::kTransformer}) {
    ModelConfig mcfg = tiny_model(arch, scfg);
    auto state = init_model<double>(mcfg, 21);
    TrainConfig cfg;
    cfg.lambda = 0.05;
    for (RegVariant v : {RegVariant::kNone, RegVariant::kFro}) {
      cfg.reg_variant = v;
      CHECK(max_grad_error(state, synth.documents, qs, cfg, synth.embeddings, 1e-5) < 1e-5);
    }
  }

  // remaining variants on the mlp. The init seed must keep the tiny model
  // away from exact ties (an all-dead relu row zeroes a mention embedding
  // and parks the region max on a kink the difference quotient straddles);
  // seed 21 is verified tie-free at this configuration.
  ModelConfig mcfg = tiny_model(Arch::kMlp, scfg);
  auto state = init_model<double>(mcfg, 21);
  TrainConfig cfg;
  cfg.lambda = 0.05;
  for (RegVariant v : {RegVariant::kL1, RegVariant::kMse}) {
    cfg.reg_variant = v;
    CHECK(max_grad_error(state, synth.documents, qs, cfg, synth.embeddings, 1e-5) < 1e-5);
  }
  TrainConfig sup;
  sup.supervised = true;
  CHECK(max_grad_error(state, synth.documents, {}, sup, synth.embeddings, 1e-5) < 1e-5);
}

TEST_CASE("doubling lambda doubles the regularizer gradient contribution") {
  SynthConfig scfg = tiny_synth();
  SynthCorpus synth = generate_synthetic(scfg);
  ModelConfig mcfg = tiny_model(Arch::kMlp, scfg);
  auto state = init_model<double>(mcfg, 31);
  PronounLexicon lex = PronounLexicon::defaults();
  RuleConfig rule_cfg;
  std::vector<Eigen::MatrixXd> qs;
  std::vector<DocInputs<double>> inputs;
  std::vector<const DocInputs<double>*> ptrs;
  std::vector<const Eigen::MatrixXd*> qptrs;
  for (const Document& d : synth.documents) {
    qs.push_back(build_prior_table(d, rule_cfg, lex).values);
    inputs.push_back(build_doc_inputs<double>(d, synth.embeddings, mcfg));
  }
  for (size_t i = 0; i < inputs.size(); ++i) {
    ptrs.push_back(&inputs[i]);
    qptrs.push_back(&qs[i]);
  }
  auto grads_at = [&](double lambda, RegVariant v) {
    TrainConfig cfg;
    cfg.lambda = lambda;
    cfg.reg_variant = v;
    auto graph = build_objective<double>(state, ptrs, qptrs, cfg);
    return gradients(graph);
  };
  auto g0 = grads_at(0.0, RegVariant::kFro);
  auto g1 = grads_at(0.02, RegVariant::kFro);
  auto g2 = grads_at(0.04, RegVariant::kFro);
  for (const auto& [name, base] : g0) {
    MatrixXd d1 = g1.at(name) - base;
    MatrixXd d2 = g2.at(name) - base;
    CHECK((d2 - 2.0 * d1).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("all-zero gradients when the objective is flat") {
  // single doc, regularizer only, with q equal to the produced f: the
  // objective sits at its minimum and every gradient vanishes
  SynthConfig scfg = tiny_synth(1);
  SynthCorpus synth = generate_synthetic(scfg);
  ModelConfig mcfg = tiny_model(Arch::kMlp, scfg);
  auto state = init_model<double>(mcfg, 41);
  std::vector<Eigen::MatrixXd> qs = {
      run_document_forward(synth.documents[0], state, synth.embeddings).compat.f};
  std::vector<DocInputs<double>> inputs = {
      build_doc_inputs<double>(synth.documents[0], synth.embeddings, mcfg)};
  TrainConfig cfg;
  cfg.reg_variant = RegVariant::kFro;
  cfg.lambda = 1.0;
  cfg.allow_single_doc_batch = true;
  std::vector<const DocInputs<double>*> ptrs = {&inputs[0]};
  std::vector<const Eigen::MatrixXd*> qptrs = {&qs[0]};
  auto graph = build_objective<double>(state, ptrs, qptrs, cfg);
  CHECK(graph.objective_value() == doctest::Approx(0.0));
  for (const auto& [name, g] : gradients(graph))
    CHECK(g.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a regularizer-only gradient step decreases the deviation from q") {
  SynthConfig scfg = tiny_synth(1);
  SynthCorpus synth = generate_synthetic(scfg);
  ModelConfig mcfg = tiny_model(Arch::kMlp, scfg);
  auto state = init_model<double>(mcfg, 43);
  PronounLexicon lex = PronounLexicon::defaults();
  RuleConfig rule_cfg;
  Eigen::MatrixXd q = build_prior_table(synth.documents[0], rule_cfg, lex).values;
  std::vector<DocInputs<double>> inputs = {
      build_doc_inputs<double>(synth.documents[0], synth.embeddings, mcfg)};
  TrainConfig cfg;
  cfg.reg_variant = RegVariant::kFro;
  cfg.lambda = 1.0;
  cfg.allow_single_doc_batch = true;
  std::vector<const DocInputs<double>*> ptrs = {&inputs[0]};
  std::vector<const Eigen::MatrixXd*> qptrs = {&q};

  auto deviation = [&](const ModelStateT<double>& s) {
    Eigen::MatrixXd f = run_document_forward(synth.documents[0], s, synth.embeddings).compat.f;
    return prior_regularizer(f, q, RegVariant::kFro);
  };
  const double before = deviation(state);
  REQUIRE(before > 0.0);
  auto graph = build_objective<double>(state, ptrs, qptrs, cfg);
  auto grads = gradients(graph);
  ModelStateT<double> stepped = state;
  for (auto& [name, p] : stepped.params) p -= 1e-3 * grads.at(name);
  CHECK(deviation(stepped) < before);
}

TEST_CASE("gradient accumulation is order-independent within tolerance") {
  SynthConfig scfg = tiny_synth(4);
  SynthCorpus synth = generate_synthetic(scfg);
  ModelConfig mcfg = tiny_model(Arch::kMlp, scfg);
  auto state = init_model<double>(mcfg, 51);
  std::vector<DocInputs<double>> inputs;
  for (const Document& d : synth.documents)
    inputs.push_back(build_doc_inputs<double>(d, synth.embeddings, mcfg));
  TrainConfig cfg;
  cfg.reg_variant = RegVariant::kNone;
  auto grads_for = [&](const std::vector<size_t>& order) {
    std::vector<const DocInputs<double>*> ptrs;
    for (size_t i : order) ptrs.push_back(&inputs[i]);
    auto graph = build_objective<double>(state, ptrs, {}, cfg);
    return gradients(graph);
  };
  auto g1 = grads_for({0, 1, 2, 3});
  auto g2 = grads_for({3, 1, 0, 2});
  for (const auto& [name, a] : g1)
    CHECK((a - g2.at(name)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("batch errors") {
  SynthConfig scfg = tiny_synth(1);
  SynthCorpus synth = generate_synthetic(scfg);
  ModelConfig mcfg = tiny_model(Arch::kMlp, scfg);
  auto state = init_model<double>(mcfg, 61);
  CHECK_THROWS_AS(contrastive_loss<double>(synth.documents, state, synth.embeddings),
                  std::invalid_argument);
  // allowed as a zero term under the debugging flag
  CHECK(contrastive_loss<double>(synth.documents, state, synth.embeddings, false, true) == 0.0);
}

TEST_CASE("fit: zero epochs returns the initial state; identical seeds agree") {
  SynthConfig scfg = tiny_synth(8);
  scfg.num_documents = 8;
  SynthCorpus synth = generate_synthetic(scfg);
  ModelConfig mcfg = tiny_model(Arch::kMlp, scfg);
  PronounLexicon lex = PronounLexicon::defaults();
  RuleConfig rule_cfg;

  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 0;
  cfg.seed = 99;
  auto r0 = fit<double>(synth.documents, cfg, mcfg, {}, synth.embeddings, lex, rule_cfg);
  auto init = init_model<double>(mcfg, 99);
  for (const auto& [name, p] : init.params) CHECK(p == r0.state.params.at(name));
  CHECK(r0.report.objective.empty());
  CHECK(r0.report.best_epoch == -1);

  cfg.epochs = 2;
  std::vector<Document> val(synth.documents.begin() + 6, synth.documents.end());
  std::vector<Document> train(synth.documents.begin(), synth.documents.begin() + 6);
  auto r1 = fit<double>(train, cfg, mcfg, val, synth.embeddings, lex, rule_cfg);
  auto r2 = fit<double>(train, cfg, mcfg, val, synth.embeddings, lex, rule_cfg);
  CHECK(r1.report.to_json() == r2.report.to_json());
  for (const auto& [name, p] : r1.state.params) CHECK(p == r2.state.params.at(name));
  CHECK(r1.report.objective.size() == 2);
  CHECK(r1.report.val_metrics.size() == 2);
  CHECK(r1.report.has_validation);
}
