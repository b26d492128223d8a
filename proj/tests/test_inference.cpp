#include "mcoref/inference.hpp"

#include <doctest.h>

#include "mcoref/rng.hpp"
#include "mcoref/synthetic.hpp"
#include "mcoref/training.hpp"

using namespace mcoref;
using Eigen::MatrixXd;

TEST_CASE("pairwise_labels thresholds strictly") {
  MatrixXd f = MatrixXd::Identity(3, 3);
  f(1, 2) = f(2, 1) = 1.0;
  auto none = pairwise_labels(MatrixXd::Identity(3, 3), 0.5);
  CHECK(none.empty());
  auto one = pairwise_labels(f, 0.5);
  CHECK(one == std::set<std::pair<int, int>>{{1, 2}});

  // uniform grounding over n regions gives f = 1/n everywhere; any
  // threshold at or above 1/n yields no pairs
  const int n_regions = 4;
  MatrixXd gbar = MatrixXd::Constant(3, n_regions, 1.0 / n_regions);
  MatrixXd unif = compatibility<double>(gbar).f;
  CHECK(pairwise_labels(unif, 1.0 / n_regions).empty());
  CHECK(pairwise_labels(unif, 1.0 / n_regions - 1e-9).size() == 3);

  CHECK_THROWS_AS(pairwise_labels(f, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(pairwise_labels(f, 1.0), std::invalid_argument);
}

TEST_CASE("build_chains connected components") {
  Partition a = build_chains({{0, 1}, {1, 2}}, 4);
  CHECK(a == Partition{{0, 1, 2}, {3}});
  Partition b = build_chains({}, 3);
  CHECK(b == Partition{{0}, {1}, {2}});
  Partition c = build_chains({{0, 1}, {2, 3}}, 4);
  CHECK(c == Partition{{0, 1}, {2, 3}});
  CHECK_THROWS_AS(build_chains({{0, 9}}, 3), std::invalid_argument);
}

namespace {

struct TrainedFixture {
  SynthCorpus synth;
  ModelStateT<double> state;
  PronounLexicon lexicon = PronounLexicon::defaults();

  TrainedFixture() : synth(make_corpus()), state(train()) {}

  static SynthConfig synth_config() {
    SynthConfig scfg;
    scfg.num_entities = 3;
    scfg.num_documents = 40;
    scfg.regions_per_image = 5;
    scfg.mentions_per_document = 4;
    scfg.feature_noise = 0.0;
    scfg.trace_noise = 0.0;
    scfg.pronoun_rate = 0.2;
    scfg.d_o = 4;
    scfg.d_v = 8;
    scfg.d_w = 8;
    scfg.seed = 2024;
    return scfg;
  }

  static SynthCorpus make_corpus() { return generate_synthetic(synth_config()); }

  ModelStateT<double> train() {
    ModelConfig mcfg;
    mcfg.arch = Arch::kMlp;
    mcfg.d = 32;
    mcfg.d_w = 8;
    mcfg.d_m = 8;
    mcfg.d_o = 4;
    mcfg.d_v = 8;
    mcfg.use_traces = true;
    TrainConfig tcfg;
    tcfg.lr = 1e-2;
    tcfg.batch_size = 8;
    tcfg.weight_decay = 0.0;
    tcfg.lambda = 0.01;
    tcfg.epochs = 100;
    tcfg.reg_variant = RegVariant::kFro;
    tcfg.seed = 7;
    RuleConfig rule_cfg;
    auto result = fit<double>(synth.documents, tcfg, mcfg, {}, synth.embeddings, lexicon, rule_cfg);
    return std::move(result.state);
  }
};

}  // namespace

TEST_CASE("predict on a trained model") {
  static TrainedFixture fx;  // trained once, reused across subcases

  InferenceConfig cfg;
  cfg.threshold = 0.5;

  SUBCASE("noiseless coreferent mentions share a region and a chain") {
    // overfit sanity on the training data via the latent oracle: coreferent
    // pairs should ground to one region, and at least one document should
    // realize the canonical two-mention / one-2-chain picture exactly
    int pairs_checked = 0, pairs_same_region = 0;
    bool exact_example_seen = false;
    for (size_t di = 0; di < fx.synth.documents.size(); ++di) {
      const Document& doc = fx.synth.documents[di];
      const DocumentLatent& latent = fx.synth.manifest.documents[di];
      ChainPrediction pred = predict(doc, fx.state, cfg, fx.lexicon, fx.synth.embeddings);
      for (size_t i = 0; i < doc.mentions.size(); ++i)
        for (size_t j = i + 1; j < doc.mentions.size(); ++j) {
          if (latent.mention_entities[i] != latent.mention_entities[j]) continue;
          ++pairs_checked;
          const bool same_region = pred.mention_regions.at(static_cast<int>(i)) ==
                                   pred.mention_regions.at(static_cast<int>(j));
          if (same_region) ++pairs_same_region;
          if (same_region) {
            for (const auto& chain : pred.chains)
              if (chain.size() == 2 &&
                  std::count(chain.begin(), chain.end(), static_cast<int>(i)) &&
                  std::count(chain.begin(), chain.end(), static_cast<int>(j)))
                exact_example_seen = true;
          }
        }
    }
    REQUIRE(pairs_checked > 20);
    CHECK(static_cast<double>(pairs_same_region) / pairs_checked > 0.8);
    CHECK(exact_example_seen);
  }

  SUBCASE("an extreme threshold on diffuse predictions gives all singletons") {
    // an untrained model grounds diffusely, so no pair clears f > 0.999
    InferenceConfig strict;
    strict.threshold = 0.999;
    auto noisy = init_model<double>(fx.state.config, 12345);
    const Document& doc = fx.synth.documents[0];
    ChainPrediction pred = predict(doc, noisy, strict, fx.lexicon, fx.synth.embeddings);
    CHECK(pred.chains.size() == doc.mentions.size());
  }

  SUBCASE("permuting regions leaves chains and boxes unchanged") {
    Document doc = fx.synth.documents[1];
    ChainPrediction before = predict(doc, fx.state, cfg, fx.lexicon, fx.synth.embeddings);
    Document permuted = doc;
    std::rotate(permuted.regions.begin(), permuted.regions.begin() + 2, permuted.regions.end());
    ChainPrediction after = predict(permuted, fx.state, cfg, fx.lexicon, fx.synth.embeddings);
    CHECK(before.chains == after.chains);
    for (const auto& [m, box] : before.mention_boxes) {
      const Box& other = after.mention_boxes.at(m);
      for (int k = 0; k < 4; ++k) CHECK(box[k] == doctest::Approx(other[k]).epsilon(1e-9));
    }
  }

  SUBCASE("raising the threshold only refines chains") {
    const Document& doc = fx.synth.documents[2];
    Partition coarse, fine;
    {
      InferenceConfig lo;
      lo.threshold = 0.3;
      lo.apply_rule_filter = false;
      coarse = predict(doc, fx.state, lo, fx.lexicon, fx.synth.embeddings).chains;
      InferenceConfig hi;
      hi.threshold = 0.7;
      hi.apply_rule_filter = false;
      fine = predict(doc, fx.state, hi, fx.lexicon, fx.synth.embeddings).chains;
    }
    // every fine chain sits inside one coarse chain
    for (const auto& fc : fine) {
      bool contained = false;
      for (const auto& cc : coarse) {
        bool all = true;
        for (int m : fc)
          if (std::find(cc.begin(), cc.end(), m) == cc.end()) all = false;
        if (all) contained = true;
      }
      CHECK(contained);
    }
    CHECK(fine.size() >= coarse.size());
  }

  SUBCASE("rule filter only removes links") {
    for (size_t di = 0; di < 10; ++di) {
      const Document& doc = fx.synth.documents[di];
      InferenceConfig no_filter = cfg;
      no_filter.apply_rule_filter = false;
      Partition unfiltered = predict(doc, fx.state, no_filter, fx.lexicon, fx.synth.embeddings).chains;
      Partition filtered = predict(doc, fx.state, cfg, fx.lexicon, fx.synth.embeddings).chains;
      CHECK(filtered.size() >= unfiltered.size());
      for (const auto& fc : filtered) {
        bool contained = false;
        for (const auto& uc : unfiltered) {
          bool all = true;
          for (int m : fc)
            if (std::find(uc.begin(), uc.end(), m) == uc.end()) all = false;
          if (all) contained = true;
        }
        CHECK(contained);
      }
    }
  }

  SUBCASE("determinism and the zero-region error") {
    const Document& doc = fx.synth.documents[3];
    ChainPrediction a = predict(doc, fx.state, cfg, fx.lexicon, fx.synth.embeddings);
    ChainPrediction b = predict(doc, fx.state, cfg, fx.lexicon, fx.synth.embeddings);
    CHECK(a.chains == b.chains);
    CHECK(a.mention_regions == b.mention_regions);

    Document empty = doc;
    empty.regions.clear();
    CHECK_THROWS_AS(predict(empty, fx.state, cfg, fx.lexicon, fx.synth.embeddings),
                    std::invalid_argument);
  }

  SUBCASE("threshold sweep is usable and chain counts never drop") {
    std::vector<Document> val(fx.synth.documents.begin(), fx.synth.documents.begin() + 10);
    auto caches = make_eval_caches(val, fx.state, fx.synth.embeddings);
    auto sweep = sweep_thresholds(caches, true, fx.lexicon);
    REQUIRE(sweep.size() == 19);
    for (size_t i = 1; i < sweep.size(); ++i)
      CHECK(sweep[i].total_chains >= sweep[i - 1].total_chains);
    const auto& best = best_by_muc_f1(sweep);
    CHECK(best.metrics.muc.f1 >= sweep.front().metrics.muc.f1 - 1e-12);
  }
}

TEST_CASE("evaluation requires gold annotations") {
  SynthConfig scfg;
  scfg.num_documents = 3;
  scfg.seed = 5;
  SynthCorpus synth = generate_synthetic(scfg);
  ModelConfig mcfg;
  mcfg.arch = Arch::kMlp;
  mcfg.d = 8;
  mcfg.d_w = scfg.d_w;
  mcfg.d_m = 4;
  mcfg.d_o = scfg.d_o;
  mcfg.d_v = scfg.d_v;
  auto state = init_model<double>(mcfg, 3);
  PronounLexicon lex = PronounLexicon::defaults();

  std::vector<Document> docs = synth.documents;
  docs[1].gold_chains.reset();
  auto caches = make_eval_caches(docs, state, synth.embeddings);
  InferenceConfig cfg;
  CHECK_THROWS_WITH_AS(evaluate_cached(caches, cfg, lex), doctest::Contains("synth-1"),
                       std::runtime_error);
}
