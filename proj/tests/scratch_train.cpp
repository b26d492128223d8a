// Scratch training probe (not registered with ctest).
#include <cstdio>

#include "mcoref/inference.hpp"
#include "mcoref/synthetic.hpp"
#include "mcoref/training.hpp"

using namespace mcoref;

int main(int argc, char** argv) {
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
  SynthCorpus synth = generate_synthetic(scfg);

  ModelConfig mcfg;
  mcfg.arch = Arch::kMlp;
  mcfg.d = 32;
  mcfg.d_w = 8;
  mcfg.d_m = 8;
  mcfg.d_o = 4;
  mcfg.d_v = 8;
  mcfg.use_traces = true;

  TrainConfig tcfg;
  tcfg.lr = argc > 1 ? std::atof(argv[1]) : 3e-3;
  tcfg.batch_size = 8;
  tcfg.weight_decay = 0.0;
  tcfg.lambda = 0.01;
  tcfg.epochs = argc > 2 ? std::atoi(argv[2]) : 60;
  tcfg.reg_variant = RegVariant::kFro;
  tcfg.seed = 7;
  PronounLexicon lex = PronounLexicon::defaults();
  RuleConfig rule_cfg;

  // mimic fit() but print per-epoch training grounding accuracy
  auto eval_grounding = [&](const ModelStateT<double>& state) {
    auto caches = make_eval_caches(synth.documents, state, synth.embeddings);
    InferenceConfig icfg;
    return evaluate_cached(caches, icfg, lex).grounding.overall;
  };

  const int total_epochs = tcfg.epochs;
  for (int upto = 5; upto <= total_epochs; upto += 5) {
    TrainConfig t = tcfg;
    t.epochs = upto;
    auto res = fit<double>(synth.documents, t, mcfg, {}, synth.embeddings, lex, rule_cfg);
    std::printf("epoch %3d  obj %.4f  con %.4f  reg %.4f  grounding %.3f\n", upto,
                res.report.objective.back(), res.report.contrastive.back(),
                res.report.regularizer.back(), eval_grounding(res.state));
  }
  return 0;
}
