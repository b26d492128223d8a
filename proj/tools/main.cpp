#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mcoref/checkpoint.hpp"
#include "mcoref/corpus.hpp"
#include "mcoref/inference.hpp"
#include "mcoref/linguistics.hpp"
#include "mcoref/report.hpp"
#include "mcoref/synthetic.hpp"
#include "mcoref/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mcoref;

namespace {

struct SynthArgs {
  SynthConfig cfg;
  std::string out;
  std::vector<double> split = {0.8, 0.1, 0.1};
};

struct TrainArgs {
  std::string data, val, out, embeddings, lexicon;
  std::string arch = "mlp";
  std::string reg = "fro";
  std::string attention = "cross";
  std::string selection = "muc";
  int d = 1024;
  int d_m = 128;
  int hidden = 0;
  int layers = 2;
  int heads = 2;
  int ffn_dim1 = 2048;
  int ffn_dim2 = 0;  // 0 -> d
  bool use_traces = false;
  bool normalize_attention = false;
  bool literal_eq5 = false;
  bool supervised = false;
  bool no_filter_abstract = false;
  std::string blocklist;
  double lr = -1, weight_decay = -1, lambda = -1;
  int batch_size = -1, epochs = 60;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string ckpt, data, out, embeddings, lexicon, blocklist;
  double threshold = -1;  // -1: use the training sweep result when present
  bool sweep = false;
  bool no_rule_filter = false;
  bool no_filter_abstract = false;
};

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
};

CorpusConfig read_corpus_config(const std::string& data_path) {
  const fs::path sidecar = fs::path(data_path).parent_path() / "corpus_config.json";
  if (!fs::exists(sidecar))
    throw std::runtime_error("corpus config not found next to the dataset: " + sidecar.string());
  std::ifstream in(sidecar);
  json j = json::parse(in);
  CorpusConfig cfg;
  cfg.d_o = j.at("d_o");
  cfg.d_v = j.at("d_v");
  cfg.embedding_provider_id = j.at("embedding_provider_id");
  cfg.trace_enabled = j.at("trace_enabled");
  return cfg;
}

void write_corpus_config(const CorpusConfig& cfg, const fs::path& path) {
  json j;
  j["d_o"] = cfg.d_o;
  j["d_v"] = cfg.d_v;
  j["embedding_provider_id"] = cfg.embedding_provider_id;
  j["trace_enabled"] = cfg.trace_enabled;
  write_text_file(path.string(), j.dump(2) + "\n");
}

PronounLexicon load_lexicon(const std::string& path) {
  return path.empty() ? PronounLexicon::defaults() : PronounLexicon::load(path);
}

std::vector<std::vector<std::string>> load_blocklist_arg(const std::string& path) {
  return path.empty() ? default_abstract_blocklist() : load_blocklist(path);
}

std::vector<Document> load_and_filter(const std::string& path, const CorpusConfig& cfg,
                                      bool filter_abstract, const std::string& blocklist_path) {
  std::vector<Document> docs = load_corpus(path, cfg);
  if (!filter_abstract) return docs;
  const auto blocklist = load_blocklist_arg(blocklist_path);
  for (Document& d : docs) d = filter_abstract_mentions(d, blocklist);
  return docs;
}

std::string embeddings_or_sibling(const std::string& given, const std::string& data_path) {
  if (!given.empty()) return given;
  const fs::path sibling = fs::path(data_path).parent_path() / "embeddings.txt";
  if (fs::exists(sibling)) return sibling.string();
  throw std::runtime_error(
      "no --embeddings given and no embeddings.txt next to the dataset");
}

int run_synth(const SynthArgs& args) {
  if (args.split.size() != 3)
    throw CLI::ValidationError("--split", "expects three ratios (train val test)");
  const double total = args.split[0] + args.split[1] + args.split[2];
  if (std::abs(total - 1.0) > 1e-9)
    throw CLI::ValidationError("--split", "ratios must sum to 1");

  SynthCorpus synth = generate_synthetic(args.cfg);
  fs::create_directories(args.out);
  const fs::path out(args.out);

  const int n = static_cast<int>(synth.documents.size());
  const int n_train = static_cast<int>(std::lround(args.split[0] * n));
  const int n_val = static_cast<int>(std::lround(args.split[1] * n));
  struct SplitSpec {
    const char* name;
    int begin, end;
  };
  const std::vector<SplitSpec> splits = {{"train", 0, n_train},
                                         {"val", n_train, n_train + n_val},
                                         {"test", n_train + n_val, n}};
  for (const SplitSpec& s : splits) {
    std::vector<Document> docs(synth.documents.begin() + s.begin,
                               synth.documents.begin() + s.end);
    save_corpus(docs, (out / (std::string(s.name) + ".jsonl")).string());
    SynthManifest part;
    part.visual_prototypes = synth.manifest.visual_prototypes;
    part.category_prototypes = synth.manifest.category_prototypes;
    part.entity_plural = synth.manifest.entity_plural;
    part.documents.assign(synth.manifest.documents.begin() + s.begin,
                          synth.manifest.documents.begin() + s.end);
    part.save((out / (std::string(s.name) + "_manifest.json")).string());
  }
  synth.embeddings.save((out / "embeddings.txt").string());
  write_corpus_config(synth.corpus_config, out / "corpus_config.json");

  json resolved;
  resolved["command"] = "synth";
  resolved["num_entities"] = args.cfg.num_entities;
  resolved["num_documents"] = args.cfg.num_documents;
  resolved["regions_per_image"] = args.cfg.regions_per_image;
  resolved["mentions_per_document"] = args.cfg.mentions_per_document;
  resolved["distractor_rate"] = args.cfg.distractor_rate;
  resolved["feature_noise"] = args.cfg.feature_noise;
  resolved["trace_noise"] = args.cfg.trace_noise;
  resolved["pronoun_rate"] = args.cfg.pronoun_rate;
  resolved["seed"] = args.cfg.seed;
  resolved["d_o"] = args.cfg.d_o;
  resolved["d_v"] = args.cfg.d_v;
  resolved["d_w"] = args.cfg.d_w;
  resolved["split"] = args.split;
  resolved["out"] = args.out;
  write_text_file((out / "resolved_config.json").string(), resolved.dump(2) + "\n");
  std::cout << "wrote " << n << " documents to " << args.out << "\n";
  return 0;
}

json train_resolved_config(const TrainArgs& args, const ModelConfig& mcfg,
                           const TrainConfig& tcfg) {
  json j;
  j["command"] = "train";
  j["data"] = args.data;
  j["val"] = args.val;
  j["out"] = args.out;
  j["embeddings"] = args.embeddings;
  j["arch"] = arch_name(mcfg.arch);
  j["d"] = mcfg.d;
  j["d_w"] = mcfg.d_w;
  j["d_m"] = mcfg.d_m;
  j["d_o"] = mcfg.d_o;
  j["d_v"] = mcfg.d_v;
  j["mlp_hidden"] = mcfg.mlp_hidden;
  j["use_traces"] = mcfg.use_traces;
  j["attention"] = mcfg.attention == AttentionMode::kCross ? "cross" : "average";
  j["normalize_attention"] = mcfg.normalize_attention;
  j["transformer"] = {{"layers", mcfg.transformer.layers},
                      {"heads", mcfg.transformer.heads},
                      {"ffn_dim1", mcfg.transformer.ffn_dim1},
                      {"ffn_dim2", mcfg.transformer.ffn_dim2}};
  j["lr"] = tcfg.lr;
  j["batch_size"] = tcfg.batch_size;
  j["weight_decay"] = tcfg.weight_decay;
  j["lambda"] = tcfg.lambda;
  j["epochs"] = tcfg.epochs;
  j["reg"] = reg_variant_name(tcfg.reg_variant);
  j["literal_eq5"] = tcfg.literal_eq5;
  j["supervised"] = tcfg.supervised;
  j["selection"] = tcfg.selection == SelectionMetric::kMucF1 ? "muc" : "grounding";
  j["seed"] = tcfg.seed;
  j["filter_abstract"] = !args.no_filter_abstract;
  j["lexicon"] = args.lexicon;
  j["blocklist"] = args.blocklist;
  return j;
}

int run_train(const TrainArgs& args, bool lambda_given) {
  CorpusConfig corpus_cfg = read_corpus_config(args.data);
  const std::string emb_path = embeddings_or_sibling(args.embeddings, args.data);
  EmbeddingProvider provider = EmbeddingProvider::load(emb_path);
  PronounLexicon lexicon = load_lexicon(args.lexicon);

  std::vector<Document> train_docs =
      load_and_filter(args.data, corpus_cfg, !args.no_filter_abstract, args.blocklist);
  std::vector<Document> val_docs;
  if (!args.val.empty())
    val_docs = load_and_filter(args.val, corpus_cfg, !args.no_filter_abstract, args.blocklist);

  ModelConfig mcfg;
  mcfg.arch = arch_from_name(args.arch);
  mcfg.d = args.d;
  mcfg.d_w = provider.dim();
  mcfg.d_m = args.d_m;
  mcfg.d_o = corpus_cfg.d_o;
  mcfg.d_v = corpus_cfg.d_v;
  mcfg.mlp_hidden = args.hidden;
  mcfg.use_traces = args.use_traces;
  mcfg.transformer.layers = args.layers;
  mcfg.transformer.heads = args.heads;
  mcfg.transformer.ffn_dim1 = args.ffn_dim1;
  mcfg.transformer.ffn_dim2 = args.ffn_dim2 > 0 ? args.ffn_dim2 : args.d;
  if (args.attention == "cross") mcfg.attention = AttentionMode::kCross;
  else if (args.attention == "average") mcfg.attention = AttentionMode::kAverage;
  else throw CLI::ValidationError("--attention", "must be cross or average");
  mcfg.normalize_attention = args.normalize_attention;
  mcfg.validate();

  TrainConfig tcfg = TrainConfig::defaults_for(mcfg.arch);
  if (args.lr >= 0) tcfg.lr = args.lr;
  if (args.batch_size > 0) tcfg.batch_size = args.batch_size;
  if (args.weight_decay >= 0) tcfg.weight_decay = args.weight_decay;
  if (args.lambda >= 0) tcfg.lambda = args.lambda;
  tcfg.epochs = args.epochs;
  tcfg.reg_variant = reg_variant_from_name(args.reg);
  tcfg.literal_eq5 = args.literal_eq5;
  tcfg.supervised = args.supervised;
  tcfg.seed = args.seed;
  if (args.selection == "muc") tcfg.selection = SelectionMetric::kMucF1;
  else if (args.selection == "grounding") tcfg.selection = SelectionMetric::kGroundingOverall;
  else throw CLI::ValidationError("--selection", "must be muc or grounding");
  tcfg.validate();

  if (tcfg.reg_variant == RegVariant::kNone && lambda_given)
    std::cerr << "warning: --lambda has no effect with --reg none\n";

  fs::create_directories(args.out);
  const fs::path out(args.out);
  write_text_file((out / "resolved_config.json").string(),
                  train_resolved_config(args, mcfg, tcfg).dump(2) + "\n");

  RuleConfig rule_cfg;
  FitResult<float> result =
      fit<float>(train_docs, tcfg, mcfg, val_docs, provider, lexicon, rule_cfg);

  save_checkpoint(result.state, (out / "best.ckpt").string());
  save_checkpoint(result.last_state, (out / "last.ckpt").string());
  result.report.save((out / "train_report.json").string());

  std::cout << "trained " << tcfg.epochs << " epochs; best epoch " << result.report.best_epoch
            << ", threshold " << result.report.best_threshold << "\n";
  return 0;
}

int run_eval(const EvalArgs& args) {
  ModelState state = load_checkpoint(args.ckpt);
  CorpusConfig corpus_cfg = read_corpus_config(args.data);
  if (corpus_cfg.d_o != state.config.d_o || corpus_cfg.d_v != state.config.d_v)
    throw std::runtime_error("checkpoint/dataset mismatch: region feature dimensions differ");
  const std::string emb_path = embeddings_or_sibling(args.embeddings, args.data);
  EmbeddingProvider provider = EmbeddingProvider::load(emb_path);
  if (provider.dim() != state.config.d_w)
    throw std::runtime_error("checkpoint/embedding mismatch: word dimensions differ");
  PronounLexicon lexicon = load_lexicon(args.lexicon);

  std::vector<Document> docs =
      load_and_filter(args.data, corpus_cfg, !args.no_filter_abstract, args.blocklist);

  double threshold = args.threshold;
  if (threshold < 0) {
    // reuse the validation sweep result stored next to the checkpoint
    const fs::path report_path = fs::path(args.ckpt).parent_path() / "train_report.json";
    threshold = 0.5;
    if (fs::exists(report_path)) threshold = TrainReport::load(report_path.string()).best_threshold;
  }
  InferenceConfig icfg;
  icfg.threshold = threshold;
  icfg.apply_rule_filter = !args.no_rule_filter;

  fs::create_directories(args.out);
  const fs::path out(args.out);

  std::vector<DocumentEvalCache> caches = make_eval_caches(docs, state, provider);
  MetricReport report = evaluate_cached(caches, icfg, lexicon);
  write_text_file((out / "metric_report.json").string(), report.to_json() + "\n");

  std::ofstream dump(out / "predictions.jsonl");
  for (const Document& d : docs) {
    ChainPrediction pred = predict(d, state, icfg, lexicon, provider);
    dump << pred.to_json(d.id) << "\n";
  }

  if (args.sweep) {
    std::vector<ThresholdSweepPoint> sweep = sweep_thresholds(caches, icfg.apply_rule_filter, lexicon);
    std::ostringstream csv;
    csv << "threshold,muc_f1,blanc_f1,grounding_overall,total_chains\n";
    for (const ThresholdSweepPoint& p : sweep)
      csv << p.threshold << ',' << p.metrics.muc.f1 << ',' << p.metrics.blanc.f1 << ','
          << p.metrics.grounding.overall << ',' << p.total_chains << "\n";
    write_text_file((out / "threshold_sweep.csv").string(), csv.str());
  }

  json resolved;
  resolved["command"] = "eval";
  resolved["ckpt"] = args.ckpt;
  resolved["data"] = args.data;
  resolved["out"] = args.out;
  resolved["threshold"] = threshold;
  resolved["rule_filter"] = icfg.apply_rule_filter;
  resolved["sweep_threshold"] = args.sweep;
  resolved["filter_abstract"] = !args.no_filter_abstract;
  write_text_file((out / "resolved_config.json").string(), resolved.dump(2) + "\n");

  std::cout << report.to_json() << "\n";
  return 0;
}

int run_report(const ReportArgs& args) {
  if (args.runs.empty()) throw CLI::ValidationError("--runs", "needs at least one run directory");
  std::vector<RunSummary> runs;
  for (const std::string& dir : args.runs) runs.push_back(load_run_summary(dir));
  fs::create_directories(args.out);
  const fs::path out(args.out);

  write_text_file((out / "comparison_table.md").string(), comparison_table(runs));

  for (const RunSummary& run : runs) {
    if (!run.has_train_report) continue;
    const TrainReport& tr = run.train_report;
    std::vector<Series> losses = {{"objective", tr.objective},
                                  {"contrastive", tr.contrastive},
                                  {"regularizer", tr.regularizer}};
    write_text_file((out / (run.name + "_loss_curves.svg")).string(),
                    svg_line_plot(losses, run.name + " loss"));
    if (tr.has_validation) {
      std::vector<Series> curves;
      Series muc{"val MUC-F1", {}}, blanc{"val BLANC-F1", {}}, grounding{"val grounding", {}};
      for (const MetricReport& m : tr.val_metrics) {
        muc.values.push_back(m.muc.f1);
        blanc.values.push_back(m.blanc.f1);
        grounding.values.push_back(m.grounding.overall);
      }
      curves = {muc, blanc, grounding};
      write_text_file((out / (run.name + "_metric_curves.svg")).string(),
                      svg_line_plot(curves, run.name + " validation"));
    }
  }
  std::cout << "compared " << runs.size() << " runs into " << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly supervised multimodal coreference toolkit"};
  app.require_subcommand(1);
  app.set_config("--config");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--num-entities", synth_args.cfg.num_entities)->capture_default_str();
  synth->add_option("--num-documents", synth_args.cfg.num_documents)->capture_default_str();
  synth->add_option("--regions-per-image", synth_args.cfg.regions_per_image)->capture_default_str();
  synth->add_option("--mentions-per-document", synth_args.cfg.mentions_per_document)
      ->capture_default_str();
  synth->add_option("--distractor-rate", synth_args.cfg.distractor_rate)->capture_default_str();
  synth->add_option("--feature-noise", synth_args.cfg.feature_noise)->capture_default_str();
  synth->add_option("--trace-noise", synth_args.cfg.trace_noise)->capture_default_str();
  synth->add_option("--pronoun-rate", synth_args.cfg.pronoun_rate)->capture_default_str();
  synth->add_option("--seed", synth_args.cfg.seed)->capture_default_str();
  synth->add_option("--d-o", synth_args.cfg.d_o)->capture_default_str();
  synth->add_option("--d-v", synth_args.cfg.d_v)->capture_default_str();
  synth->add_option("--d-w", synth_args.cfg.d_w)->capture_default_str();
  synth->add_option("--split", synth_args.split, "train/val/test ratios")->expected(3);
  synth->add_option("--out", synth_args.out, "output directory")->required();

  TrainArgs train_args;
  bool lambda_given = false;
  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", train_args.data)->required();
  train->add_option("--val", train_args.val);
  train->add_option("--out", train_args.out)->required();
  train->add_option("--embeddings", train_args.embeddings);
  train->add_option("--lexicon", train_args.lexicon);
  train->add_option("--blocklist", train_args.blocklist);
  train->add_option("--arch", train_args.arch, "mlp or tr")->capture_default_str();
  train->add_option("--reg", train_args.reg, "none, l1, mse or fro")->capture_default_str();
  train->add_option("--attention", train_args.attention, "cross or average")->capture_default_str();
  train->add_option("--selection", train_args.selection, "muc or grounding")->capture_default_str();
  train->add_option("--d", train_args.d)->capture_default_str();
  train->add_option("--d-m", train_args.d_m)->capture_default_str();
  train->add_option("--hidden", train_args.hidden, "mlp hidden width (0: d)")->capture_default_str();
  train->add_option("--layers", train_args.layers)->capture_default_str();
  train->add_option("--heads", train_args.heads)->capture_default_str();
  train->add_option("--ffn-dim1", train_args.ffn_dim1)->capture_default_str();
  train->add_option("--ffn-dim2", train_args.ffn_dim2, "0: d")->capture_default_str();
  train->add_flag("--use-traces", train_args.use_traces);
  train->add_flag("--normalize-attention", train_args.normalize_attention);
  train->add_flag("--literal-eq5", train_args.literal_eq5);
  train->add_flag("--supervised", train_args.supervised);
  train->add_flag("--no-filter-abstract", train_args.no_filter_abstract);
  train->add_option("--lr", train_args.lr, "learning rate (default per arch)");
  train->add_option("--batch-size", train_args.batch_size, "default per arch");
  train->add_option("--weight-decay", train_args.weight_decay, "default per arch");
  train->add_option("--lambda", train_args.lambda, "regularizer weight (default per arch)");
  train->add_option("--epochs", train_args.epochs)->capture_default_str();
  train->add_option("--seed", train_args.seed)->capture_default_str();

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--ckpt", eval_args.ckpt)->required();
  eval->add_option("--data", eval_args.data)->required();
  eval->add_option("--out", eval_args.out)->required();
  eval->add_option("--embeddings", eval_args.embeddings);
  eval->add_option("--lexicon", eval_args.lexicon);
  eval->add_option("--blocklist", eval_args.blocklist);
  eval->add_option("--threshold", eval_args.threshold,
                   "pair threshold (default: training sweep result, else 0.5)");
  eval->add_flag("--sweep-threshold", eval_args.sweep);
  eval->add_flag("--no-rule-filter", eval_args.no_rule_filter);
  eval->add_flag("--no-filter-abstract", eval_args.no_filter_abstract);

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "compare runs and plot curves");
  report->add_option("--runs", report_args.runs, "run directories")->required();
  report->add_option("--out", report_args.out)->required();

  try {
    app.parse(argc, argv);
    lambda_given = train->count("--lambda") > 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  }

  try {
    if (*synth) return run_synth(synth_args);
    if (*train) return run_train(train_args, lambda_given);
    if (*eval) return run_eval(eval_args);
    if (*report) return run_report(report_args);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
