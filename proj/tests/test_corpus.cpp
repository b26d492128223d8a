#include "mcoref/corpus.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mcoref/synthetic.hpp"

using namespace mcoref;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mcoref_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Document tiny_document() {
  Document d;
  d.id = "doc-0";
  d.tokens = {"a", "lady", "sees", "her"};
  Region r1;
  r1.box = {0.1, 0.1, 0.4, 0.5};
  r1.category_embedding = std::vector<double>(16, 0.25);
  r1.visual_features = std::vector<double>(32, -0.5);
  Region r2 = r1;
  r2.box = {0.5, 0.5, 0.9, 0.9};
  d.regions = {r1, r2};
  Mention m1;
  m1.start = 0;
  m1.end = 2;
  Mention m2;
  m2.start = 3;
  m2.end = 4;
  m2.is_pronoun = true;
  m2.trace = TraceVector{0.1, 0.4, 0.1, 0.5, 0.12};
  d.mentions = {m1, m2};
  d.gold_chains = {{0, 1}};
  d.gold_boxes = std::map<int, std::vector<Box>>{{0, {r1.box}}, {1, {r1.box}}};
  return d;
}

}  // namespace

TEST_CASE("trace_to_vector summarizes points") {
  auto single = trace_to_vector({{0.5, 0.5, 0.0}});
  REQUIRE(single.has_value());
  CHECK((*single)[0] == 0.5);
  CHECK((*single)[1] == 0.5);
  CHECK((*single)[2] == 0.5);
  CHECK((*single)[3] == 0.5);
  CHECK((*single)[4] == 0.0);

  auto frame = trace_to_vector({{0, 0, 0}, {1, 1, 1}});
  CHECK((*frame)[4] == 1.0);

  auto partial = trace_to_vector({{0.2, 0.4, 0.0}, {0.6, 0.8, 1.0}});
  CHECK((*partial)[0] == doctest::Approx(0.2));
  CHECK((*partial)[1] == doctest::Approx(0.6));
  CHECK((*partial)[2] == doctest::Approx(0.4));
  CHECK((*partial)[3] == doctest::Approx(0.8));
  CHECK((*partial)[4] == doctest::Approx(0.16));

  CHECK_FALSE(trace_to_vector({}).has_value());  // absent-trace marker
}

TEST_CASE("validate_document flags violations by field") {
  CorpusConfig cfg{16, 32, "test", true};
  Document d = tiny_document();
  CHECK(validate_document(d, cfg).empty());

  Document bad_span = d;
  bad_span.mentions[1].end = 9;
  auto v1 = validate_document(bad_span, cfg);
  REQUIRE(v1.size() == 1);
  CHECK(v1[0].find("span") != std::string::npos);

  Document bad_box = d;
  bad_box.regions[0].box = {0.6, 0.1, 0.4, 0.5};  // x1 > x2
  auto v2 = validate_document(bad_box, cfg);
  REQUIRE(v2.size() == 1);
  CHECK(v2[0].find("box") != std::string::npos);

  Document bad_dim = d;
  bad_dim.regions[0].visual_features.pop_back();
  auto v3 = validate_document(bad_dim, cfg);
  REQUIRE(v3.size() == 1);
  CHECK(v3[0].find("visual_features") != std::string::npos);

  Document dup_chain = d;
  dup_chain.gold_chains = {{0, 1}, {1}};
  CHECK(validate_document(dup_chain, cfg).size() == 1);
}

TEST_CASE("save/load round trip") {
  CorpusConfig cfg{16, 32, "test", true};
  auto path = temp_path("roundtrip.jsonl");

  SUBCASE("empty corpus") {
    save_corpus({}, path.string());
    CHECK(load_corpus(path.string(), cfg).empty());
  }

  SUBCASE("single document with all fields") {
    std::vector<Document> docs = {tiny_document()};
    save_corpus(docs, path.string());
    auto loaded = load_corpus(path.string(), cfg);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0] == docs[0]);
  }

  SUBCASE("100 random synthetic documents value-equal after reload") {
    SynthConfig scfg;
    scfg.num_documents = 100;
    scfg.seed = 11;
    SynthCorpus synth = generate_synthetic(scfg);
    save_corpus(synth.documents, path.string());
    auto loaded = load_corpus(path.string(), synth.corpus_config);
    REQUIRE(loaded.size() == synth.documents.size());
    for (size_t i = 0; i < loaded.size(); ++i) CHECK(loaded[i] == synth.documents[i]);
  }
}

TEST_CASE("load_corpus names the offending line") {
  CorpusConfig cfg{16, 32, "test", true};
  auto path = temp_path("malformed.jsonl");
  {
    std::ofstream out(path);
    out << document_to_json(tiny_document()) << "\n";
    out << "{not json}\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(path.string(), cfg),
                       doctest::Contains(":2: parse error"), std::runtime_error);

  // dimension mismatch vs config is a validation error, also with a line
  CorpusConfig wrong{8, 32, "test", true};
  auto path2 = temp_path("wrongdim.jsonl");
  save_corpus({tiny_document()}, path2.string());
  CHECK_THROWS_WITH_AS(load_corpus(path2.string(), wrong),
                       doctest::Contains(":1: validation error"), std::runtime_error);
}

TEST_CASE("1-record file parses counts") {
  CorpusConfig cfg{16, 32, "test", true};
  auto path = temp_path("one.jsonl");
  Document d = tiny_document();
  Region extra = d.regions[0];
  extra.box = {0.2, 0.2, 0.3, 0.3};
  d.regions.push_back(extra);
  d.mentions.push_back(d.mentions[0]);
  d.mentions.push_back(d.mentions[0]);
  d.gold_chains.reset();
  d.gold_boxes.reset();
  save_corpus({d}, path.string());
  auto loaded = load_corpus(path.string(), cfg);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].regions.size() == 3);
  CHECK(loaded[0].mentions.size() == 4);
}
