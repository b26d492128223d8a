#include "mcoref/metrics.hpp"

#include <doctest.h>

#include "mcoref/rng.hpp"
#include "oracles.hpp"

using namespace mcoref;

namespace {

// Random partition of {0..n-1}.
Partition random_partition(int n, DeterministicRng& rng) {
  Partition out;
  for (int m = 0; m < n; ++m) {
    const int pick = rng.uniform_int(0, static_cast<int>(out.size()));
    if (pick == static_cast<int>(out.size())) out.push_back({m});
    else out[static_cast<size_t>(pick)].push_back(m);
  }
  return out;
}

oracle::Partition to_oracle(const Partition& p) { return p; }

}  // namespace

TEST_CASE("muc worked examples") {
  // gold {{1,2,3}}, pred {{1,2},{3}}
  PRF1 a = muc({{1, 2, 3}}, {{1, 2}, {3}});
  CHECK(a.recall == doctest::Approx(0.5));
  CHECK(a.precision == doctest::Approx(1.0));
  CHECK(a.f1 == doctest::Approx(2.0 / 3));

  // perfect prediction
  PRF1 b = muc({{1, 2}, {3, 4}}, {{1, 2}, {3, 4}});
  CHECK(b.recall == doctest::Approx(1.0));
  CHECK(b.precision == doctest::Approx(1.0));
  CHECK(b.f1 == doctest::Approx(1.0));

  // gold {{1,2},{3,4}}, pred {{1,2,3,4}}
  PRF1 c = muc({{1, 2}, {3, 4}}, {{1, 2, 3, 4}});
  CHECK(c.recall == doctest::Approx(1.0));
  CHECK(c.precision == doctest::Approx(2.0 / 3));

  // singletons contribute nothing; all-singleton vs all-singleton is 0/0 -> 0
  PRF1 d = muc({{0}, {1}}, {{0}, {1}});
  CHECK(d.recall == 0.0);
  CHECK(d.precision == 0.0);
  CHECK(d.f1 == 0.0);

  CHECK_THROWS_AS(muc({{0, 1}}, {{0, 2}}), std::invalid_argument);
}

TEST_CASE("blanc worked examples") {
  // gold links {(1,2)} over {1,2,3}; pred links all three pairs
  PRF1 a = blanc({{1, 2}, {3}}, {{1, 2, 3}});
  CHECK(a.recall == doctest::Approx(0.5));
  CHECK(a.precision == doctest::Approx(1.0 / 6));
  CHECK(a.f1 == doctest::Approx(0.25));

  // perfect prediction with both link classes nonempty
  PRF1 b = blanc({{1, 2}, {3}}, {{1, 2}, {3}});
  CHECK(b.recall == doctest::Approx(1.0));
  CHECK(b.precision == doctest::Approx(1.0));
  CHECK(b.f1 == doctest::Approx(1.0));

  // pred all singletons, gold one 2-chain over {1,2,3}
  PRF1 c = blanc({{1, 2}, {3}}, {{1}, {2}, {3}});
  CHECK(c.recall == doctest::Approx(0.5));
  CHECK(c.precision == doctest::Approx(1.0 / 3));

  CHECK_THROWS_AS(blanc({{0}}, {{0}}), std::invalid_argument);
}

TEST_CASE("muc and blanc match brute-force references on random partitions") {
  DeterministicRng rng(99);
  for (int trial = 0; trial < 250; ++trial) {
    const int n = rng.uniform_int(2, 10);
    Partition gold = random_partition(n, rng);
    Partition pred = random_partition(n, rng);

    PRF1 m = muc(gold, pred);
    oracle::PRF mo = oracle::muc_reference(to_oracle(gold), to_oracle(pred));
    CHECK(std::abs(m.recall - mo.r) < 1e-9);
    CHECK(std::abs(m.precision - mo.p) < 1e-9);
    CHECK(std::abs(m.f1 - mo.f1) < 1e-9);

    PRF1 b = blanc(gold, pred);
    oracle::PRF bo = oracle::blanc_reference(to_oracle(gold), to_oracle(pred), n);
    CHECK(std::abs(b.recall - bo.r) < 1e-9);
    CHECK(std::abs(b.precision - bo.p) < 1e-9);
    CHECK(std::abs(b.f1 - bo.f1) < 1e-9);
  }
}

TEST_CASE("adding a correct link never lowers MUC recall") {
  DeterministicRng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(3, 9);
    Partition gold = random_partition(n, rng);
    Partition pred;
    for (int m = 0; m < n; ++m) pred.push_back({m});  // all singletons
    double last = muc(gold, pred).recall;
    // merge two mentions that share a gold chain, one link at a time
    for (const auto& chain : gold) {
      if (chain.size() < 2) continue;
      // merge chain[0] and chain[1] in pred
      Partition merged;
      std::vector<int> joined;
      for (const auto& pc : pred) {
        bool hit = false;
        for (int m : pc)
          if (m == chain[0] || m == chain[1]) hit = true;
        if (hit) joined.insert(joined.end(), pc.begin(), pc.end());
        else merged.push_back(pc);
      }
      merged.push_back(joined);
      double now = muc(gold, merged).recall;
      CHECK(now >= last - 1e-12);
      pred = merged;
      last = now;
    }
  }
}

TEST_CASE("iou geometry") {
  Box a = {0.0, 0.0, 0.5, 0.5};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  Box b = {0.6, 0.6, 0.9, 0.9};
  CHECK(iou(a, b) == 0.0);
  // (0,0,2,2) vs (1,1,3,3) scaled into the unit square: intersection 1, union 7
  Box c = {0.0, 0.0, 0.2, 0.2};
  Box d = {0.1, 0.1, 0.3, 0.3};
  CHECK(iou(c, d) == doctest::Approx(1.0 / 7));
  CHECK(iou(c, d) == iou(d, c));

  // degenerate boxes: zero unless bit-identical
  Box line = {0.1, 0.1, 0.1, 0.9};
  CHECK(iou(line, line) == 1.0);
  CHECK(iou(line, a) == 0.0);
}

TEST_CASE("grounding accuracy with the any-box protocol") {
  std::map<int, std::vector<Box>> gold;
  gold[0] = {{0.0, 0.0, 0.4, 0.4}};
  gold[1] = {{0.5, 0.5, 0.9, 0.9}, {0.1, 0.6, 0.3, 0.9}};
  gold[2] = {{0.2, 0.2, 0.6, 0.6}};
  std::vector<bool> pronouns = {false, false, true};

  SUBCASE("all perfect") {
    std::map<int, Box> preds;
    preds[0] = gold[0][0];
    preds[1] = gold[1][0];
    preds[2] = gold[2][0];
    auto acc = grounding_accuracy(preds, gold, pronouns);
    CHECK(acc.noun_phrases == 1.0);
    CHECK(acc.pronouns == 1.0);
    CHECK(acc.overall == 1.0);
  }

  SUBCASE("second gold box counts") {
    std::map<int, Box> preds;
    preds[0] = gold[0][0];
    preds[1] = gold[1][1];  // matches the second box only
    preds[2] = Box{0.0, 0.0, 0.05, 0.05};
    auto acc = grounding_accuracy(preds, gold, pronouns);
    CHECK(acc.noun_phrases == 1.0);
    CHECK(acc.pronouns == 0.0);
    CHECK(acc.overall == doctest::Approx(2.0 / 3));
  }

  SUBCASE("IoU exactly 0.5 is incorrect and missing predictions count wrong") {
    std::map<int, Box> preds;
    preds[0] = Box{0.0, 0.0, 0.2, 0.4};  // IoU exactly 0.5 with gold[0]
    // mention 1 and 2 have no prediction
    REQUIRE(iou(preds[0], gold[0][0]) == doctest::Approx(0.5));
    auto acc = grounding_accuracy(preds, gold, pronouns);
    CHECK(acc.noun_phrases == 0.0);
    CHECK(acc.pronouns == 0.0);
    CHECK(acc.overall == 0.0);
  }
}
