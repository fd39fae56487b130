#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace engram;
using namespace testkit;

namespace {

SemanticMemory memory(std::string id, std::vector<std::string> entities, Instant created = t0()) {
  SemanticMemory m;
  m.id = std::move(id);
  m.gist = "gist of " + m.id;
  m.embedding = hash_embed(m.gist, 256, 0);
  m.source_ids = {"src-" + m.id};
  m.entities = std::move(entities);
  m.created_at = created;
  m.last_accessed = created;
  return m;
}

/// A-B-C chain with a memory on each link and one on C alone.
SemanticGraph chain() {
  SemanticGraph g;
  g.insert_memory(memory("ab", {"A", "B"}), t0());
  g.insert_memory(memory("bc", {"B", "C"}), t0());
  g.insert_memory(memory("c", {"C"}), t0());
  g.recompute_importance();
  return g;
}

}  // namespace

TEST(Entities, Examples) {
  EXPECT_EQ(extract_entities("I met Alice in Paris"), (std::vector<std::string>{"Alice", "Paris"}));
  EXPECT_TRUE(extract_entities("").empty());
  EXPECT_TRUE(extract_entities("The cat sat").empty());
}

TEST(Entities, RunsMentionsAndRefs) {
  EXPECT_EQ(extract_entities("Ping @bob about #1234 on Payment Gateway, then Redis."),
            (std::vector<std::string>{"Ping", "@bob", "#1234", "Payment Gateway", "Redis"}));
  EXPECT_EQ(extract_entities("Kafka broke. kafka again"), std::vector<std::string>{"Kafka"});
}

TEST(Entities, ThrowingExtractorFallsBack) {
  EntityExtractor bad = [](std::string_view) -> std::vector<std::string> { throw std::runtime_error("x"); };
  EXPECT_EQ(extract_entities("Alice", bad), std::vector<std::string>{"Alice"});
  EntityExtractor fixed = [](std::string_view) { return std::vector<std::string>{"Z"}; };
  EXPECT_EQ(extract_entities("Alice", fixed), std::vector<std::string>{"Z"});
}

TEST(Activation, Examples) {
  EXPECT_DOUBLE_EQ(activation(t0(), at_h(168), 168, 48), 0.5);
  EXPECT_NEAR(activation(t0(), t0(), 168, 48), 1.0 / (1.0 + std::exp(3.5)), 1e-15);
  EXPECT_NEAR(activation(t0(), t0(), 168, 48), 0.0293, 1e-4);
  EXPECT_GT(activation(t0(), at_h(336), 168, 48), 0.9);
  EXPECT_NEAR(activation(t0(), at_h(336), 168, 48), 0.9707, 1e-4);
  EXPECT_THROW(activation(at_h(1), t0(), 168, 48), Error);
}

TEST(Activation, StrictlyIncreasingAndSymmetric) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    // whole minutes, so the instants carry no rounding
    const double d = double(rng.index(168 * 60)) / 60;
    EXPECT_NEAR(activation(t0(), at_h(168 + d), 168, 48) + activation(t0(), at_h(168 - d), 168, 48), 1.0, 1e-12);
    const double t = double(rng.index(600 * 60)) / 60;
    EXPECT_LT(activation(t0(), at_h(t), 168, 48), activation(t0(), at_h(t + 0.5), 168, 48));
    // depends only on elapsed time
    const double shift = double(rng.index(100000));
    EXPECT_DOUBLE_EQ(activation(at_h(shift), at_h(shift + t), 168, 48), activation(t0(), at_h(t), 168, 48));
  }
}

TEST(Gate, Examples) {
  StoreConfig cfg;
  auto m = memory("m", {});
  EXPECT_TRUE(is_explicitly_retrievable(m, at_h(169), cfg));
  EXPECT_FALSE(is_explicitly_retrievable(m, at_h(24), cfg));
  EXPECT_NEAR(activation(t0(), at_h(24), 168, 48), 0.047, 1e-3);
  cfg.maturation_enabled = false;
  EXPECT_TRUE(is_explicitly_retrievable(m, t0(), cfg));
}

TEST(Priming, Weights) {
  StoreConfig cfg;
  auto m = memory("m", {"Kafka"});
  const double a0 = activation(t0(), t0(), 168, 48);
  EXPECT_DOUBLE_EQ(priming_weight(m, t0(), cfg), a0);
  EXPECT_NEAR(1.0 + cfg.priming_gamma * a0, 1.003, 1e-3);
  EXPECT_EQ(priming_weight(m, at_h(200), cfg), 0.0);
  cfg.maturation_enabled = false;
  EXPECT_EQ(priming_weight(m, t0(), cfg), 0.0);
}

TEST(Priming, BoostsOnlyEpisodicHitsSharingAnEntity) {
  StoreState s(StoreConfig{});
  HashEmbedder emb;
  ingest(s, event("k", t0(), "Kafka consumer lag is growing"), emb);
  ingest(s, event("r", t0(), "Redis consumer lag is growing"), emb);
  s.graph.insert_memory(memory("silent", {"Kafka"}, t0()), t0());
  const auto hits = hybrid_retrieve(s, "consumer lag", emb, t0());
  ASSERT_EQ(hits.size(), 2u);
  for (const auto& h : hits) {
    if (h.memory_id == "k") EXPECT_NEAR(h.priming, 1.0 + 0.1 * activation(t0(), t0(), 168, 48), 1e-15);
    else EXPECT_EQ(h.priming, 1.0);
    EXPECT_NE(h.tier, Tier::graph);
  }
}

TEST(Traverse, SeedMemoryAtDistanceZero) {
  SemanticGraph g;
  g.insert_memory(memory("m", {"A"}), t0());
  EXPECT_EQ(g.traverse({"A"}, 1), (std::vector<TraversalHit>{{"m", 0}}));
  EXPECT_TRUE(g.traverse({"Nobody"}, 2).empty());
}

TEST(Traverse, ChainHopBound) {
  SemanticGraph g;
  g.add_co_occurrence("A", "B", 1, t0());
  g.add_co_occurrence("B", "C", 1, t0());
  g.insert_memory(memory("onC", {"C"}), t0());
  EXPECT_EQ(g.traverse({"A"}, 2), (std::vector<TraversalHit>{{"onC", 2}}));
  EXPECT_TRUE(g.traverse({"A"}, 1).empty());
  EXPECT_THROW(g.traverse({"A"}, 0), Error);
}

TEST(Traverse, MatchesBruteForceReachability) {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    SemanticGraph g;
    const int ents = 12;
    for (int m = 0; m < 15; ++m) {
      std::vector<std::string> es;
      const auto n = rng.range(1, 3);
      for (std::size_t k = 0; k < n; ++k) es.push_back("E" + std::to_string(rng.index(ents)));
      g.insert_memory(memory("m" + std::to_string(m), es), t0());
    }
    const std::vector<std::string> seeds{"E" + std::to_string(rng.index(ents))};
    const int hops = 1 + int(rng.index(3));
    const auto dist = oracle::entity_distances(g, seeds, hops);
    std::map<std::string, int> expect;
    for (const auto& [id, m] : g.memories())
      for (const auto& e : m.entities)
        if (auto it = dist.find(case_fold(e)); it != dist.end()) {
          auto [slot, fresh] = expect.try_emplace(id, it->second);
          if (!fresh) slot->second = std::min(slot->second, it->second);
        }
    std::map<std::string, int> got;
    for (const auto& h : g.traverse(seeds, hops)) EXPECT_TRUE(got.emplace(h.memory_id, h.hops).second);
    EXPECT_EQ(got, expect);
  }
}

TEST(Graph, CoOccurrenceAndNeighbors) {
  auto g = chain();
  EXPECT_EQ(g.entity_count(), 3u);
  EXPECT_EQ(g.memory_count(), 3u);
  const auto nb = g.neighbors("b");
  ASSERT_EQ(nb.size(), 2u);
  EXPECT_EQ(nb[0].first, "A");
  EXPECT_EQ(nb[1].first, "C");
  EXPECT_TRUE(g.neighbors("zzz").empty());
  EXPECT_TRUE(g.erase_memory("ab"));
  EXPECT_EQ(g.neighbors("A").size(), 0u);
  EXPECT_FALSE(g.erase_memory("ab"));
}

TEST(Graph, EntityImportanceIsNormalizedDegree) {
  auto g = chain();
  // B: 2 mentions + 2 neighbours; C: 2 + 1; A: 1 + 1
  EXPECT_DOUBLE_EQ(g.entity_importance("B"), 1.0);
  EXPECT_DOUBLE_EQ(g.entity_importance("C"), 0.75);
  EXPECT_DOUBLE_EQ(g.entity_importance("A"), 0.5);
  SemanticGraph lone;
  lone.insert_memory(memory("x", {"Solo"}), t0());
  lone.recompute_importance();
  EXPECT_EQ(lone.entity_importance("solo"), 1.0);
}

TEST(Graph, ImportanceMatchesDegreeOracle) {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    SemanticGraph g;
    std::vector<std::vector<std::string>> mems;
    for (int m = 0; m < 12; ++m) {
      std::vector<std::string> es;
      for (std::size_t k = 0, n = rng.range(1, 4); k < n; ++k) es.push_back("E" + std::to_string(rng.index(8)));
      g.insert_memory(memory("m" + std::to_string(m), es), t0());
      mems.push_back(es);
    }
    g.recompute_importance();
    // degree = memories mentioning + distinct co-occurring entities
    std::map<std::string, std::set<std::string>> mention, nb;
    for (std::size_t m = 0; m < mems.size(); ++m)
      for (const auto& a : mems[m]) {
        mention[case_fold(a)].insert("m" + std::to_string(m));
        for (const auto& b : mems[m])
          if (case_fold(a) != case_fold(b)) nb[case_fold(a)].insert(case_fold(b));
      }
    double mx = 0;
    for (const auto& [k, _] : g.entities()) mx = std::max(mx, double(mention[k].size() + nb[k].size()));
    for (const auto& [k, e] : g.entities()) {
      const double deg = double(mention[k].size() + nb[k].size());
      EXPECT_DOUBLE_EQ(e.importance, deg / mx);
      // scaling every degree by c leaves the ratio alone
      EXPECT_DOUBLE_EQ(e.importance, (3.0 * deg) / (3.0 * mx));
      EXPECT_GE(e.importance, 0.0);
      EXPECT_LE(e.importance, 1.0);
    }
  }
}

TEST(Graph, MaturationTickRefreshesActivation) {
  StoreConfig cfg;
  SemanticGraph g;
  g.insert_memory(memory("m", {"A"}), t0());
  maturation_tick(g, at_h(168), cfg);
  EXPECT_DOUBLE_EQ(g.find_memory("m")->activation_strength, 0.5);
  cfg.maturation_enabled = false;
  maturation_tick(g, at_h(1), cfg);
  EXPECT_EQ(g.find_memory("m")->activation_strength, 1.0);
}
