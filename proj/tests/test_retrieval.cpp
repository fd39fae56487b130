#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace engram;
using namespace testkit;

namespace {

/// 200 records over a 20-session stream, consolidated, with gists back-dated
/// so that some are mature and some still silent at `now`.
struct Fixture {
  StoreState store;
  Instant now;
};

Fixture seeded_store(std::uint64_t seed) {
  auto m = generate_stream({.events = 200, .sessions = 20, .session_spacing_h = 12}, seed);
  Fixture f{consolidated_store(m.events), {}};
  f.now = add_hours(latest_timestamp(f.store), 24);
  Rng rng(seed);
  std::vector<SemanticMemory> mems;
  for (const auto& [id, mem] : f.store.graph.memories()) {
    auto c = mem;
    c.created_at = add_hours(f.now, -400.0 * rng.uniform01());
    mems.push_back(c);
  }
  f.store.graph = SemanticGraph::restore(f.store.graph.entities(), mems, f.store.graph.co_occurrences());
  return f;
}

}  // namespace

TEST(Retrieve, IdenticalQueryRanksFirst) {
  StoreState s(StoreConfig{});
  HashEmbedder emb;
  ingest(s, event("a", t0(), "Checkout returns 502 after the Redis upgrade"), emb);
  ingest(s, event("b", t0(), "Dark mode toggle is misaligned on settings page"), emb);
  const auto hits = hybrid_retrieve(s, "Checkout returns 502 after the Redis upgrade", emb, t0());
  ASSERT_FALSE(hits.empty());
  EXPECT_EQ(hits[0].memory_id, "a");
  EXPECT_NEAR(hits[0].similarity, 1.0, 1e-12);
}

TEST(Retrieve, TimeFilterExcludingEverything) {
  StoreState s(StoreConfig{});
  HashEmbedder emb;
  ingest(s, event("a", at_h(5), "text"), emb);
  RetrievalOptions o;
  o.as_of = at_h(1);
  EXPECT_TRUE(hybrid_retrieve(s, "text", emb, at_h(10), o).empty());
}

TEST(Retrieve, EpisodicTopKMatchesSimilaritySort) {
  const auto f = seeded_store(3);
  HashEmbedder emb;
  const auto q = emb.embed("memory leak in the parser module after upgrade");
  for (Tier t : {Tier::hot, Tier::warm}) {
    const auto got = episodic_search(q, f.store, t, 10, f.now);
    std::vector<std::pair<double, std::string>> ref;
    for (const auto& r : f.store.records)
      if (r.active() && r.state != RecordState::quarantined && r.tier == t)
        ref.emplace_back(-oracle::dot(oracle::raw(q), oracle::raw(r.embedding)), r.id());
    std::sort(ref.begin(), ref.end());
    ASSERT_EQ(got.size(), std::min<std::size_t>(10, ref.size()));
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_DOUBLE_EQ(got[i].similarity, -ref[i].first);
  }
}

TEST(Semantic, SilentNodesHidden) {
  StoreState s(StoreConfig{});
  SemanticMemory m;
  m.id = "sm";
  m.gist = "Kafka lag";
  m.embedding = hash_embed("Kafka lag", 256, 0);
  m.source_ids = {"x"};
  m.created_at = t0();
  s.graph.insert_memory(m, t0());
  EXPECT_TRUE(semantic_search(m.embedding, s, 5, t0()).empty());
  s.config.maturation_enabled = false;
  EXPECT_EQ(semantic_search(m.embedding, s, 5, t0()).size(), 1u);
  s.config.maturation_enabled = true;
  const auto hits = hybrid_retrieve(s, m.embedding, {}, at_h(200));
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].tier, Tier::graph);
}

TEST(Merge, NewerWinsAtEqualSimilarity) {
  StoreState s(StoreConfig{});
  HashEmbedder emb;
  ingest(s, event("old", t0(), "same words here"), emb);
  ingest(s, event("new", at_h(99), "same words here"), emb);
  const auto hits = hybrid_retrieve(s, "same words here", emb, at_h(100));
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].memory_id, "new");
  EXPECT_GT(hits[0].score, hits[1].score);
}

TEST(Merge, GistDroppedWhenSourcePresent) {
  StoreState s(StoreConfig{});
  s.config.maturation_enabled = false;
  HashEmbedder emb;
  ingest(s, event("a", t0(), "Alice fixed Kafka lag in PaymentService"), emb);
  run_consolidation(s, {ConsolidationMode::dedup, t0(), {}});
  ASSERT_EQ(s.graph.memory_count(), 1u);
  auto hits = hybrid_retrieve(s, "Kafka lag", emb, t0());
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].memory_id, "a");
  RetrievalOptions graph_only;
  graph_only.tiers = {Tier::graph};
  hits = hybrid_retrieve(s, "Kafka lag", emb, t0(), graph_only);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].tier, Tier::graph);
}

TEST(Merge, TierPriorityOnEqualScores) {
  StoreConfig cfg = small_config(8);
  cfg.maturation_enabled = false;
  cfg.recency_boost_beta = 0.0;
  StoreState s(cfg);
  s.records.insert(record("w", axis(8, 0), t0(), RecordState::retained));
  auto h = record("h", axis(8, 0), t0(), RecordState::pending);
  s.records.insert(h);
  SemanticMemory m;
  m.id = "g";
  m.embedding = normalize(axis(8, 0));
  m.source_ids = {"elsewhere"};
  m.created_at = t0();
  s.graph.insert_memory(m, t0());
  const auto hits = hybrid_retrieve(s, normalize(axis(8, 0)), {}, t0());
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].tier, Tier::hot);
  EXPECT_EQ(hits[1].tier, Tier::warm);
  EXPECT_EQ(hits[2].tier, Tier::graph);
}

TEST(Merge, RecencyBoostKeepsSimilarityOrderAtEqualAge) {
  Rng rng(4);
  StoreConfig cfg = small_config(32);
  StoreState s(cfg);
  auto q = random_unit(rng, 32);
  for (int i = 0; i < 30; ++i) s.records.insert(record("r" + std::to_string(i), at_cosine(q, rng.uniform01(), rng), t0()));
  RetrievalOptions o;
  o.k = 30;
  const auto hits = hybrid_retrieve(s, normalize(q), {}, at_h(10), o);
  for (std::size_t i = 1; i < hits.size(); ++i) EXPECT_GE(hits[i - 1].similarity, hits[i].similarity);
}

TEST(Merge, FullRankingMatchesIndependentScorer) {
  HashEmbedder emb;
  Rng rng(99);
  const char* words[] = {"parser", "leak", "crash", "Kafka", "Redis", "timeout", "deploy", "module", "CI", "flaky",
                         "regression", "checkout", "PaymentService", "latency", "cache"};
  for (std::uint64_t seed : {1u, 2u}) {
    const auto f = seeded_store(seed);
    for (int qn = 0; qn < 25; ++qn) {
      std::string text;
      for (std::size_t w = 0, n = rng.range(2, 6); w < n; ++w) text += std::string(words[rng.index(15)]) + " ";
      const auto q = emb.embed(text);
      const auto ents = extract_entities(text);
      const auto got = hybrid_retrieve(f.store, q, ents, f.now);
      const auto ref = oracle::retrieve(f.store, q, ents, f.now, 10);
      ASSERT_EQ(got.size(), ref.size()) << text;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        EXPECT_EQ(got[i].memory_id, ref[i].id) << text << " @" << i;
        EXPECT_NEAR(got[i].score, ref[i].score, 1e-12);
      }
    }
  }
}

TEST(Merge, NoRepeatedSourcesAndNoSilentHits) {
  HashEmbedder emb;
  const auto f = seeded_store(7);
  Rng rng(7);
  for (int qn = 0; qn < 30; ++qn) {
    const auto& r = f.store.records[rng.index(f.store.records.size())];
    const auto hits = hybrid_retrieve(f.store, r.event.content.empty() ? "status" : r.event.content, emb, f.now);
    std::multiset<std::string> sources;
    for (const auto& h : hits) {
      if (h.tier == Tier::graph) {
        const auto* m = f.store.graph.find_memory(h.memory_id);
        EXPECT_GE(activation(m->created_at, f.now, 168, 48), 0.5);
        sources.insert(m->source_ids.begin(), m->source_ids.end());
      } else {
        const auto* e = f.store.records.find(h.memory_id);
        sources.insert(e->id());
        sources.insert(e->merged_from.begin(), e->merged_from.end());
      }
    }
    for (const auto& id : sources) EXPECT_EQ(sources.count(id), 1u) << id;
  }
}

// ---------------------------------------------------------------------------
// Lability and reconsolidation

TEST(Lability, SixtyMinuteWindowAndAccessCount) {
  StoreState s(StoreConfig{});
  HashEmbedder emb;
  ingest(s, event("a", t0(), "text"), emb);
  const auto until = open_lability(s, "a", at_h(1));
  EXPECT_EQ(until - at_h(1), std::chrono::minutes(60));
  EXPECT_EQ(s.records[0].access_count, 1u);
  const auto again = open_lability(s, "a", at_h(1.5));
  EXPECT_EQ(again - at_h(1.5), std::chrono::minutes(60));
  EXPECT_EQ(s.records[0].access_count, 2u);
  EXPECT_THROW(open_lability(s, "nope", t0()), Error);
}

TEST(Reconsolidate, ZeroAlphaIsNoOp) {
  StoreState s(StoreConfig{});
  HashEmbedder emb;
  ingest(s, event("a", t0(), "The deploy uses blue green"), emb);
  open_lability(s, "a", t0());
  const auto before = s;
  const auto res = reconsolidate(s, "a", {"Blue green is gone", 0.0, 0.0, 1.0}, emb, t0());
  EXPECT_EQ(res.alpha, 0.0);
  EXPECT_FALSE(res.changed);
  EXPECT_EQ(s, before);
  // restating the stored text: severity is 1 - cos, a rounding hair above 0
  const auto same = reconsolidate(s, "a", {"The deploy uses blue green", 0.0, std::nullopt, std::nullopt}, emb, t0());
  EXPECT_LT(same.alpha, 1e-9);
  EXPECT_FALSE(same.changed);
  EXPECT_EQ(s, before);
}

TEST(Reconsolidate, FullReplacementAtExtremes) {
  StoreConfig cfg = small_config(8);
  StoreState s(cfg);
  TableEmbedder emb(8, {{"old", axis(8, 0)}, {"new", axis(8, 1)}});
  ingest(s, event("a", t0(), "old"), emb);
  // ancient memory: recency factor ~ 0
  const Instant now = at_h(1e6);
  open_lability(s, "a", now);
  const auto res = reconsolidate(s, "a", {"new", 1.0, std::nullopt, std::nullopt}, emb, now);
  EXPECT_NEAR(res.alpha, 1.0, 1e-12);
  EXPECT_TRUE(res.replaced);
  EXPECT_EQ(s.records[0].event.content, "new");
  EXPECT_NEAR(cosine_similarity(s.records[0].embedding, normalize(axis(8, 1))), 1.0, 1e-12);
}

TEST(Reconsolidate, PartialBlendAppendsAmendment) {
  StoreConfig cfg = small_config(8);
  StoreState s(cfg);
  TableEmbedder emb(8, {{"old", axis(8, 0)}, {"new", axis(8, 1)}});
  ingest(s, event("a", t0(), "old"), emb);
  open_lability(s, "a", t0());
  const auto res = reconsolidate(s, "a", {"new", 0.2, 0.3, 1.0}, emb, add_minutes(t0(), 10));
  const double alpha = 0.5 * 0.2 + 0.3 * 0.3 + 0.2 * 0.0;
  EXPECT_NEAR(res.alpha, alpha, 1e-15);
  EXPECT_FALSE(res.replaced);
  EXPECT_EQ(s.records[0].event.content, "old");
  ASSERT_EQ(s.records[0].amendments.size(), 1u);
  EXPECT_EQ(s.records[0].amendments[0].content, "new");
  std::vector<double> v{1 - alpha, alpha, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(s.records[0].embedding, normalize(v));
}

TEST(Reconsolidate, SeverityDefaultsToEmbeddingDistance) {
  StoreConfig cfg = small_config(8);
  StoreState s(cfg);
  TableEmbedder emb(8, {{"old", axis(8, 0)}, {"new", {0.6, 0.8, 0, 0, 0, 0, 0, 0}}});
  ingest(s, event("a", t0(), "old"), emb);
  open_lability(s, "a", t0());
  const auto res = reconsolidate(s, "a", {"new", 0.0, std::nullopt, 1.0}, emb, t0());
  EXPECT_NEAR(res.alpha, 0.3 * (1 - 0.6), 1e-12);
}

TEST(Reconsolidate, ExpiredWindowRejectedAndUntouched) {
  StoreState s(StoreConfig{});
  HashEmbedder emb;
  ingest(s, event("a", t0(), "text"), emb);
  open_lability(s, "a", t0());
  const auto before = s;
  try {
    reconsolidate(s, "a", {"other", 1.0, 1.0, 0.0}, emb, add_minutes(t0(), 60) + std::chrono::seconds(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LabilityExpired);
  }
  EXPECT_EQ(snapshot_json(s).dump(), snapshot_json(before).dump());
  EXPECT_THROW(reconsolidate(s, "ghost", {"x", 1, 1, 1}, emb, t0()), Error);
}

TEST(Reinforce, SuccessAndFailure) {
  StoreState s(small_config());
  s.records.insert(record("a", axis(16, 0), t0(), RecordState::retained, 0.9));
  s.records.insert(record("b", axis(16, 1), t0(), RecordState::retained, 0.98));
  s.records.insert(record("c", axis(16, 2), t0(), RecordState::retained, 0.4));
  reinforce(s, "a", true, at_h(1));
  reinforce(s, "b", true, at_h(1));
  reinforce(s, "c", false, at_h(1));
  EXPECT_NEAR(s.records.find("a")->importance, 0.95, 1e-12);
  EXPECT_EQ(s.records.find("b")->importance, 1.0);
  EXPECT_EQ(s.records.find("c")->importance, 0.4);
  EXPECT_TRUE(s.records.find("c")->error_signal());
}

TEST(UpdateStrength, Formula) {
  StoreConfig cfg;
  EXPECT_EQ(update_strength(0, 0, 1, cfg), 0.0);
  EXPECT_NEAR(update_strength(1, 1, 0, cfg), 1.0, 1e-15);
  EXPECT_NEAR(update_strength(0.4, 0.5, 0.5, cfg), 0.2 + 0.15 + 0.1, 1e-15);
  EXPECT_THROW(update_strength(1.5, 0, 0, cfg), Error);
}
