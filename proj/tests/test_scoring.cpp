#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace engram;
using namespace testkit;

TEST(Recency, ZeroElapsed) { EXPECT_EQ(recency_factor(t0(), t0(), 0.001), 1.0); }

TEST(Recency, HalfLife) { EXPECT_NEAR(recency_factor(t0(), at_h(693.147), 0.001), 0.5, 1e-6); }

TEST(Recency, ThousandHours) { EXPECT_NEAR(recency_factor(t0(), at_h(1000), 0.001), std::exp(-1.0), 1e-5); }

TEST(Recency, NegativeElapsedRejected) {
  try {
    recency_factor(at_h(1), t0(), 0.001);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NegativeElapsed);
  }
}

TEST(Decay, Examples) {
  EXPECT_EQ(decay_importance(0.7, t0(), t0(), 0.001), 0.7);
  EXPECT_NEAR(decay_importance(1.0, t0(), at_h(693.147), 0.001), 0.5, 1e-6);
  EXPECT_NEAR(decay_importance(0.8, t0(), at_h(2000), 0.001), 0.8 * std::exp(-2.0), 1e-12);
  EXPECT_NEAR(decay_importance(0.8, t0(), at_h(2000), 0.001), 0.10827, 1e-5);
}

TEST(Decay, MultiplicativeOverTimeSplits) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    // whole minutes, so the instants carry no rounding
    const double i0 = rng.uniform01(), h1 = double(rng.index(300000)) / 60, h2 = double(rng.index(300000)) / 60;
    const double once = decay_importance(i0, t0(), at_h(h1 + h2), 0.001);
    const double twice = decay_importance(decay_importance(i0, t0(), at_h(h1), 0.001), t0(), at_h(h2), 0.001);
    EXPECT_NEAR(once, twice, 1e-12);
  }
}

TEST(Frequency, NoPriorsAndThreePriors) {
  StoreState s(small_config());
  s.records.insert(record("a", axis(16, 0), t0()));
  EXPECT_EQ(frequency_factor(s.records[0], s), 1.0);
  s.records.insert(record("b", axis(16, 0), at_h(1)));
  s.records.insert(record("c", axis(16, 0), at_h(2)));
  s.records.insert(record("d", axis(16, 0), at_h(3)));
  EXPECT_EQ(frequency_factor(*s.records.find("d"), s), 0.25);
  EXPECT_EQ(frequency_factor(*s.records.find("a"), s), 1.0);  // later copies don't count
}

TEST(Frequency, PlantedDuplicatesMatchPairwiseScan) {
  Rng rng(4);
  StoreState s(small_config(64));
  std::vector<std::vector<double>> vecs;
  for (int i = 0; i < 60; ++i) {
    auto v = (i % 3 == 0 || vecs.empty()) ? random_unit(rng, 64) : at_cosine(vecs[rng.index(vecs.size())], 0.9, rng);
    vecs.push_back(v);
    s.records.insert(record("r" + std::to_string(i), v, at_h(i)));
  }
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    int n = 0;
    for (std::size_t j = 0; j < i; ++j) n += oracle::dot(vecs[i], vecs[j]) >= s.config.near_dedup_threshold;
    EXPECT_DOUBLE_EQ(frequency_factor(s.records[i], s), 1.0 / (1 + n));
  }
}

TEST(Surprise, Examples) {
  auto e = normalize(axis(8, 0));
  EXPECT_EQ(surprise_factor(e, std::nullopt), 1.0);
  EXPECT_NEAR(surprise_factor(e, e), 0.0, 1e-12);
  EXPECT_NEAR(surprise_factor(e, normalize(axis(8, 1))), 1.0 - oracle::dot(axis(8, 0), axis(8, 1)), 1e-12);
}

TEST(Surprise, CentroidIsRunningMean) {
  SurpriseState st;
  EXPECT_FALSE(st.centroid());
  st.update(normalize(axis(8, 0)));
  st.update(normalize(axis(8, 1)));
  auto c = st.centroid();
  ASSERT_TRUE(c);
  EXPECT_NEAR(c->values()[0], std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(c->values()[1], std::sqrt(0.5), 1e-12);
}

TEST(EntitySalience, Examples) {
  SemanticGraph g;
  EXPECT_EQ(entity_salience_factor({}, g), 0.0);
  // Degrees 1, 2, 4 over max 4 would not give round numbers; build the
  // graph then overwrite importance through restore.
  std::map<std::string, EntityNode> ents{{"a", {"A", 0.2, t0(), t0()}}, {"b", {"B", 0.9, t0(), t0()}},
                                         {"c", {"C", 0.5, t0(), t0()}}, {"d", {"D", 0.7, t0(), t0()}}};
  g = SemanticGraph::restore(ents, {}, {});
  EXPECT_EQ(entity_salience_factor({"D"}, g), 0.7);
  EXPECT_EQ(entity_salience_factor({"A", "B", "C"}, g), 0.9);
  EXPECT_EQ(entity_salience_factor({"Unknown"}, g), 0.0);
}

TEST(Outcome, Mapping) {
  auto e = event("x", t0());
  EXPECT_EQ(outcome_factor(e), 0.0);
  e.metadata["outcome"] = "success";
  EXPECT_EQ(outcome_factor(e), 1.0);
  e.metadata["outcome"] = "failure";
  EXPECT_EQ(outcome_factor(e), 0.25);
}

TEST(Outcome, PlantedFailureSurvivesPruneCutoff) {
  // Ten records identical in every factor except outcome: one failure, the
  // rest silent. Brute-force ranking puts the failure above the cut.
  auto w = SignalWeights::five_factor_defaults();
  std::vector<ScoredItem> items;
  for (int i = 0; i < 10; ++i) {
    std::map<std::string, double> f{{factor::recency, 0.5}, {factor::frequency, 1.0}, {factor::surprise, 0.3},
                                    {factor::entity_salience, 0.2}, {factor::outcome, i == 7 ? 0.25 : 0.0}};
    items.push_back({"r" + std::to_string(i), composite_importance(f, w).composite, at_h(i)});
  }
  const auto p = classify(items);
  for (auto k : p.prune) EXPECT_NE(k, 7u);
  int above = 0;
  for (const auto& it : items) above += it.composite > items[7].composite;
  EXPECT_EQ(above, 0);
}

TEST(Composite, Examples) {
  const auto five = SignalWeights::five_factor_defaults();
  std::map<std::string, double> ones;
  for (const auto& n : factor_names(WeightMode::five_factor)) ones[n] = 1.0;
  EXPECT_NEAR(composite_importance(ones, five).composite, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(composite_importance({{factor::recency, 1.0}}, five).composite, 0.25);
  std::map<std::string, double> halves;
  for (const auto& n : factor_names(WeightMode::calibrated_four)) halves[n] = 0.5;
  EXPECT_NEAR(composite_importance(halves, SignalWeights::calibrated_four_defaults()).composite, 0.5, 1e-12);
}

TEST(Composite, WeightsMustBeConvex) {
  auto w = SignalWeights::five_factor_defaults();
  w.weights[factor::recency] = 0.3;
  EXPECT_THROW(composite_importance({}, w), Error);
  w = SignalWeights::five_factor_defaults();
  w.weights.erase(factor::outcome);
  EXPECT_THROW(composite_importance({}, w), Error);
}

TEST(Composite, MonotoneInEveryFactor) {
  Rng rng(8);
  for (auto mode : {WeightMode::five_factor, WeightMode::calibrated_four}) {
    const auto w = mode == WeightMode::five_factor ? SignalWeights::five_factor_defaults()
                                                   : SignalWeights::calibrated_four_defaults();
    for (int i = 0; i < 300; ++i) {
      std::map<std::string, double> f;
      for (const auto& n : factor_names(mode)) f[n] = rng.uniform01();
      const double base = composite_importance(f, w).composite;
      for (const auto& n : factor_names(mode)) {
        auto g = f;
        g[n] = std::min(1.0, g[n] + rng.uniform01() * 0.5);
        EXPECT_GE(composite_importance(g, w).composite, base);
      }
    }
  }
}

TEST(Classify, TenDistinct) {
  std::vector<ScoredItem> items;
  for (int i = 0; i < 10; ++i) items.push_back({"r" + std::to_string(i), i / 10.0, t0()});
  const auto p = classify(items);
  EXPECT_EQ(p.promote.size(), 2u);
  EXPECT_EQ(p.retain.size(), 6u);
  EXPECT_EQ(p.prune.size(), 2u);
  EXPECT_EQ(p.promote, (std::vector<std::size_t>{9, 8}));
  EXPECT_EQ(p.prune, (std::vector<std::size_t>{1, 0}));
}

TEST(Classify, SingleRecordPromotes) {
  std::vector<ScoredItem> items{{"x", 0.1, t0()}};
  const auto p = classify(items);
  EXPECT_EQ(p.promote.size(), 1u);
  EXPECT_TRUE(p.prune.empty());
}

TEST(Classify, EmptyBatchRejected) {
  try {
    classify(std::vector<ScoredItem>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyBatch);
  }
}

TEST(Classify, EqualScoresAreDeterministic) {
  std::vector<ScoredItem> items;
  for (int i = 0; i < 5; ++i) items.push_back({"r" + std::to_string(4 - i), 0.5, at_h(i % 2)});
  const auto a = classify(items), b = classify(items);
  EXPECT_EQ(a.promote, b.promote);
  EXPECT_EQ(a.retain, b.retain);
  EXPECT_EQ(a.prune, b.prune);
  // older first, then id
  EXPECT_EQ(a.promote, (std::vector<std::size_t>{4}));
}

TEST(Classify, ScaleFree) {
  Rng rng(12);
  for (int n = 0; n < 200; ++n) {
    std::vector<ScoredItem> items;
    const auto size = rng.range(1, 60);
    for (std::size_t i = 0; i < size; ++i) items.push_back({"r" + std::to_string(i), rng.uniform01() * 0.5, at_h(double(rng.index(5)))});
    auto scaled = items;
    const double c = 0.1 + rng.uniform01() * 1.9;
    for (auto& it : scaled) it.composite *= c;
    const auto a = classify(items), b = classify(scaled);
    EXPECT_EQ(a.promote, b.promote);
    EXPECT_EQ(a.prune, b.prune);
  }
}

TEST(Authority, LowAuthorityAutomationDownweighted) {
  StoreConfig cfg;
  auto e = event("ci", t0());
  e.actor = Actor::automation;
  e.metadata["authority"] = "0.2";
  EXPECT_EQ(authority_multiplier(e, 0.1, cfg), cfg.authority_downweight);
  EXPECT_EQ(authority_multiplier(e, 0.95, cfg), 1.0);  // surprising enough to be an alert
  e.metadata["authority"] = "0.9";
  EXPECT_EQ(authority_multiplier(e, 0.1, cfg), 1.0);
  e.actor = Actor::user;
  e.metadata["authority"] = "0.0";
  EXPECT_EQ(authority_multiplier(e, 0.1, cfg), 1.0);
}

TEST(Calibrated, SubstantiveOutscoresFillerOnCorpus) {
  const auto corpus = generate_corpus(similarity_corpus_spec(), 42);
  StoreConfig cfg;
  cfg.signal_weights = SignalWeights::calibrated_four_defaults();
  HashEmbedder emb(cfg.dimension, cfg.embed_seed);
  StoreState s(cfg);
  for (const auto& sess : corpus.sessions)
    for (const auto& t : sess.turns) {
      MemoryEvent e = event(sess.session_id + "-" + std::to_string(t.position), t.ts, t.text, sess.session_id, "turn");
      e.metadata["label"] = std::string(to_string(t.label));
      ingest(s, e, emb);
    }
  run_consolidation(s, {ConsolidationMode::dedup, latest_timestamp(s), {}});
  double sub = 0, fil = 0;
  int ns = 0, nf = 0;
  for (const auto& r : s.records) {
    const double c = r.score_breakdown.at("composite");
    if (r.event.meta("label") == "substantive") {
      sub += c;
      ++ns;
    } else {
      fil += c;
      ++nf;
    }
  }
  ASSERT_GT(ns, 0);
  ASSERT_GT(nf, 0);
  EXPECT_GT(sub / ns, fil / nf);
}
