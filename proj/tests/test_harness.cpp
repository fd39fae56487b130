#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace engram;
using namespace testkit;

namespace {

const StreamManifest& small_stream() {
  static const auto m = generate_stream({.events = 240, .sessions = 6}, 11);
  return m;
}

}  // namespace

TEST(Stream, ZeroRatesMeansNoFlags) {
  const auto m = generate_stream({.events = 100, .sessions = 4, .duplicate_rate = 0, .future_referenced_rate = 0}, 1);
  EXPECT_EQ(m.count_duplicates(), 0u);
  EXPECT_EQ(m.count_future_referenced(), 0u);
  for (const auto& [_, gt] : m.truth) EXPECT_FALSE(gt.substantive);
}

TEST(Stream, SameSeedSameStream) {
  EXPECT_EQ(generate_stream({.events = 300, .sessions = 5}, 4), generate_stream({.events = 300, .sessions = 5}, 4));
  EXPECT_NE(to_json(generate_stream({.events = 300, .sessions = 5}, 4)).dump(),
            to_json(generate_stream({.events = 300, .sessions = 5}, 5)).dump());
}

TEST(Stream, PlantedRatesMatchSlots) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    StreamSpec spec{.events = 1000, .sessions = 20, .duplicate_rate = 0.1, .future_referenced_rate = 0.3};
    const auto m = generate_stream(spec, seed);
    const auto kinds = plan_slots(spec, seed);
    EXPECT_EQ(m.count_duplicates(), std::size_t(std::count(kinds.begin(), kinds.end(), SlotKind::duplicate)));
    EXPECT_NEAR(double(m.count_duplicates()) / 1000.0, 0.1, 0.03);
    EXPECT_NEAR(double(m.count_future_referenced()) / 1000.0, 0.3, 0.04);
  }
  EXPECT_THROW(plan_slots({.duplicate_rate = 0.7, .future_referenced_rate = 0.5}, 1), Error);
}

TEST(Stream, EveryReportIsCitedLater) {
  const auto& m = small_stream();
  std::set<std::string> cited;
  for (std::size_t i = 0; i < m.events.size(); ++i) {
    for (const auto& c : m.events[i].causes) {
      cited.insert(c);
      // causes always point backwards
      EXPECT_LT(c, m.events[i].id);
    }
  }
  for (const auto& [id, gt] : m.truth)
    if (gt.future_referenced) EXPECT_TRUE(cited.count(id)) << id;
}

TEST(Stream, DuplicatesPointAtEarlierOriginals) {
  const auto& m = small_stream();
  for (const auto& [id, gt] : m.truth)
    if (gt.is_duplicate_of) {
      EXPECT_LT(*gt.is_duplicate_of, id);
      EXPECT_FALSE(m.truth.at(*gt.is_duplicate_of).is_duplicate_of.has_value());
    }
}

TEST(Stream, TimestampsOrderedWithinSessions) {
  for (const auto& s : split_sessions(small_stream().events))
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s[i - 1].timestamp, s[i].timestamp);
}

TEST(Stream, ManifestAndSpecJsonRoundTrip) {
  const auto& m = small_stream();
  EXPECT_EQ(manifest_from_json(to_json(m)), m);
  StreamSpec spec{.events = 77, .sessions = 3, .duplicate_rate = 0.25};
  const auto back = stream_spec_from_json(to_json(spec));
  EXPECT_EQ(back.events, 77u);
  EXPECT_EQ(back.duplicate_rate, 0.25);
  EXPECT_EQ(back.start, spec.start);
}

TEST(Run, CheckpointCadence) {
  const auto m = generate_stream({.events = 30, .sessions = 3}, 2);
  HashEmbedder emb;
  EXPECT_EQ(stream_run(m.events, &m, {}, emb, {.every_n = 1}).metrics.checkpoints.size(), 3u);
  EXPECT_EQ(stream_run(m.events, &m, {}, emb, {.every_n = 2}).metrics.checkpoints.size(), 2u);
  EXPECT_EQ(stream_run(m.events, &m, {}, emb, {.every_n = 5}).metrics.checkpoints.size(), 1u);
  EXPECT_THROW(stream_run(m.events, &m, {}, emb, {.every_n = 0}), Error);
}

TEST(Run, PrefixReplay) {
  const auto& m = small_stream();
  HashEmbedder emb;
  const auto full = stream_run(m.events, &m, {}, emb);
  std::vector<MemoryEvent> prefix;
  const auto sessions = split_sessions(m.events);
  for (std::size_t k = 0; k < 3; ++k) prefix.insert(prefix.end(), sessions[k].begin(), sessions[k].end());
  const auto part = stream_run(prefix, nullptr, {}, emb);
  ASSERT_EQ(part.metrics.checkpoints.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(part.metrics.store_size_series[i], full.metrics.store_size_series[i]);
    EXPECT_EQ(part.metrics.token_totals[i], full.metrics.token_totals[i]);
  }
}

TEST(Run, MetricsMatchIndependentCount) {
  const auto& m = small_stream();
  HashEmbedder emb;
  for (bool baseline : {false, true}) {
    RunOptions o;
    o.baseline = baseline;
    const auto r = stream_run(m.events, &m, {}, emb, o);
    const auto p = oracle::evaluate(r.state, m);
    EXPECT_EQ(r.metrics.retained, p.retained);
    EXPECT_EQ(r.metrics.retained_referenced, p.referenced);
    EXPECT_DOUBLE_EQ(r.metrics.retention_precision, p.precision());
    EXPECT_DOUBLE_EQ(r.metrics.store_reduction, 1.0 - double(p.active) / double(m.events.size()));
    EXPECT_DOUBLE_EQ(r.metrics.retained_substantive_fraction, double(p.substantive_kept) / double(p.substantive));
  }
}

TEST(Run, BaselinePrecisionIsBaseRate) {
  const auto& m = small_stream();
  HashEmbedder emb;
  RunOptions o;
  o.baseline = true;
  const auto r = stream_run(m.events, &m, {}, emb, o);
  EXPECT_EQ(r.metrics.store_reduction, 0.0);
  EXPECT_DOUBLE_EQ(r.metrics.retention_precision, double(m.count_future_referenced()) / double(m.events.size()));
}

TEST(Run, PerfectPrecisionWhenOnlyReferencedSurvive) {
  // a stream with only referenced reports and their follow-ups: only the
  // follow-ups are filler, and identical follow-ups collapse to one
  const auto m = generate_stream({.events = 60, .sessions = 3, .duplicate_rate = 0, .future_referenced_rate = 1.0}, 3);
  StoreState s(StoreConfig{});
  HashEmbedder emb;
  for (const auto& e : m.events)
    if (m.truth.at(e.id).future_referenced) ingest(s, e, emb);
  RunMetrics met;
  evaluate(s, m, m.events.size(), met);
  EXPECT_EQ(met.retention_precision, 1.0);
}

TEST(Run, DeterministicAcrossRuns) {
  const auto& m = small_stream();
  HashEmbedder e1, e2;
  const auto a = stream_run(m.events, &m, {}, e1);
  const auto b = stream_run(m.events, &m, {}, e2);
  EXPECT_EQ(snapshot_text(a.state), snapshot_text(b.state));
  EXPECT_EQ(report(a.metrics, ReportFormat::json), report(b.metrics, ReportFormat::json));
}

TEST(Run, ObserverSeesEveryCheckpoint) {
  const auto& m = small_stream();
  HashEmbedder emb;
  std::vector<std::size_t> seen;
  RunOptions o;
  o.observer = [&](const Checkpoint& cp, const StoreState& st) {
    seen.push_back(cp.index);
    EXPECT_EQ(cp.active, active_count(st));
    EXPECT_NO_THROW(check_invariants(st));
  };
  stream_run(m.events, &m, {}, emb, o);
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3, 4, 5, 6}));
}

TEST(Sweep, SingleBudget) {
  const auto& m = small_stream();
  HashEmbedder emb;
  const auto rows = budget_sweep(m, {}, emb, {5000});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].budget, 5000);
  EXPECT_LE(rows[0].metrics.final_tokens, 5000);
}

TEST(Sweep, TokensMonotoneInBudget) {
  const auto& m = small_stream();
  HashEmbedder emb;
  const auto rows = budget_sweep(m, {}, emb, {4000, 1000, 2000, 8000});
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_LE(rows[i].metrics.final_tokens, rows[i].budget);
    if (i) {
      EXPECT_GT(rows[i].budget, rows[i - 1].budget);
      EXPECT_GE(rows[i].metrics.final_tokens, rows[i - 1].metrics.final_tokens);
      EXPECT_GE(rows[i].metrics.retained_substantive_fraction, rows[i - 1].metrics.retained_substantive_fraction);
    }
  }
  const auto text = report(rows, ReportFormat::text);
  EXPECT_NE(text.find("budget"), std::string::npos);
  EXPECT_EQ(Json::parse(report(rows, ReportFormat::json)).size(), 4u);
}

TEST(Sweep, DefaultBudgets) {
  EXPECT_EQ(default_sweep_budgets(), (std::vector<std::int64_t>{25000, 50000, 115000, 200000}));
}
