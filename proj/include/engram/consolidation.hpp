#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "engram/config.hpp"
#include "engram/embedding.hpp"
#include "engram/errors.hpp"
#include "engram/forgetting.hpp"
#include "engram/graph.hpp"
#include "engram/model.hpp"
#include "engram/scoring.hpp"
#include "engram/store.hpp"
#include "engram/time.hpp"
#include "engram/util.hpp"

namespace engram {

// ---------------------------------------------------------------------------
// Temporal validation

/// The first rule an event breaks against the current temporal state, if
/// any. Checked in order: repeated id, timestamp older than the watermark
/// minus the skew tolerance, cause not yet admitted.
inline std::optional<QuarantineReason> temporal_violation(const MemoryEvent& e, const TemporalState& t,
                                                          double skew_tolerance_min) {
  if (t.admitted.count(e.id)) return QuarantineReason::duplicate;
  if (e.timestamp < add_minutes(t.watermark, -skew_tolerance_min)) return QuarantineReason::out_of_order;
  for (const auto& c : e.causes)
    if (!t.admitted.count(c)) return QuarantineReason::causal_inversion;
  return std::nullopt;
}

inline void admit(TemporalState& t, const MemoryEvent& e) {
  t.admitted.insert(e.id);
  t.watermark = std::max(t.watermark, e.timestamp);
}

struct TemporalVerdict {
  std::vector<std::size_t> admitted;  // indices into the input, in input order
  std::vector<std::pair<std::size_t, QuarantineReason>> quarantined;
};

/// Walks events in the given order, admitting each valid one (which may
/// advance the watermark and satisfy later causes) and quarantining the
/// rest with a TTL.
inline TemporalVerdict validate_temporal(std::span<const MemoryEvent> events, TemporalState& t,
                                         double skew_tolerance_min, Instant now, double quarantine_ttl_min) {
  TemporalVerdict v;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (auto why = temporal_violation(e, t, skew_tolerance_min)) {
      v.quarantined.emplace_back(i, *why);
      t.quarantine.push_back({e, *why, now, add_minutes(now, quarantine_ttl_min)});
    } else {
      admit(t, e);
      v.admitted.push_back(i);
    }
  }
  return v;
}

struct QuarantineSweep {
  std::vector<MemoryEvent> readmitted;
  std::vector<QuarantineEntry> dropped;
};

/// Gives every expired quarantine entry one more check. Entries that now
/// pass are admitted; the rest are dropped. Unexpired entries stay.
inline QuarantineSweep revalidate_quarantine(TemporalState& t, Instant now, double skew_tolerance_min) {
  QuarantineSweep sweep;
  std::vector<QuarantineEntry> keep;
  auto entries = std::move(t.quarantine);
  t.quarantine.clear();
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.event.timestamp < b.event.timestamp; });
  for (auto& q : entries) {
    if (q.expires_at > now) {
      keep.push_back(std::move(q));
    } else if (!temporal_violation(q.event, t, skew_tolerance_min)) {
      admit(t, q.event);
      sweep.readmitted.push_back(std::move(q.event));
    } else {
      sweep.dropped.push_back(std::move(q));
    }
  }
  t.quarantine = std::move(keep);
  return sweep;
}

// ---------------------------------------------------------------------------
// Deduplication

struct GreedyDedup {
  std::vector<std::size_t> survivors;
  std::vector<std::pair<std::size_t, std::size_t>> removed;  // (item, survivor it merged into)
};

/// Greedy near-duplicate removal. Items are visited in order; the first
/// `prior_count` are earlier survivors and are never removed. An item whose
/// similarity to some survivor reaches the threshold merges into the most
/// similar one (earliest on ties); otherwise it becomes a survivor.
inline GreedyDedup greedy_near_dedup(std::span<const Embedding* const> items, double threshold,
                                     std::size_t prior_count = 0) {
  GreedyDedup out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i < prior_count) {
      out.survivors.push_back(i);
      continue;
    }
    double best = -2.0;
    std::optional<std::size_t> into;
    for (std::size_t s : out.survivors) {
      const double sim = cosine_similarity(*items[i], *items[s]);
      if (sim >= threshold && sim > best) {
        best = sim;
        into = s;
      }
    }
    if (into) out.removed.emplace_back(i, *into);
    else out.survivors.push_back(i);
  }
  return out;
}

/// Folds `gone` into `survivor`: provenance and access count carry over and
/// the survivor keeps the higher importance.
inline void absorb(EpisodicRecord& survivor, const EpisodicRecord& gone) {
  survivor.merged_from.push_back(gone.id());
  survivor.merged_from.insert(survivor.merged_from.end(), gone.merged_from.begin(), gone.merged_from.end());
  survivor.importance = std::max(survivor.importance, gone.importance);
  survivor.access_count += 1;
}

struct RecordDedup {
  std::vector<EpisodicRecord> survivors;
  std::vector<EpisodicRecord> removed;
};

/// Collapses records with identical original content onto the earliest
/// one. Input order is taken as arrival order.
inline RecordDedup exact_dedup(std::vector<EpisodicRecord> batch) {
  RecordDedup out;
  std::unordered_map<std::uint64_t, std::size_t> first;
  for (auto& r : batch) {
    auto [it, fresh] = first.try_emplace(r.content_hash, out.survivors.size());
    if (fresh) {
      out.survivors.push_back(std::move(r));
    } else {
      absorb(out.survivors[it->second], r);
      out.removed.push_back(std::move(r));
    }
  }
  return out;
}

/// Greedy near-duplicate removal over records sorted by encoding time.
inline RecordDedup near_dedup(std::vector<EpisodicRecord> batch, double threshold) {
  std::stable_sort(batch.begin(), batch.end(), [](const auto& a, const auto& b) { return encoded_before(a, b); });
  std::vector<const Embedding*> embs;
  for (const auto& r : batch) embs.push_back(&r.embedding);
  const auto g = greedy_near_dedup(embs, threshold);
  for (const auto& [gone, into] : g.removed) absorb(batch[into], batch[gone]);
  RecordDedup out;
  for (std::size_t s : g.survivors) out.survivors.push_back(batch[s]);
  for (const auto& [gone, _] : g.removed) out.removed.push_back(batch[gone]);
  return out;
}

// ---------------------------------------------------------------------------
// Clustering

/// Agglomerative average-linkage clustering on cosine distance. The closest
/// pair of clusters merges while its distance is at most `max_distance`;
/// ties go to the pair with the smallest input positions. Each cluster
/// lists member positions ascending; clusters are ordered by first member.
inline std::vector<std::vector<std::size_t>> average_linkage_clusters(std::span<const Embedding* const> items,
                                                                      double max_distance) {
  const std::size_t n = items.size();
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d[i * n + j] = d[j * n + i] = 1.0 - cosine_similarity(*items[i], *items[j]);
  std::vector<char> live(n, 1);

  // Slot i always holds the cluster whose smallest member is i, so scanning
  // slots in order finds the smallest tied pair first.
  while (true) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t a = n, b = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!live[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (live[j] && d[i * n + j] < best) {
          best = d[i * n + j];
          a = i;
          b = j;
        }
      }
    }
    if (a == n || best > max_distance) break;
    const double na = static_cast<double>(members[a].size());
    const double nb = static_cast<double>(members[b].size());
    for (std::size_t k = 0; k < n; ++k) {
      if (!live[k] || k == a || k == b) continue;
      const double v = (na * d[a * n + k] + nb * d[b * n + k]) / (na + nb);
      d[a * n + k] = d[k * n + a] = v;
    }
    members[a].insert(members[a].end(), members[b].begin(), members[b].end());
    std::sort(members[a].begin(), members[a].end());
    members[b].clear();
    live[b] = 0;
  }

  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i)
    if (live[i]) out.push_back(std::move(members[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Gists and promotion

using Summarizer = std::function<std::string(std::span<const EpisodicRecord* const>)>;

/// Members ordered by importance (descending), then age, then id.
inline std::vector<const EpisodicRecord*> by_importance(std::span<const EpisodicRecord* const> cluster) {
  std::vector<const EpisodicRecord*> v(cluster.begin(), cluster.end());
  std::sort(v.begin(), v.end(), [](const auto* a, const auto* b) {
    if (a->importance != b->importance) return a->importance > b->importance;
    if (a->encoded_at != b->encoded_at) return a->encoded_at < b->encoded_at;
    return a->id() < b->id();
  });
  return v;
}

/// Joins the contents of the `top_m` most important members.
inline std::string default_summary(std::span<const EpisodicRecord* const> cluster, std::size_t top_m) {
  const auto ranked = by_importance(cluster);
  std::string out;
  for (std::size_t i = 0; i < ranked.size() && i < top_m; ++i) {
    const auto& c = ranked[i]->event.content;
    if (c.empty()) continue;
    if (!out.empty()) out += ' ';
    out += c;
  }
  return out;
}

/// Deterministic semantic-memory id from the sorted source ids.
inline std::string gist_id(const std::vector<std::string>& sorted_sources) {
  std::string key;
  for (const auto& s : sorted_sources) {
    key += s;
    key += '\x1f';
  }
  return "sm-" + hex64(fnv1a64(key));
}

/// Builds the semantic memory for a cluster. A throwing summarizer falls
/// back to the extractive default; either way the gist is cut to the token
/// cap. The gist embedding is the normalized sum of member embeddings.
inline SemanticMemory make_gist(std::span<const EpisodicRecord* const> cluster, const StoreConfig& cfg,
                                const Summarizer& summarizer = {}) {
  if (cluster.empty()) throw Error(Errc::EmptyBatch, "cannot summarize an empty cluster");
  SemanticMemory m;
  std::string text;
  bool have = false;
  if (summarizer) {
    try {
      text = summarizer(cluster);
      have = true;
    } catch (const std::exception&) {
      have = false;
    }
  }
  if (!have) text = default_summary(cluster, cfg.gist_top_m);
  m.gist = detail::prefix_chars(text, cfg.gist_max_tokens * 4);

  const auto ranked = by_importance(cluster);
  std::set<std::string> seen;
  for (const auto* r : ranked)
    for (const auto& e : r->entities)
      if (seen.insert(case_fold(e)).second) m.entities.push_back(e);

  for (const auto* r : cluster) m.source_ids.push_back(r->id());
  std::sort(m.source_ids.begin(), m.source_ids.end());
  m.id = gist_id(m.source_ids);

  std::vector<double> sum(cluster.front()->embedding.dimension(), 0.0);
  for (const auto* r : cluster)
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += r->embedding.values()[i];
  try {
    m.embedding = normalize(sum);
  } catch (const Error&) {
    m.embedding = ranked.front()->embedding;
  }
  return m;
}

/// Inserts a semantic memory into the graph at activation zero. Promoting
/// the same source set twice returns the existing memory unchanged.
inline const SemanticMemory& promote(SemanticMemory draft, SemanticGraph* graph, Instant now) {
  if (!graph) throw Error(Errc::GraphUnavailable, "no semantic graph to promote into");
  if (const auto* existing = graph->find_memory(draft.id)) return *existing;
  draft.created_at = now;
  draft.last_accessed = now;
  draft.activation_strength = 0.0;
  const auto id = draft.id;
  graph->insert_memory(std::move(draft), now);
  graph->recompute_importance();
  return *graph->find_memory(id);
}

// ---------------------------------------------------------------------------
// Consolidation job

enum class ConsolidationMode { dedup, dedup_adaptive, aggressive };

inline std::string_view to_string(ConsolidationMode m) {
  switch (m) {
    case ConsolidationMode::dedup: return "dedup";
    case ConsolidationMode::dedup_adaptive: return "dedup-adaptive";
    case ConsolidationMode::aggressive: return "aggressive";
  }
  return "dedup";
}

inline ConsolidationMode parse_consolidation_mode(std::string_view s) {
  if (s == "dedup") return ConsolidationMode::dedup;
  if (s == "dedup-adaptive" || s == "dedup_adaptive") return ConsolidationMode::dedup_adaptive;
  if (s == "aggressive") return ConsolidationMode::aggressive;
  throw Error(Errc::InvalidArgument, "unknown consolidation mode '" + std::string(s) + "'");
}

struct ConsolidationOptions {
  ConsolidationMode mode = ConsolidationMode::dedup;
  Instant now;
  Summarizer summarizer;
};

struct ConsolidationReport {
  std::uint64_t batch_id = 0;
  ConsolidationMode mode = ConsolidationMode::dedup;
  Instant now;
  std::size_t input_count = 0;
  std::size_t quarantined = 0;
  std::size_t quarantine_readmitted = 0;
  std::size_t quarantine_dropped = 0;
  std::size_t exact_dupes_removed = 0;
  std::size_t near_dupes_merged = 0;
  std::size_t cluster_members_merged = 0;
  std::size_t clusters_formed = 0;
  std::size_t promoted = 0;
  std::size_t retained = 0;
  std::size_t pruned = 0;
  std::vector<std::string> semantic_ids;
  std::size_t store_size_before = 0;
  std::size_t store_size_after = 0;
  std::int64_t tokens_before = 0;
  std::int64_t tokens_after = 0;

  /// Every input record lands in exactly one bucket.
  bool accounts() const {
    return input_count == quarantined + exact_dupes_removed + near_dupes_merged + cluster_members_merged + promoted +
                              pruned + retained;
  }
};

namespace detail {

enum class Bucket { promote, retain, prune };

inline Bucket better(Bucket a, Bucket b) { return static_cast<int>(a) < static_cast<int>(b) ? a : b; }

}  // namespace detail

/// One consolidation batch over every pending record: temporal validation,
/// scoring, classification, exact and near deduplication, clustering and
/// promotion, then tier placement. The work happens on a copy of the store
/// which replaces the original only when the whole batch succeeds.
inline ConsolidationReport run_consolidation(StoreState& state, const ConsolidationOptions& opts) {
  using detail::Bucket;
  StoreState work = state;
  const auto& cfg = work.config;
  const Instant now = opts.now;

  ConsolidationReport rep;
  rep.mode = opts.mode;
  rep.now = now;
  rep.batch_id = ++work.batch_counter;
  rep.store_size_before = active_count(work);
  rep.tokens_before = active_tokens(work);

  // Quarantine re-check.
  std::vector<std::size_t> admitted;
  auto sweep = revalidate_quarantine(work.temporal, now, cfg.skew_tolerance_min);
  for (const auto& e : sweep.readmitted) {
    const auto i = *work.records.index_of(e.id);
    work.records.edit(i).state = RecordState::pending;
    admitted.push_back(i);
    append_log(work, now, "quarantine", "readmitted " + e.id);
  }
  for (const auto& q : sweep.dropped) {
    if (auto* r = work.records.edit(q.event.id)) make_tombstone(*r);
    append_log(work, now, "quarantine", "dropped " + q.event.id + " (" + std::string(to_string(q.reason)) + ")");
  }
  rep.quarantine_readmitted = sweep.readmitted.size();
  rep.quarantine_dropped = sweep.dropped.size();

  // Temporal validation of newly pending records, in arrival order.
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < work.records.size(); ++i)
    if (work.records[i].state == RecordState::pending &&
        std::find(admitted.begin(), admitted.end(), i) == admitted.end())
      pending.push_back(i);
  std::sort(pending.begin(), pending.end(),
            [&](std::size_t a, std::size_t b) { return work.records[a].seq < work.records[b].seq; });
  {
    std::vector<MemoryEvent> events;
    for (std::size_t i : pending) events.push_back(work.records[i].event);
    const auto v = validate_temporal(events, work.temporal, cfg.skew_tolerance_min, now, cfg.quarantine_ttl_min);
    for (std::size_t k : v.admitted) admitted.push_back(pending[k]);
    for (const auto& [k, why] : v.quarantined) {
      work.records.edit(pending[k]).state = RecordState::quarantined;
      append_log(work, now, "quarantine", events[k].id + " (" + std::string(to_string(why)) + ")");
    }
    rep.quarantined = v.quarantined.size();
  }
  rep.input_count = admitted.size() + rep.quarantined;

  if (admitted.empty()) {
    rep.store_size_after = active_count(work);
    rep.tokens_after = active_tokens(work);
    state = std::move(work);
    return rep;
  }

  auto by_time = [&](std::size_t a, std::size_t b) { return encoded_before(work.records[a], work.records[b]); };
  std::sort(admitted.begin(), admitted.end(), by_time);

  // Scoring, oldest first so the surprise prior only sees the past.
  const auto positions = turn_positions(work);
  std::vector<ScoredItem> items;
  for (std::size_t i : admitted) {
    const auto& r = work.records[i];
    const auto prior = work.surprise.centroid();
    const TurnPosition pos = positions.count(r.id()) ? positions.at(r.id()) : TurnPosition{};
    auto factors = score_factors(r, work, now, prior, pos);
    const auto b = composite_importance(factors, cfg.signal_weights);
    const double mult = authority_multiplier(r.event, factors[factor::surprise], cfg);
    auto& m = work.records.edit(i);
    m.score_breakdown = b.as_map();
    if (mult != 1.0) m.score_breakdown["authority_multiplier"] = mult;
    m.importance = std::clamp(b.composite * mult, 0.0, 1.0);
    work.surprise.update(m.embedding);
    items.push_back({m.id(), m.importance, m.encoded_at});
  }

  std::map<std::size_t, Bucket> bucket;  // row -> class
  {
    const auto p = classify(items, cfg.classification_fractions);
    for (std::size_t k : p.promote) bucket[admitted[k]] = Bucket::promote;
    for (std::size_t k : p.retain) bucket[admitted[k]] = Bucket::retain;
    for (std::size_t k : p.prune) bucket[admitted[k]] = Bucket::prune;
  }

  // Earlier survivors from previous batches.
  std::vector<std::size_t> prior_rows;
  for (std::size_t i = 0; i < work.records.size(); ++i) {
    const auto& r = work.records[i];
    if ((r.state == RecordState::retained || r.state == RecordState::promoted) && !bucket.count(i))
      prior_rows.push_back(i);
  }
  std::sort(prior_rows.begin(), prior_rows.end(), by_time);

  auto remove_into = [&](std::size_t gone, std::size_t into) {
    absorb(work.records.edit(into), work.records[gone]);
    if (auto g = bucket.find(gone), s = bucket.find(into); g != bucket.end() && s != bucket.end())
      s->second = detail::better(s->second, g->second);
    bucket.erase(gone);
    make_tombstone(work.records.edit(gone));
  };

  // Exact duplicates.
  std::vector<std::size_t> survivors;
  {
    std::unordered_map<std::uint64_t, std::size_t> first;
    for (std::size_t i : prior_rows) first.try_emplace(work.records[i].content_hash, i);
    for (std::size_t i : admitted) {
      auto [it, fresh] = first.try_emplace(work.records[i].content_hash, i);
      if (fresh) {
        survivors.push_back(i);
      } else {
        remove_into(i, it->second);
        ++rep.exact_dupes_removed;
      }
    }
  }

  // Near duplicates.
  {
    std::vector<std::size_t> rows = prior_rows;
    rows.insert(rows.end(), survivors.begin(), survivors.end());
    std::vector<const Embedding*> embs;
    for (std::size_t i : rows) embs.push_back(&work.records[i].embedding);
    const auto g = greedy_near_dedup(embs, cfg.near_dedup_threshold, prior_rows.size());
    for (const auto& [gone, into] : g.removed) remove_into(rows[gone], rows[into]);
    rep.near_dupes_merged = g.removed.size();
    survivors.clear();
    for (std::size_t s : g.survivors)
      if (s >= prior_rows.size()) survivors.push_back(rows[s]);
  }

  auto promote_cluster = [&](const std::vector<std::size_t>& rows) {
    std::vector<const EpisodicRecord*> members;
    for (std::size_t i : rows) members.push_back(&work.records[i]);
    auto draft = make_gist(members, cfg, opts.summarizer);
    const auto& sm = promote(std::move(draft), &work.graph, now);
    rep.semantic_ids.push_back(sm.id);
  };
  auto cluster_rows = [&](const std::vector<std::size_t>& rows) {
    std::vector<const Embedding*> embs;
    for (std::size_t i : rows) embs.push_back(&work.records[i].embedding);
    std::vector<std::vector<std::size_t>> out;
    for (const auto& c : average_linkage_clusters(embs, cfg.cluster_distance)) {
      std::vector<std::size_t> mapped;
      for (std::size_t k : c) mapped.push_back(rows[k]);
      out.push_back(std::move(mapped));
    }
    return out;
  };

  // Aggressive mode folds every multi-member cluster into a gist and drops
  // the members from the episodic store.
  if (opts.mode == ConsolidationMode::aggressive) {
    std::vector<std::size_t> singles;
    for (const auto& c : cluster_rows(survivors)) {
      if (c.size() < 2) {
        singles.push_back(c.front());
        continue;
      }
      ++rep.clusters_formed;
      promote_cluster(c);
      for (std::size_t i : c) {
        bucket.erase(i);
        make_tombstone(work.records.edit(i));
        ++rep.cluster_members_merged;
      }
    }
    survivors = std::move(singles);
  }

  // Promote-class survivors become gists.
  {
    std::vector<std::size_t> to_promote;
    for (std::size_t i : survivors)
      if (bucket.at(i) == Bucket::promote) to_promote.push_back(i);
    for (const auto& c : cluster_rows(to_promote)) {
      ++rep.clusters_formed;
      promote_cluster(c);
    }
  }

  // Placement.
  for (std::size_t i : survivors) {
    auto& r = work.records.edit(i);
    r.tier = Tier::warm;
    switch (bucket.at(i)) {
      case Bucket::promote:
        r.state = RecordState::promoted;
        r.ttl_expires_at = std::max(r.ttl_expires_at, add_hours(r.encoded_at, cfg.warm_ttl_h));
        ++rep.promoted;
        break;
      case Bucket::retain:
        r.state = RecordState::retained;
        r.ttl_expires_at = std::max(r.ttl_expires_at, add_hours(r.encoded_at, cfg.warm_ttl_h));
        ++rep.retained;
        break;
      case Bucket::prune:
        r.state = RecordState::retained;
        r = degrade(std::move(r));
        ++rep.pruned;
        break;
    }
  }

  rep.store_size_after = active_count(work);
  rep.tokens_after = active_tokens(work);
  append_log(work, now, "consolidate",
             "batch " + std::to_string(rep.batch_id) + ": " + std::to_string(rep.input_count) + " in, " +
                 std::to_string(rep.promoted) + " promoted, " + std::to_string(rep.retained) + " retained, " +
                 std::to_string(rep.pruned) + " pruned");
  state = std::move(work);
  return rep;
}

}  // namespace engram
