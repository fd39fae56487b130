#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "engram/config.hpp"
#include "engram/embedding.hpp"
#include "engram/errors.hpp"
#include "engram/graph.hpp"
#include "engram/model.hpp"
#include "engram/scoring.hpp"
#include "engram/store.hpp"
#include "engram/time.hpp"
#include "engram/util.hpp"

namespace engram {

struct RetrievalHit {
  std::string memory_id;
  Tier tier = Tier::warm;
  double score = 0.0;
  double similarity = 0.0;
  double priming = 1.0;
  std::optional<int> hops;  // graph hits reached by traversal
  std::string content;
  Instant timestamp;
  Fidelity fidelity = Fidelity::L0;
  friend bool operator==(const RetrievalHit&, const RetrievalHit&) = default;
};

struct RetrievalOptions {
  int k = 10;
  std::optional<Instant> as_of;  // ignore anything encoded after this
  std::set<Tier> tiers{Tier::hot, Tier::warm, Tier::graph};
  double importance_filter = 0.0;
};

struct EpisodicMatch {
  std::size_t row = 0;
  double similarity = 0.0;
};

/// Best `k` live records of one tier by cosine similarity; newer first on
/// ties, then id. Warm records below the decayed-importance filter are
/// skipped; hot records are unscored and always eligible.
inline std::vector<EpisodicMatch> episodic_search(const Embedding& query, const StoreState& store, Tier tier,
                                                  std::size_t k, Instant now, double importance_filter = 0.0,
                                                  std::optional<Instant> as_of = std::nullopt) {
  std::vector<EpisodicMatch> out;
  for (std::size_t i = 0; i < store.records.size(); ++i) {
    const auto& r = store.records[i];
    if (!r.active() || r.state == RecordState::quarantined || r.tier != tier) continue;
    if (as_of && r.encoded_at > *as_of) continue;
    if (tier == Tier::warm && importance_filter > 0.0 &&
        decay_importance(r, std::max(now, r.encoded_at), store.config.lambda_decay) < importance_filter)
      continue;
    out.push_back({i, cosine_similarity(query, r.embedding)});
  }
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    const auto& x = store.records[a.row];
    const auto& y = store.records[b.row];
    if (x.encoded_at != y.encoded_at) return x.encoded_at > y.encoded_at;
    return x.id() < y.id();
  });
  if (out.size() > k) out.resize(k);
  return out;
}

struct SemanticMatch {
  std::string memory_id;
  double similarity = 0.0;
};

/// Best `k` semantic memories that have matured past the retrieval
/// threshold at `now`.
inline std::vector<SemanticMatch> semantic_search(const Embedding& query, const StoreState& store, std::size_t k,
                                                  Instant now) {
  std::vector<SemanticMatch> out;
  for (const auto& [id, m] : store.graph.memories()) {
    if (m.created_at > now || !is_explicitly_retrievable(m, now, store.config)) continue;
    out.push_back({id, cosine_similarity(query, m.embedding)});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.memory_id < b.memory_id;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

/// (1 + beta * e^(-lambda * hours since encoding)).
inline double recency_boost(Instant t, Instant now, const StoreConfig& cfg) {
  const double h = std::max(0.0, hours_between(t, now));
  return 1.0 + cfg.recency_boost_beta * std::exp(-cfg.recency_boost_lambda * h);
}

namespace detail {

inline int tier_rank(Tier t) {
  switch (t) {
    case Tier::hot: return 0;
    case Tier::warm: return 1;
    case Tier::graph: return 2;
  }
  return 3;
}

}  // namespace detail

/// Hybrid retrieval: hot and warm vector search, then a graph walk seeded by
/// the query's entities and those of the best episodic hits, plus direct
/// vector search over mature semantic memories. A semantic hit is dropped
/// when one of its sources is already in the result. Episodic hits that
/// share an entity with a memory still maturing get a small priming boost.
/// Read-only: access statistics are left to the caller.
inline std::vector<RetrievalHit> hybrid_retrieve(const StoreState& store, const Embedding& query,
                                                 const std::vector<std::string>& query_entities, Instant now,
                                                 const RetrievalOptions& opts = {}) {
  const auto& cfg = store.config;
  const auto k = static_cast<std::size_t>(std::max(opts.k, 1));
  const Instant horizon = opts.as_of ? std::min(now, *opts.as_of) : now;

  // Entities of memories that are not yet retrievable, with their activation.
  std::map<std::string, double> primed;
  for (const auto& [_, m] : store.graph.memories()) {
    if (m.created_at > horizon) continue;
    const double a = priming_weight(m, horizon, cfg);
    if (a <= 0.0) continue;
    for (const auto& e : m.entities) {
      auto& slot = primed[case_fold(e)];
      slot = std::max(slot, a);
    }
  }

  std::vector<RetrievalHit> hits;
  std::set<std::string> present;
  std::vector<EpisodicMatch> episodic;
  for (Tier t : {Tier::hot, Tier::warm}) {
    if (!opts.tiers.count(t)) continue;
    for (const auto& m : episodic_search(query, store, t, k, horizon, opts.importance_filter, horizon))
      episodic.push_back(m);
  }
  for (const auto& m : episodic) {
    const auto& r = store.records[m.row];
    double a_max = 0.0;
    for (const auto& e : r.entities)
      if (auto it = primed.find(case_fold(e)); it != primed.end()) a_max = std::max(a_max, it->second);
    RetrievalHit h;
    h.memory_id = r.id();
    h.tier = r.tier;
    h.similarity = m.similarity;
    h.priming = 1.0 + cfg.priming_gamma * a_max;
    h.score = m.similarity * recency_boost(r.encoded_at, horizon, cfg) * h.priming;
    h.content = r.event.content;
    h.timestamp = r.encoded_at;
    h.fidelity = r.fidelity;
    hits.push_back(std::move(h));
    present.insert(r.id());
    present.insert(r.merged_from.begin(), r.merged_from.end());
  }

  if (opts.tiers.count(Tier::graph)) {
    std::map<std::string, std::optional<int>> candidates;
    std::vector<std::string> seeds = query_entities;
    {
      auto ranked = episodic;
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.similarity > b.similarity; });
      for (std::size_t i = 0; i < ranked.size() && i < k; ++i)
        for (const auto& e : store.records[ranked[i].row].entities) seeds.push_back(e);
    }
    if (!seeds.empty())
      for (const auto& t : store.graph.traverse(seeds, cfg.max_hops)) candidates.emplace(t.memory_id, t.hops);
    for (const auto& s : semantic_search(query, store, k, horizon)) candidates.emplace(s.memory_id, std::nullopt);

    for (const auto& [id, hops] : candidates) {
      const auto* m = store.graph.find_memory(id);
      if (!m || m->created_at > horizon || !is_explicitly_retrievable(*m, horizon, cfg)) continue;
      if (std::any_of(m->source_ids.begin(), m->source_ids.end(), [&](const auto& s) { return present.count(s) > 0; }))
        continue;
      RetrievalHit h;
      h.memory_id = id;
      h.tier = Tier::graph;
      h.similarity = cosine_similarity(query, m->embedding);
      h.score = h.similarity * recency_boost(m->created_at, horizon, cfg);
      h.hops = hops;
      h.content = m->gist;
      h.timestamp = m->created_at;
      hits.push_back(std::move(h));
    }
  }

  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.tier != b.tier) return detail::tier_rank(a.tier) < detail::tier_rank(b.tier);
    if (a.timestamp != b.timestamp) return a.timestamp > b.timestamp;
    return a.memory_id < b.memory_id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

inline std::vector<RetrievalHit> hybrid_retrieve(const StoreState& store, std::string_view query, Embedder& embedder,
                                                 Instant now, const RetrievalOptions& opts = {},
                                                 const EntityExtractor& extractor = {}) {
  return hybrid_retrieve(store, embedder.embed(query), extract_entities(query, extractor), now, opts);
}

/// Bumps access statistics for returned hits.
inline void record_access(StoreState& s, const std::vector<RetrievalHit>& hits, Instant now) {
  for (const auto& h : hits) {
    if (h.tier == Tier::graph) {
      if (auto* m = s.graph.find_memory(h.memory_id)) {
        ++m->access_count;
        m->last_accessed = std::max(m->last_accessed, now);
      }
    } else if (auto* r = s.records.edit(h.memory_id)) {
      ++r->access_count;
      r->last_accessed = std::max(r->last_accessed, now);
    }
  }
}

// ---------------------------------------------------------------------------
// Reconsolidation

/// Opens the lability window on an episodic record or semantic memory and
/// returns when it closes. Each open counts as one access.
inline Instant open_lability(StoreState& s, const std::string& id, Instant now) {
  const Instant until = add_minutes(now, s.config.lability_window_min);
  if (auto* r = s.records.edit(id)) {
    if (!r->active()) throw Error(Errc::UnknownId, id + " is a tombstone");
    r->labile_until = until;
    ++r->access_count;
    r->last_accessed = std::max(r->last_accessed, now);
    return until;
  }
  if (auto* m = s.graph.find_memory(id)) {
    m->labile_until = until;
    ++m->access_count;
    m->last_accessed = std::max(m->last_accessed, now);
    return until;
  }
  throw Error(Errc::UnknownId, id);
}

/// alpha = clamp(wc*confidence + ws*severity + wr*(1 - recency), 0, 1).
inline double update_strength(double confidence, double severity, double recency, const StoreConfig& cfg) {
  for (double v : {confidence, severity, recency})
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::InvalidArgument, "correction signals must lie in [0,1]");
  return std::clamp(cfg.alpha_confidence * confidence + cfg.alpha_severity * severity +
                        cfg.alpha_staleness * (1.0 - recency),
                    0.0, 1.0);
}

struct Correction {
  std::string content;
  double confidence = 0.0;
  std::optional<double> severity;  // defaults to contradiction_severity against the stored embedding
  std::optional<double> recency;   // defaults to the memory's own recency factor
};

/// Embedding distance as a stand-in for contradiction: 1 - cos, clamped.
inline double contradiction_severity(const Embedding& stored, const Embedding& correction) {
  return std::clamp(1.0 - cosine_similarity(stored, correction), 0.0, 1.0);
}

struct ReconsolidationResult {
  double alpha = 0.0;
  bool replaced = false;
  bool changed = false;
};

/// Applies a correction to a labile memory. Strong corrections (alpha > 0.5)
/// replace the content; weaker ones are appended as amendments. The
/// embedding moves toward the correction by alpha. A zero alpha changes
/// nothing.
inline ReconsolidationResult reconsolidate(StoreState& s, const std::string& id, const Correction& c,
                                           Embedder& embedder, Instant now) {
  const auto& cfg = s.config;
  std::optional<Embedding> fresh_cache;
  auto fresh_for = [&](const Embedding& old) -> const Embedding& {
    if (!fresh_cache) fresh_cache = embedder.embed(c.content);
    if (fresh_cache->dimension() != old.dimension()) throw Error(Errc::DimensionMismatch, "correction embedding");
    return *fresh_cache;
  };
  auto severity_for = [&](const Embedding& old) {
    return c.severity ? *c.severity : contradiction_severity(old, fresh_for(old));
  };
  auto note = [&](double sev, double rec, double alpha) {
    char buf[160];
    std::snprintf(buf, sizeof buf, " confidence=%.6f severity=%.6f recency=%.6f alpha=%.6f", c.confidence, sev, rec, alpha);
    append_log(s, now, "reconsolidate", id + buf);
  };
  auto blend = [&](const Embedding& old, double alpha) {
    const auto& fresh = fresh_for(old);
    std::vector<double> v(old.dimension());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (1.0 - alpha) * old.values()[i] + alpha * fresh.values()[i];
    try {
      return normalize(v);
    } catch (const Error&) {
      return fresh;
    }
  };

  ReconsolidationResult res;
  if (const auto* r = s.records.find(id)) {
    if (!r->active()) throw Error(Errc::UnknownId, id + " is a tombstone");
    if (!r->labile_at(now)) throw Error(Errc::LabilityExpired, id);
    const double rec = c.recency.value_or(recency_factor(r->encoded_at, std::max(now, r->encoded_at), cfg.lambda_decay));
    const double sev = severity_for(r->embedding);
    res.alpha = update_strength(c.confidence, sev, rec, cfg);
    if (res.alpha < 1e-9) return res;
    auto emb = blend(r->embedding, res.alpha);
    auto* m = s.records.edit(id);
    m->embedding = std::move(emb);
    if (res.alpha > 0.5) {
      m->event.content = c.content;
      m->content_hash = fnv1a64(c.content);
      m->original_chars = char_count(c.content);
      m->fidelity = Fidelity::L0;
      res.replaced = true;
    } else {
      m->amendments.push_back({now, c.content, res.alpha});
    }
    res.changed = true;
    note(sev, rec, res.alpha);
    return res;
  }
  if (const auto* sm = s.graph.find_memory(id)) {
    if (!(sm->labile_until && now < *sm->labile_until)) throw Error(Errc::LabilityExpired, id);
    const double rec = c.recency.value_or(recency_factor(sm->created_at, std::max(now, sm->created_at), cfg.lambda_decay));
    const double sev = severity_for(sm->embedding);
    res.alpha = update_strength(c.confidence, sev, rec, cfg);
    if (res.alpha < 1e-9) return res;
    auto emb = blend(sm->embedding, res.alpha);
    auto* m = s.graph.find_memory(id);
    m->embedding = std::move(emb);
    if (res.alpha > 0.5) {
      m->gist = c.content;
      res.replaced = true;
    } else {
      m->amendments.push_back({now, c.content, res.alpha});
    }
    res.changed = true;
    note(sev, rec, res.alpha);
    return res;
  }
  throw Error(Errc::UnknownId, id);
}

/// Outcome feedback. Success raises importance by the reinforce step
/// (capped at 1); failure tags the record as an error signal so forgetting
/// keeps it.
inline void reinforce(StoreState& s, const std::string& id, bool success, Instant now) {
  if (auto* r = s.records.edit(id)) {
    if (!r->active()) throw Error(Errc::UnknownId, id + " is a tombstone");
    r->last_accessed = std::max(r->last_accessed, now);
    ++r->access_count;
    if (success) r->importance = std::min(1.0, r->importance + s.config.reinforce_step);
    else r->event.metadata["error_signal"] = "true";
    return;
  }
  if (auto* m = s.graph.find_memory(id)) {
    ++m->access_count;
    m->last_accessed = std::max(m->last_accessed, now);
    return;
  }
  throw Error(Errc::UnknownId, id);
}

}  // namespace engram
