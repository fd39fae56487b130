#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "engram/config.hpp"
#include "engram/embedding.hpp"
#include "engram/errors.hpp"
#include "engram/graph.hpp"
#include "engram/model.hpp"
#include "engram/store.hpp"
#include "engram/time.hpp"

namespace engram {

/// e^(-lambda * elapsed_hours).
inline double recency_factor(Instant encoded_at, Instant now, double lambda_per_hour) {
  const double h = hours_between(encoded_at, now);
  if (h < 0.0) throw Error(Errc::NegativeElapsed, "now precedes encoding time");
  return std::exp(-lambda_per_hour * h);
}

/// I0 * e^(-lambda * elapsed_hours). The stored importance is not touched.
inline double decay_importance(double initial, Instant encoded_at, Instant now, double lambda_per_hour) {
  return initial * recency_factor(encoded_at, now, lambda_per_hour);
}

inline double decay_importance(const EpisodicRecord& r, Instant now, double lambda_per_hour) {
  return decay_importance(r.importance, r.encoded_at, now, lambda_per_hour);
}

/// True when `a` was encoded before `b` (ingest order breaks timestamp ties).
inline bool encoded_before(const EpisodicRecord& a, const EpisodicRecord& b) {
  if (a.encoded_at != b.encoded_at) return a.encoded_at < b.encoded_at;
  return a.seq < b.seq;
}

/// 1 / (1 + n), n = earlier live records with similarity at or above the
/// near-duplicate threshold.
inline double frequency_factor(const EpisodicRecord& record, const StoreState& store) {
  std::size_t n = 0;
  for (const auto& other : store.records) {
    if (!other.active() || other.state == RecordState::quarantined || other.id() == record.id()) continue;
    if (!encoded_before(other, record)) continue;
    if (cosine_similarity(other.embedding, record.embedding) >= store.config.near_dedup_threshold) ++n;
  }
  return 1.0 / (1.0 + static_cast<double>(n));
}

/// Distance from the running prior: clamp(1 - cos, 0, 1); maximal when
/// there is no prior yet.
inline double surprise_factor(const Embedding& e, const std::optional<Embedding>& prior_centroid) {
  if (!prior_centroid) return 1.0;
  return std::clamp(1.0 - cosine_similarity(e, *prior_centroid), 0.0, 1.0);
}

inline double entity_salience_factor(const std::vector<std::string>& entities, const SemanticGraph& graph) {
  double best = 0.0;
  for (const auto& e : entities) best = std::max(best, graph.entity_importance(e));
  return best;
}

/// success -> 1, failure -> 0.25 (errors are kept as learning signals),
/// anything else -> 0.
inline double outcome_factor(const MemoryEvent& event) {
  const auto o = event.meta("outcome");
  if (o == "success") return 1.0;
  if (o == "failure") return 0.25;
  return 0.0;
}

struct ScoreBreakdown {
  std::map<std::string, double> factors;
  double composite = 0.0;

  std::map<std::string, double> as_map() const {
    auto m = factors;
    m["composite"] = composite;
    return m;
  }
};

/// Weighted sum of the mode's factors. Missing factors count as zero.
inline ScoreBreakdown composite_importance(const std::map<std::string, double>& factors, const SignalWeights& w) {
  w.validate();
  ScoreBreakdown b;
  for (const auto& name : factor_names(w.mode)) {
    auto it = factors.find(name);
    const double f = it == factors.end() ? 0.0 : it->second;
    b.factors[name] = f;
    b.composite += w.at(name) * f;
  }
  b.composite = std::clamp(b.composite, 0.0, 1.0);
  return b;
}

/// Position of a record inside its session (0-based) and the session size.
struct TurnPosition {
  std::size_t index = 0;
  std::size_t session_length = 1;
};

/// Positions for every live record, by session, in encoding order.
inline std::map<std::string, TurnPosition> turn_positions(const StoreState& store) {
  std::map<std::string, std::vector<const EpisodicRecord*>> by_session;
  for (const auto& r : store.records)
    if (r.state != RecordState::quarantined) by_session[r.event.session_id].push_back(&r);
  std::map<std::string, TurnPosition> out;
  for (auto& [_, recs] : by_session) {
    std::sort(recs.begin(), recs.end(), [](auto* a, auto* b) { return encoded_before(*a, *b); });
    for (std::size_t i = 0; i < recs.size(); ++i) out[recs[i]->id()] = {i, recs.size()};
  }
  return out;
}

/// Raw factor values for one record under the store's configured mode.
/// `prior` is the surprise centroid before this record is folded in.
inline std::map<std::string, double> score_factors(const EpisodicRecord& r, const StoreState& store, Instant now,
                                                   const std::optional<Embedding>& prior, const TurnPosition& pos) {
  const auto& cfg = store.config;
  std::map<std::string, double> f;
  f[factor::recency] = recency_factor(r.encoded_at, now, cfg.lambda_decay);
  f[factor::surprise] = surprise_factor(r.embedding, prior);
  if (cfg.signal_weights.mode == WeightMode::five_factor) {
    f[factor::frequency] = frequency_factor(r, store);
    f[factor::entity_salience] = entity_salience_factor(r.entities, store.graph);
    f[factor::outcome] = outcome_factor(r.event);
  } else {
    f[factor::length] = std::clamp(static_cast<double>(r.original_chars) / cfg.length_norm_chars, 0.0, 1.0);
    f[factor::position] =
        1.0 - static_cast<double>(pos.index) / static_cast<double>(std::max<std::size_t>(pos.session_length, 1));
  }
  return f;
}

/// Low-authority automation is scaled down unless it is surprising enough to
/// count as an alert. Authority defaults to 1 when the event does not say.
inline double authority_multiplier(const MemoryEvent& e, double surprise, const StoreConfig& cfg) {
  if (e.actor != Actor::automation) return 1.0;
  double authority = 1.0;
  if (auto a = e.meta("authority")) {
    try {
      authority = std::stod(*a);
    } catch (const std::exception&) {
      authority = 1.0;
    }
  }
  if (authority >= cfg.authority_cutoff || surprise > cfg.alert_surprise) return 1.0;
  return cfg.authority_downweight;
}

// ---------------------------------------------------------------------------
// Classification

struct ScoredItem {
  std::string id;
  double composite = 0.0;
  Instant encoded_at;
};

struct Partition {
  std::vector<std::size_t> promote;
  std::vector<std::size_t> retain;
  std::vector<std::size_t> prune;
};

/// Ranking used by classification: composite descending, then older first,
/// then id.
inline std::vector<std::size_t> rank_for_classification(std::span<const ScoredItem> items) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = items[a];
    const auto& y = items[b];
    if (x.composite != y.composite) return x.composite > y.composite;
    if (x.encoded_at != y.encoded_at) return x.encoded_at < y.encoded_at;
    return x.id < y.id;
  });
  return order;
}

/// Top ceil(p*n) promote, bottom floor(q*n) prune, the rest retain. Indices
/// refer to `items`; each list is in rank order.
inline Partition classify(std::span<const ScoredItem> items, const ClassificationFractions& fr = {}) {
  if (items.empty()) throw Error(Errc::EmptyBatch, "classify needs at least one record");
  const std::size_t n = items.size();
  // Guard the ceil/floor against fractions like 0.2*10 landing a hair off
  // an integer.
  const auto promote_n =
      std::min(n, static_cast<std::size_t>(std::ceil(fr.promote * static_cast<double>(n) - 1e-9)));
  auto prune_n = static_cast<std::size_t>(std::floor(fr.prune * static_cast<double>(n) + 1e-9));
  prune_n = std::min(prune_n, n - promote_n);
  const auto order = rank_for_classification(items);
  Partition p;
  for (std::size_t r = 0; r < n; ++r) {
    if (r < promote_n) p.promote.push_back(order[r]);
    else if (r >= n - prune_n) p.prune.push_back(order[r]);
    else p.retain.push_back(order[r]);
  }
  return p;
}

}  // namespace engram
