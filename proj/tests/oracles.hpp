#pragma once

// Brute-force reference implementations. Each works from raw vectors and
// plain loops and does not call into the engine's algorithms, so agreement
// with the engine is evidence rather than tautology.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "engram/engram.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec raw(const engram::Embedding& e) { return Vec(e.values().begin(), e.values().end()); }

struct Dedup {
  std::vector<std::size_t> survivors;
  std::map<std::size_t, std::size_t> merged_into;
};

/// Visit in order; an item merges into the most similar earlier survivor
/// at or above the threshold (first one on equal similarity).
inline Dedup greedy_dedup(const std::vector<Vec>& v, double threshold) {
  Dedup out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::optional<std::size_t> best;
    double best_sim = 0.0;
    for (std::size_t s : out.survivors) {
      const double sim = dot(v[i], v[s]);
      if (sim < threshold) continue;
      if (!best || sim > best_sim) {
        best = s;
        best_sim = sim;
      }
    }
    if (best) out.merged_into[i] = *best;
    else out.survivors.push_back(i);
  }
  return out;
}

/// Naive agglomerative clustering: every round recomputes the average
/// pairwise distance between every pair of clusters from scratch.
inline std::vector<std::vector<std::size_t>> average_linkage(const std::vector<Vec>& v, double max_distance) {
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < v.size(); ++i) clusters.push_back({i});
  auto avg = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double s = 0.0;
    for (auto i : a)
      for (auto j : b) s += 1.0 - dot(v[i], v[j]);
    return s / static_cast<double>(a.size() * b.size());
  };
  while (clusters.size() > 1) {
    // clusters stay ordered by smallest member
    std::size_t ba = 0, bb = 0;
    double best = INFINITY;
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double d = avg(clusters[a], clusters[b]);
        if (d < best - 1e-12) {
          best = d;
          ba = a;
          bb = b;
        }
      }
    if (best > max_distance) break;
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    std::sort(clusters[ba].begin(), clusters[ba].end());
    clusters.erase(clusters.begin() + static_cast<long>(bb));
  }
  return clusters;
}

/// Inclusive linear-interpolation percentile.
inline double percentile(std::vector<double> xs, double p) {
  std::sort(xs.begin(), xs.end());
  const double pos = p / 100.0 * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= xs.size()) return xs.back();
  const double w = pos - static_cast<double>(lo);
  return xs[lo] + w * (xs[lo + 1] - xs[lo]);
}

/// P(random positive outscores random negative), ties half.
inline double auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Sum of 0.6*sim for newer and 0.4*sim for older contributors above the
/// threshold.
inline double interference(const engram::StoreState& s, const std::string& id, double threshold) {
  const auto* me = s.records.find(id);
  double total = 0.0;
  for (const auto& r : s.records) {
    if (r.id() == id || r.state == engram::RecordState::tombstone || r.state == engram::RecordState::quarantined)
      continue;
    const double sim = dot(raw(me->embedding), raw(r.embedding));
    if (sim < threshold) continue;
    const bool newer = r.encoded_at > me->encoded_at || (r.encoded_at == me->encoded_at && r.seq > me->seq);
    total += (newer ? 0.6 : 0.4) * sim;
  }
  return total;
}

/// Hop distance from the seed entities to every entity, by repeated
/// relaxation over the co-occurrence edge list.
inline std::map<std::string, int> entity_distances(const engram::SemanticGraph& g, const std::vector<std::string>& seeds,
                                                   int max_hops) {
  std::map<std::string, int> d;
  for (const auto& s : seeds)
    if (g.entities().count(engram::case_fold(s))) d[engram::case_fold(s)] = 0;
  for (int hop = 1; hop <= max_hops; ++hop) {
    std::map<std::string, int> add;
    for (const auto& [edge, _] : g.co_occurrences()) {
      for (auto [a, b] : {std::pair{edge.first, edge.second}, std::pair{edge.second, edge.first}}) {
        auto it = d.find(a);
        if (it != d.end() && it->second == hop - 1 && !d.count(b)) add.emplace(b, hop);
      }
    }
    d.insert(add.begin(), add.end());
  }
  return d;
}

struct Hit {
  std::string id;
  engram::Tier tier;
  double score;
  engram::Instant ts;
};

/// Scores retrieval candidates from the formula:
///   sim * (1 + beta*e^(-lambda_r*h)) * (1 + gamma*A_max)
/// Candidates: top-k per episodic tier by similarity, graph memories within
/// max_hops of the query entities or the entities of the top-k episodic
/// hits, and the top-k mature memories by similarity. Gists whose sources
/// are already present are dropped.
inline std::vector<Hit> retrieve(const engram::StoreState& s, const engram::Embedding& q,
                                 const std::vector<std::string>& query_entities, engram::Instant now, std::size_t k) {
  using namespace engram;
  const auto& cfg = s.config;
  const Vec qv = raw(q);
  auto boost = [&](Instant t) {
    const double h = std::max(0.0, std::chrono::duration<double>(now - t).count() / 3600.0);
    return 1.0 + cfg.recency_boost_beta * std::exp(-cfg.recency_boost_lambda * h);
  };
  auto act = [&](const SemanticMemory& m) {
    const double h = std::chrono::duration<double>(now - m.created_at).count() / 3600.0;
    return 1.0 / (1.0 + std::exp(-(h - cfg.maturation_half_life_h) / cfg.maturation_slope));
  };
  auto mature = [&](const SemanticMemory& m) { return !cfg.maturation_enabled || act(m) >= cfg.retrieval_activation; };

  std::vector<Hit> hits;
  std::set<std::string> present;
  std::vector<std::pair<double, const EpisodicRecord*>> top_all;
  for (Tier tier : {Tier::hot, Tier::warm}) {
    std::vector<std::pair<double, const EpisodicRecord*>> c;
    for (const auto& r : s.records)
      if (r.state != RecordState::tombstone && r.state != RecordState::quarantined && r.tier == tier &&
          r.encoded_at <= now)
        c.emplace_back(dot(qv, raw(r.embedding)), &r);
    std::sort(c.begin(), c.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      if (a.second->encoded_at != b.second->encoded_at) return a.second->encoded_at > b.second->encoded_at;
      return a.second->id() < b.second->id();
    });
    if (c.size() > k) c.resize(k);
    for (const auto& [sim, r] : c) {
      double a_max = 0.0;
      for (const auto& [_, m] : s.graph.memories()) {
        if (m.created_at > now || !cfg.maturation_enabled || act(m) >= cfg.retrieval_activation) continue;
        bool shares = false;
        for (const auto& e : m.entities)
          for (const auto& f : r->entities) shares = shares || case_fold(e) == case_fold(f);
        if (shares) a_max = std::max(a_max, act(m));
      }
      hits.push_back({r->id(), tier, sim * boost(r->encoded_at) * (1.0 + cfg.priming_gamma * a_max), r->encoded_at});
      present.insert(r->id());
      present.insert(r->merged_from.begin(), r->merged_from.end());
      top_all.emplace_back(sim, r);
    }
  }

  std::stable_sort(top_all.begin(), top_all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::string> seeds = query_entities;
  for (std::size_t i = 0; i < top_all.size() && i < k; ++i)
    seeds.insert(seeds.end(), top_all[i].second->entities.begin(), top_all[i].second->entities.end());
  const auto dist = entity_distances(s.graph, seeds, cfg.max_hops);

  std::vector<std::pair<double, std::string>> by_sim;
  for (const auto& [id, m] : s.graph.memories())
    if (m.created_at <= now && mature(m)) by_sim.emplace_back(-dot(qv, raw(m.embedding)), id);
  std::sort(by_sim.begin(), by_sim.end());
  std::set<std::string> cands;
  for (std::size_t i = 0; i < by_sim.size() && i < k; ++i) cands.insert(by_sim[i].second);
  for (const auto& [id, m] : s.graph.memories())
    for (const auto& e : m.entities)
      if (dist.count(case_fold(e))) cands.insert(id);

  for (const auto& id : cands) {
    const auto& m = s.graph.memories().at(id);
    if (m.created_at > now || !mature(m)) continue;
    bool dup = false;
    for (const auto& src : m.source_ids) dup = dup || present.count(src);
    if (dup) continue;
    hits.push_back({id, Tier::graph, dot(qv, raw(m.embedding)) * boost(m.created_at), m.created_at});
  }

  auto rank = [](Tier t) { return t == Tier::hot ? 0 : t == Tier::warm ? 1 : 2; };
  std::sort(hits.begin(), hits.end(), [&](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.tier != b.tier) return rank(a.tier) < rank(b.tier);
    if (a.ts != b.ts) return a.ts > b.ts;
    return a.id < b.id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

struct Precision {
  std::size_t retained = 0, referenced = 0, active = 0, substantive = 0, substantive_kept = 0;
  double precision() const { return retained ? double(referenced) / double(retained) : 0.0; }
};

/// Walks the manifest and looks each event up in the store.
inline Precision evaluate(const engram::StoreState& s, const engram::StreamManifest& m) {
  Precision p;
  for (const auto& e : m.events) {
    const auto& gt = m.truth.at(e.id);
    p.substantive += gt.substantive;
    const auto* r = s.records.find(e.id);
    if (!r || r->state == engram::RecordState::tombstone) continue;
    ++p.active;
    if (r->state == engram::RecordState::quarantined || static_cast<int>(r->fidelity) > 3) continue;
    ++p.retained;
    p.referenced += gt.future_referenced;
    p.substantive_kept += gt.substantive;
  }
  return p;
}

}  // namespace oracle
