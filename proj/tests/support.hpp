#pragma once

// Fixture builders shared by the test suites.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "engram/engram.hpp"

namespace testkit {

using namespace engram;

inline Instant t0() { return parse_rfc3339("2024-01-01T00:00:00Z"); }
inline Instant at_h(double hours) { return add_hours(t0(), hours); }

inline MemoryEvent event(std::string id, Instant ts, std::string content = "some content", std::string session = "s1",
                         std::string kind = "comment") {
  MemoryEvent e;
  e.id = std::move(id);
  e.timestamp = ts;
  e.session_id = std::move(session);
  e.kind = std::move(kind);
  e.content = std::move(content);
  return e;
}

/// Gaussian vector, normalized.
inline std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n = 0.0;
  for (auto& x : v) {
    // Box-Muller on the project RNG keeps fixtures reproducible across
    // standard libraries.
    const double u1 = std::max(rng.uniform01(), 1e-300), u2 = rng.uniform01();
    x = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    n += x * x;
  }
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

/// A vector at a chosen cosine to `base` (both unit, dim >= 2).
inline std::vector<double> at_cosine(const std::vector<double>& base, double cos, Rng& rng) {
  auto r = random_unit(rng, base.size());
  double d = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) d += r[i] * base[i];
  double n = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] -= d * base[i];
    n += r[i] * r[i];
  }
  n = std::sqrt(n);
  const double s = std::sqrt(std::max(0.0, 1.0 - cos * cos));
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cos * base[i] + s * r[i] / n;
  return out;
}

inline std::vector<double> axis(std::size_t dim, std::size_t i) {
  std::vector<double> v(dim, 0.0);
  v[i] = 1.0;
  return v;
}

inline EpisodicRecord record(std::string id, const std::vector<double>& emb, Instant encoded,
                             RecordState state = RecordState::retained, double importance = 0.5,
                             std::string content = "record content") {
  EpisodicRecord r;
  r.event = event(id, encoded, std::move(content));
  r.embedding = normalize(emb);
  r.importance = importance;
  r.tier = state == RecordState::pending ? Tier::hot : Tier::warm;
  r.encoded_at = encoded;
  r.last_accessed = encoded;
  r.ttl_expires_at = add_hours(encoded, 24.0 * 30);
  r.state = state;
  r.content_hash = fnv1a64(r.event.content);
  r.original_chars = char_count(r.event.content);
  r.entities = extract_entities(r.event.content);
  static std::uint64_t seq = 0;
  r.seq = ++seq;
  return r;
}

inline StoreConfig small_config(std::size_t dim = 16) {
  StoreConfig c;
  c.dimension = dim;
  return c;
}

/// Embeds texts from a fixed table; anything else goes to the hash embedder.
class TableEmbedder final : public Embedder {
 public:
  TableEmbedder(std::size_t dim, std::map<std::string, std::vector<double>> table)
      : dim_(dim), table_(std::move(table)), fallback_(dim, 0) {}
  Embedding embed(std::string_view text) override {
    if (auto it = table_.find(std::string(text)); it != table_.end()) return normalize(it->second);
    return fallback_.embed(text);
  }
  std::size_t dimension() const override { return dim_; }
  std::string name() const override { return "table"; }

 private:
  std::size_t dim_;
  std::map<std::string, std::vector<double>> table_;
  HashEmbedder fallback_;
};

/// Ingests events with the hash embedder and consolidates each session.
inline StoreState consolidated_store(const std::vector<MemoryEvent>& events, StoreConfig cfg = {}) {
  HashEmbedder emb(cfg.dimension, cfg.embed_seed);
  StoreState s(cfg);
  Instant now = epoch();
  std::string session;
  for (const auto& e : events) {
    if (!session.empty() && e.session_id != session) run_consolidation(s, {ConsolidationMode::dedup, now, {}});
    session = e.session_id;
    ingest(s, e, emb);
    now = std::max(now, e.timestamp);
  }
  run_consolidation(s, {ConsolidationMode::dedup, now, {}});
  return s;
}

}  // namespace testkit
