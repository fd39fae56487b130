#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "engram/config.hpp"
#include "engram/embedding.hpp"
#include "engram/errors.hpp"
#include "engram/graph.hpp"
#include "engram/model.hpp"
#include "engram/time.hpp"
#include "engram/util.hpp"

namespace engram {

/// Episodic records in ingest order with an id index. Rows are shared
/// between copies of the table and cloned on first write, so taking a
/// snapshot of a large store costs one pointer copy per record.
class RecordTable {
 public:
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

  const EpisodicRecord& operator[](std::size_t i) const { return *rows_[i]; }

  std::optional<std::size_t> index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const EpisodicRecord* find(std::string_view id) const {
    auto i = index_of(id);
    return i ? rows_[*i].get() : nullptr;
  }

  /// Mutable access to row i, detaching it from other tables first.
  EpisodicRecord& edit(std::size_t i) {
    if (rows_[i].use_count() > 1) rows_[i] = std::make_shared<EpisodicRecord>(*rows_[i]);
    return *rows_[i];
  }

  EpisodicRecord* edit(std::string_view id) {
    auto i = index_of(id);
    return i ? &edit(*i) : nullptr;
  }

  void insert(EpisodicRecord r) {
    if (index_.count(r.id())) throw Error(Errc::DuplicateId, r.id());
    index_.emplace(r.id(), rows_.size());
    rows_.push_back(std::make_shared<EpisodicRecord>(std::move(r)));
  }

  void replace(std::size_t i, EpisodicRecord r) {
    if (r.id() != rows_[i]->id()) throw Error(Errc::InvalidArgument, "replace must keep the record id");
    rows_[i] = std::make_shared<EpisodicRecord>(std::move(r));
  }

  class const_iterator {
   public:
    using value_type = EpisodicRecord;
    using difference_type = std::ptrdiff_t;
    const_iterator() = default;
    explicit const_iterator(std::vector<std::shared_ptr<EpisodicRecord>>::const_iterator it) : it_(it) {}
    const EpisodicRecord& operator*() const { return **it_; }
    const EpisodicRecord* operator->() const { return it_->get(); }
    const_iterator& operator++() {
      ++it_;
      return *this;
    }
    const_iterator operator++(int) {
      auto t = *this;
      ++it_;
      return t;
    }
    bool operator==(const const_iterator&) const = default;

   private:
    std::vector<std::shared_ptr<EpisodicRecord>>::const_iterator it_;
  };

  const_iterator begin() const { return const_iterator(rows_.begin()); }
  const_iterator end() const { return const_iterator(rows_.end()); }

  friend bool operator==(const RecordTable& a, const RecordTable& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a.rows_[i] != b.rows_[i] && !(*a.rows_[i] == *b.rows_[i])) return false;
    return true;
  }

 private:
  std::vector<std::shared_ptr<EpisodicRecord>> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class QuarantineReason { out_of_order, duplicate, causal_inversion };

inline std::string_view to_string(QuarantineReason r) {
  switch (r) {
    case QuarantineReason::out_of_order: return "out_of_order";
    case QuarantineReason::duplicate: return "duplicate";
    case QuarantineReason::causal_inversion: return "causal_inversion";
  }
  return "out_of_order";
}

inline QuarantineReason parse_quarantine_reason(std::string_view s) {
  if (s == "out_of_order") return QuarantineReason::out_of_order;
  if (s == "duplicate") return QuarantineReason::duplicate;
  if (s == "causal_inversion") return QuarantineReason::causal_inversion;
  throw Error(Errc::ParseError, "unknown quarantine reason '" + std::string(s) + "'");
}

struct QuarantineEntry {
  MemoryEvent event;
  QuarantineReason reason = QuarantineReason::out_of_order;
  Instant quarantined_at;
  Instant expires_at;
  friend bool operator==(const QuarantineEntry&, const QuarantineEntry&) = default;
};

struct TemporalState {
  Instant watermark = epoch();
  std::set<std::string> admitted;
  std::vector<QuarantineEntry> quarantine;
  friend bool operator==(const TemporalState&, const TemporalState&) = default;
};

/// Running mean of every scored embedding; its normalization is the prior
/// against which surprise is measured.
struct SurpriseState {
  std::vector<double> sum;
  std::uint64_t count = 0;

  std::optional<Embedding> centroid() const {
    if (count == 0) return std::nullopt;
    double sq = 0.0;
    for (double v : sum) sq += v * v;
    if (sq < 1e-24) return std::nullopt;
    return normalize(sum);
  }

  void update(const Embedding& e) {
    if (sum.empty()) sum.assign(e.dimension(), 0.0);
    if (sum.size() != e.dimension()) throw Error(Errc::DimensionMismatch, "surprise centroid dimension");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += e.values()[i];
    ++count;
  }

  friend bool operator==(const SurpriseState&, const SurpriseState&) = default;
};

struct LogEntry {
  Instant at;
  std::string kind;
  std::string message;
  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

/// Complete engine state. A value type: batch jobs copy it, mutate the
/// copy and publish it whole.
struct StoreState {
  StoreConfig config;
  RecordTable records;
  SemanticGraph graph;
  std::optional<CalibrationProfile> calibration;
  SurpriseState surprise;
  TemporalState temporal;
  std::uint64_t next_seq = 0;
  std::uint64_t batch_counter = 0;
  std::vector<LogEntry> log;

  StoreState() = default;
  explicit StoreState(StoreConfig cfg) : config(std::move(cfg)) { config.validate(); }

  friend bool operator==(const StoreState&, const StoreState&) = default;
};

// ---------------------------------------------------------------------------
// Ingestion

/// Kinds whose events must carry text. Other kinds (status transitions,
/// label changes, assignments) may arrive with empty content.
inline bool is_content_kind(std::string_view kind) {
  for (std::string_view k : {"comment", "message", "turn", "created", "note", "utterance", "post"})
    if (kind.find(k) != std::string_view::npos) return true;
  return false;
}

struct IngestOptions {
  EntityExtractor extractor;
};

/// Stores an event as a pending hot-tier record at full fidelity. A
/// re-delivered id whose earlier copy sits in quarantine replaces that copy;
/// any other repeated id is rejected.
inline const EpisodicRecord& ingest(StoreState& state, const MemoryEvent& event, Embedder& embedder,
                                    const IngestOptions& opts = {}) {
  if (event.id.empty()) throw Error(Errc::InvalidArgument, "event id must be non-empty");
  if (event.content.empty() && is_content_kind(event.kind))
    throw Error(Errc::InvalidArgument, "event '" + event.id + "' of kind '" + event.kind + "' has empty content");

  std::optional<std::size_t> requeue;
  if (auto i = state.records.index_of(event.id)) {
    if (state.records[*i].state != RecordState::quarantined) throw Error(Errc::DuplicateId, event.id);
    requeue = i;
  }

  Embedding emb;
  try {
    emb = embedder.embed(event.content.empty() ? std::string_view(event.kind) : std::string_view(event.content));
  } catch (const Error& e) {
    if (e.code() == Errc::DimensionMismatch) throw;
    throw Error(Errc::EmbeddingFailure, e.what());
  } catch (const std::exception& e) {
    throw Error(Errc::EmbeddingFailure, e.what());
  }
  if (emb.dimension() != state.config.dimension)
    throw Error(Errc::DimensionMismatch, "embedder produced " + std::to_string(emb.dimension()) +
                                             " dimensions, store expects " + std::to_string(state.config.dimension));

  EpisodicRecord r;
  r.event = event;
  r.embedding = std::move(emb);
  r.fidelity = Fidelity::L0;
  r.tier = Tier::hot;
  r.state = RecordState::pending;
  r.encoded_at = event.timestamp;
  r.last_accessed = event.timestamp;
  r.ttl_expires_at = add_hours(event.timestamp, state.config.hot_ttl_h);
  r.content_hash = fnv1a64(event.content);
  r.original_chars = char_count(event.content);
  r.entities = extract_entities(event.content, opts.extractor);
  r.seq = state.next_seq++;

  if (requeue) {
    auto& q = state.temporal.quarantine;
    q.erase(std::remove_if(q.begin(), q.end(), [&](const auto& e) { return e.event.id == event.id; }), q.end());
    state.records.replace(*requeue, std::move(r));
    return state.records[*requeue];
  }
  state.records.insert(std::move(r));
  return state.records[state.records.size() - 1];
}

struct IngestSummary {
  std::size_t ingested = 0;
  std::vector<std::pair<std::string, std::string>> rejected;  // id, reason
};

/// Ingests a batch, collecting per-event rejections instead of aborting.
/// Embedding failures still abort so a dead provider is not mistaken for
/// bad data.
inline IngestSummary ingest_all(StoreState& state, const std::vector<MemoryEvent>& events, Embedder& embedder,
                                const IngestOptions& opts = {}) {
  IngestSummary s;
  for (const auto& ev : events) {
    try {
      ingest(state, ev, embedder, opts);
      ++s.ingested;
    } catch (const Error& e) {
      if (e.code() == Errc::EmbeddingFailure || e.code() == Errc::DimensionMismatch) throw;
      s.rejected.emplace_back(ev.id, e.what());
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Store-level measures

inline std::size_t active_count(const StoreState& s) {
  return static_cast<std::size_t>(std::count_if(s.records.begin(), s.records.end(),
                                                [](const EpisodicRecord& r) { return r.active(); }));
}

inline std::int64_t active_tokens(const StoreState& s) {
  std::int64_t t = 0;
  for (const auto& r : s.records)
    if (r.active()) t += estimate_tokens(r.event.content);
  return t;
}

/// Latest event timestamp in the store; the logical "now" for commands
/// that are not given one.
inline Instant latest_timestamp(const StoreState& s) {
  Instant t = epoch();
  for (const auto& r : s.records) t = std::max(t, r.event.timestamp);
  return t;
}

/// Returns a description of every broken store invariant (empty when the
/// store is sound).
inline std::vector<std::string> check_invariants(const StoreState& s) {
  std::vector<std::string> bad;
  try {
    s.config.validate();
  } catch (const Error& e) {
    bad.emplace_back(e.what());
  }
  std::set<std::string> ids;
  for (const auto& r : s.records) {
    const auto& id = r.id();
    if (!ids.insert(id).second) bad.push_back("duplicate id " + id);
    if (r.embedding.dimension() != s.config.dimension) bad.push_back(id + ": embedding dimension");
    else if (std::abs(r.embedding.norm() - 1.0) > 1e-6) bad.push_back(id + ": embedding not unit norm");
    if (!(r.importance >= 0.0 && r.importance <= 1.0)) bad.push_back(id + ": importance out of [0,1]");
    if (!(r.ttl_expires_at > r.encoded_at)) bad.push_back(id + ": ttl does not follow encoding");
    const bool tomb = r.state == RecordState::tombstone;
    if (tomb != (r.fidelity == Fidelity::L5)) bad.push_back(id + ": tombstone/L5 mismatch");
    if (tomb && !r.event.content.empty()) bad.push_back(id + ": tombstone with content");
  }
  for (const auto& [id, m] : s.graph.memories()) {
    if (!(m.activation_strength >= 0.0 && m.activation_strength <= 1.0)) bad.push_back(id + ": activation out of [0,1]");
    if (m.source_ids.empty()) bad.push_back(id + ": semantic memory without sources");
    if (m.embedding.dimension() != s.config.dimension) bad.push_back(id + ": gist embedding dimension");
  }
  for (const auto& [key, e] : s.graph.entities())
    if (!(e.importance >= 0.0 && e.importance <= 1.0)) bad.push_back("entity " + key + ": importance out of [0,1]");
  return bad;
}

inline void append_log(StoreState& s, Instant at, std::string kind, std::string message) {
  s.log.push_back({at, std::move(kind), std::move(message)});
}

}  // namespace engram
