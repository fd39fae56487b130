#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "engram/embedding.hpp"
#include "engram/errors.hpp"
#include "engram/time.hpp"

namespace engram {

enum class Actor { user, agent, system, automation };

inline std::string_view to_string(Actor a) {
  switch (a) {
    case Actor::user: return "user";
    case Actor::agent: return "agent";
    case Actor::system: return "system";
    case Actor::automation: return "automation";
  }
  return "user";
}

inline Actor parse_actor(std::string_view s) {
  if (s == "user") return Actor::user;
  if (s == "agent") return Actor::agent;
  if (s == "system") return Actor::system;
  if (s == "automation") return Actor::automation;
  throw Error(Errc::ParseError, "unknown actor '" + std::string(s) + "'");
}

/// Raw timestamped event as delivered by the ingest stream.
struct MemoryEvent {
  std::string id;
  Instant timestamp;
  std::string session_id;
  Actor actor = Actor::user;
  std::string kind;
  std::string content;
  std::map<std::string, std::string> metadata;
  std::vector<std::string> causes;

  std::optional<std::string> meta(const std::string& key) const {
    auto it = metadata.find(key);
    if (it == metadata.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const MemoryEvent&, const MemoryEvent&) = default;
};

enum class Fidelity : std::uint8_t { L0 = 0, L1, L2, L3, L4, L5 };

inline constexpr std::array<double, 6> kRetainedFraction{1.00, 0.75, 0.50, 0.25, 0.10, 0.00};

inline constexpr double retained_fraction(Fidelity f) { return kRetainedFraction[static_cast<int>(f)]; }
inline constexpr int level(Fidelity f) { return static_cast<int>(f); }

inline std::string_view to_string(Fidelity f) {
  static constexpr std::array<std::string_view, 6> names{"L0", "L1", "L2", "L3", "L4", "L5"};
  return names[level(f)];
}

inline Fidelity parse_fidelity(std::string_view s) {
  if (s.size() == 2 && s[0] == 'L' && s[1] >= '0' && s[1] <= '5') return static_cast<Fidelity>(s[1] - '0');
  throw Error(Errc::ParseError, "unknown fidelity '" + std::string(s) + "'");
}

enum class Tier { hot, warm, graph };

inline std::string_view to_string(Tier t) {
  switch (t) {
    case Tier::hot: return "hot";
    case Tier::warm: return "warm";
    case Tier::graph: return "graph";
  }
  return "hot";
}

inline Tier parse_tier(std::string_view s) {
  if (s == "hot") return Tier::hot;
  if (s == "warm") return Tier::warm;
  if (s == "graph") return Tier::graph;
  throw Error(Errc::ParseError, "unknown tier '" + std::string(s) + "'");
}

enum class RecordState { pending, retained, promoted, quarantined, tombstone };

inline std::string_view to_string(RecordState s) {
  switch (s) {
    case RecordState::pending: return "pending";
    case RecordState::retained: return "retained";
    case RecordState::promoted: return "promoted";
    case RecordState::quarantined: return "quarantined";
    case RecordState::tombstone: return "tombstone";
  }
  return "pending";
}

inline RecordState parse_record_state(std::string_view s) {
  if (s == "pending") return RecordState::pending;
  if (s == "retained") return RecordState::retained;
  if (s == "promoted") return RecordState::promoted;
  if (s == "quarantined") return RecordState::quarantined;
  if (s == "tombstone") return RecordState::tombstone;
  throw Error(Errc::ParseError, "unknown record state '" + std::string(s) + "'");
}

/// One-way lattice pending -> {retained, promoted, quarantined} -> tombstone.
/// The only reversal is quarantined -> pending on re-admission.
inline bool valid_transition(RecordState from, RecordState to) {
  using S = RecordState;
  if (from == to) return true;
  switch (from) {
    case S::pending: return to != S::pending;
    case S::quarantined: return to == S::pending || to == S::tombstone;
    case S::retained:
    case S::promoted: return to == S::tombstone;
    case S::tombstone: return false;
  }
  return false;
}

/// Content appended to a memory by a low-strength reconsolidation.
struct Amendment {
  Instant at;
  std::string content;
  double alpha = 0.0;
  friend bool operator==(const Amendment&, const Amendment&) = default;
};

struct EpisodicRecord {
  MemoryEvent event;  // content is the current (possibly degraded) content
  Embedding embedding;
  double importance = 0.0;
  std::map<std::string, double> score_breakdown;
  Fidelity fidelity = Fidelity::L0;
  Tier tier = Tier::hot;
  Instant encoded_at;
  Instant last_accessed;
  std::uint64_t access_count = 0;
  Instant ttl_expires_at;
  RecordState state = RecordState::pending;

  std::uint64_t seq = 0;           // ingest order
  std::uint64_t content_hash = 0;  // hash of the original content
  std::size_t original_chars = 0;
  std::vector<std::string> entities;
  std::vector<std::string> merged_from;  // ids collapsed into this record by dedup
  std::optional<Instant> labile_until;
  std::vector<Amendment> amendments;

  const std::string& id() const { return event.id; }
  bool active() const { return state != RecordState::tombstone; }
  bool error_signal() const { return event.meta("error_signal") == "true"; }
  bool labile_at(Instant now) const { return labile_until && now < *labile_until; }

  friend bool operator==(const EpisodicRecord&, const EpisodicRecord&) = default;
};

/// Number of UTF-8 code points.
inline std::size_t char_count(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

/// ceil(chars / 4). The engine has no tokenizer; four characters per token
/// is the usual rough equivalence.
inline std::int64_t estimate_tokens(std::string_view content) {
  return static_cast<std::int64_t>((char_count(content) + 3) / 4);
}

}  // namespace engram
