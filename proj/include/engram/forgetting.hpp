#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "engram/config.hpp"
#include "engram/errors.hpp"
#include "engram/model.hpp"
#include "engram/scoring.hpp"
#include "engram/store.hpp"
#include "engram/time.hpp"

namespace engram {

// ---------------------------------------------------------------------------
// Graceful degradation

namespace detail {

/// Prefix of at most `max_chars` code points.
inline std::string prefix_chars(std::string_view s, std::size_t max_chars) {
  std::size_t chars = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
      if (chars == max_chars) return std::string(s.substr(0, i));
      ++chars;
    }
  }
  return std::string(s);
}

inline std::string first_sentence(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if ((c == '.' || c == '!' || c == '?' || c == '\n') && (i + 1 == s.size() || s[i + 1] == ' ' || s[i + 1] == '\n'))
      return std::string(s.substr(0, c == '\n' ? i : i + 1));
  }
  return std::string(s);
}

inline std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

}  // namespace detail

/// Turns a record into a tombstone: level L5, empty content, metadata and
/// identity kept.
inline void make_tombstone(EpisodicRecord& r) {
  r.fidelity = Fidelity::L5;
  r.event.content.clear();
  r.state = RecordState::tombstone;
  r.labile_until.reset();
}

/// Advances a record exactly one fidelity level. Content is cut to the new
/// level's share of the original length: a plain prefix at L1/L2, the first
/// sentence plus entity names at L3, the kind plus entity names at L4, and
/// nothing at L5.
inline EpisodicRecord degrade(EpisodicRecord r) {
  if (r.fidelity == Fidelity::L5) throw Error(Errc::AlreadyTombstone, r.id());
  const auto next = static_cast<Fidelity>(level(r.fidelity) + 1);
  const auto allowance =
      static_cast<std::size_t>(std::floor(retained_fraction(next) * static_cast<double>(r.original_chars)));
  switch (next) {
    case Fidelity::L1:
    case Fidelity::L2:
      r.event.content = detail::prefix_chars(r.event.content, allowance);
      break;
    case Fidelity::L3: {
      std::string gist = detail::first_sentence(r.event.content);
      if (!r.entities.empty()) gist += " [" + detail::join(r.entities, ", ") + "]";
      r.event.content = detail::prefix_chars(gist, allowance);
      break;
    }
    case Fidelity::L4: {
      std::string stub = r.event.kind;
      if (!r.entities.empty()) stub += ": " + detail::join(r.entities, ", ");
      r.event.content = detail::prefix_chars(stub, std::min(allowance, char_count(r.event.content)));
      break;
    }
    case Fidelity::L5:
    case Fidelity::L0:
      break;
  }
  r.fidelity = next;
  if (next == Fidelity::L5) make_tombstone(r);
  return r;
}

/// Age-and-score trigger: older than the level's age threshold and decayed
/// importance below the floor.
inline bool should_degrade(const EpisodicRecord& r, Instant now, const StoreConfig& cfg) {
  if (r.fidelity >= Fidelity::L5) return false;
  const double age_h = hours_between(r.encoded_at, now);
  if (age_h < 0.0) return false;
  const double threshold_h = cfg.degrade_age_days[static_cast<std::size_t>(level(r.fidelity))] * 24.0;
  return age_h > threshold_h && decay_importance(r, now, cfg.lambda_decay) < cfg.importance_floor;
}

// ---------------------------------------------------------------------------
// TTL

/// Tombstones every retained or promoted record whose TTL has passed. A
/// promoted record loses only its episodic copy; the semantic memory built
/// from it stays in the graph. Returns the expired ids.
inline std::vector<std::string> apply_ttl(StoreState& s, Instant now) {
  std::vector<std::string> expired;
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    const auto& r = s.records[i];
    if (r.state != RecordState::retained && r.state != RecordState::promoted) continue;
    if (now <= r.ttl_expires_at) continue;
    expired.push_back(r.id());
    make_tombstone(s.records.edit(i));
  }
  return expired;
}

// ---------------------------------------------------------------------------
// Interference

enum class InterferenceDirection { retroactive, proactive };

inline std::string_view to_string(InterferenceDirection d) {
  return d == InterferenceDirection::retroactive ? "retroactive" : "proactive";
}

struct InterferenceContributor {
  std::string memory_id;
  InterferenceDirection direction;
  double similarity = 0.0;
};

struct InterferenceAssessment {
  std::string memory_id;
  double interference = 0.0;
  std::vector<InterferenceContributor> contributors;
};

/// Sum of direction-weighted similarities to every live record at or above
/// the threshold. Newer neighbours interfere retroactively, older ones
/// proactively.
inline InterferenceAssessment interference(const EpisodicRecord& memory, const StoreState& store, double threshold) {
  const auto& cfg = store.config;
  InterferenceAssessment a{memory.id(), 0.0, {}};
  for (const auto& other : store.records) {
    if (!other.active() || other.state == RecordState::quarantined || other.id() == memory.id()) continue;
    const double sim = cosine_similarity(memory.embedding, other.embedding);
    if (sim < threshold) continue;
    const auto dir = encoded_before(memory, other) ? InterferenceDirection::retroactive : InterferenceDirection::proactive;
    a.interference += (dir == InterferenceDirection::retroactive ? cfg.retroactive_weight : cfg.proactive_weight) * sim;
    a.contributors.push_back({other.id(), dir, sim});
  }
  return a;
}

inline constexpr double kPriorityEpsilon = 1e-6;

/// Records that interference-driven forgetting may touch: scored, unpinned
/// episodic records. Promoted sources, labile records and records tagged
/// as error signals are left alone.
inline bool forgettable(const EpisodicRecord& r, Instant now) {
  return r.state == RecordState::retained && !r.labile_at(now) && !r.error_signal();
}

struct ForgetCandidate {
  std::string memory_id;
  double priority = 0.0;
  double interference = 0.0;
  double decayed_importance = 0.0;
};

/// Candidate order: priority descending, then lower decayed importance,
/// then older, then id.
inline bool forget_order(const ForgetCandidate& a, Instant ta, const ForgetCandidate& b, Instant tb) {
  if (a.priority != b.priority) return a.priority > b.priority;
  if (a.decayed_importance != b.decayed_importance) return a.decayed_importance < b.decayed_importance;
  if (ta != tb) return ta < tb;
  return a.memory_id < b.memory_id;
}

/// Ranks forgettable records by interference / (decayed importance + eps),
/// keeping those strictly above `priority_floor`.
inline std::vector<ForgetCandidate> select_forget_candidates(const StoreState& store, Instant now,
                                                             double priority_floor) {
  const auto& cfg = store.config;
  std::vector<std::pair<ForgetCandidate, Instant>> cands;
  for (const auto& r : store.records) {
    if (!forgettable(r, now)) continue;
    const double inter = interference(r, store, cfg.interference_threshold).interference;
    const double imp = decay_importance(r, now, cfg.lambda_decay);
    const double pr = inter / (imp + kPriorityEpsilon);
    if (pr > priority_floor) cands.push_back({{r.id(), pr, inter, imp}, r.encoded_at});
  }
  std::sort(cands.begin(), cands.end(),
            [](const auto& a, const auto& b) { return forget_order(a.first, a.second, b.first, b.second); });
  std::vector<ForgetCandidate> out;
  out.reserve(cands.size());
  for (auto& c : cands) out.push_back(std::move(c.first));
  return out;
}

// ---------------------------------------------------------------------------
// Budget

struct BudgetReport {
  std::int64_t budget = 0;
  std::int64_t tokens_before = 0;
  std::int64_t tokens_after = 0;
  std::size_t steps = 0;
  std::size_t tombstoned = 0;
  std::size_t protected_steps = 0;
  std::vector<std::string> touched;  // distinct ids, first-touch order
  bool within_budget = true;
};

/// Degrades records one level at a time until the live token total fits
/// the budget. Forgettable records go first in candidate order (priority
/// recomputed whenever a neighbour is tombstoned). When none remain,
/// promoted and error-signal records are thinned, least important first,
/// but never below L4.
inline BudgetReport forget_to_budget(StoreState& s, std::int64_t budget, Instant now) {
  if (budget <= 0) throw Error(Errc::InvalidArgument, "budget must be positive");
  const auto& cfg = s.config;
  BudgetReport rep;
  rep.budget = budget;
  rep.tokens_before = active_tokens(s);
  std::int64_t tokens = rep.tokens_before;
  std::set<std::string> touched;
  auto touch = [&](const std::string& id) {
    if (touched.insert(id).second) rep.touched.push_back(id);
  };
  if (tokens <= budget) {
    rep.tokens_after = tokens;
    return rep;
  }

  const std::size_t n = s.records.size();
  std::vector<char> eligible(n, 0);
  std::vector<double> decayed(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = s.records[i];
    if (!forgettable(r, now)) continue;
    eligible[i] = 1;
    decayed[i] = decay_importance(r, now, cfg.lambda_decay);
  }

  // For each eligible record, the live records interfering with it.
  std::vector<std::vector<std::pair<std::size_t, double>>> contrib(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!eligible[i]) continue;
    const auto& r = s.records[i];
    for (std::size_t j = 0; j < n; ++j) {
      const auto& o = s.records[j];
      if (j == i || !o.active() || o.state == RecordState::quarantined) continue;
      const double sim = cosine_similarity(r.embedding, o.embedding);
      if (sim < cfg.interference_threshold) continue;
      const double w = encoded_before(r, o) ? cfg.retroactive_weight : cfg.proactive_weight;
      contrib[i].emplace_back(j, w * sim);
    }
  }
  std::vector<std::vector<std::size_t>> dependents(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& [j, _] : contrib[i]) dependents[j].push_back(i);

  std::vector<char> live(n, 0);
  for (std::size_t i = 0; i < n; ++i) live[i] = s.records[i].active();
  auto priority_of = [&](std::size_t i) {
    double inter = 0.0;
    for (const auto& [j, ws] : contrib[i])
      if (live[j]) inter += ws;
    return inter / (decayed[i] + kPriorityEpsilon);
  };

  using Key = std::tuple<double, double, Instant, std::string, std::size_t>;  // -priority, decayed, time, id, row
  std::set<Key> queue;
  std::vector<double> prio(n, 0.0);
  auto key_of = [&](std::size_t i) {
    return Key{-prio[i], decayed[i], s.records[i].encoded_at, s.records[i].id(), i};
  };
  for (std::size_t i = 0; i < n; ++i)
    if (eligible[i]) {
      prio[i] = priority_of(i);
      queue.insert(key_of(i));
    }

  auto step = [&](std::size_t i) {
    const auto before = estimate_tokens(s.records[i].event.content);
    auto& rec = s.records.edit(i);
    rec = degrade(std::move(rec));
    tokens += estimate_tokens(rec.event.content) - before;
    ++rep.steps;
    touch(rec.id());
    return rec.state == RecordState::tombstone;
  };

  while (tokens > budget && !queue.empty()) {
    const std::size_t i = std::get<4>(*queue.begin());
    if (step(i)) {
      ++rep.tombstoned;
      queue.erase(queue.begin());
      live[i] = 0;
      for (std::size_t d : dependents[i]) {
        if (!eligible[d] || !live[d]) continue;
        queue.erase(key_of(d));
        prio[d] = priority_of(d);
        queue.insert(key_of(d));
      }
    }
  }

  if (tokens > budget) {
    std::vector<std::size_t> pinned;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = s.records[i];
      const bool is_pinned = r.state == RecordState::promoted || (r.state == RecordState::retained && r.error_signal());
      if (is_pinned && r.fidelity < Fidelity::L4 && !r.labile_at(now)) pinned.push_back(i);
    }
    std::sort(pinned.begin(), pinned.end(), [&](std::size_t a, std::size_t b) {
      const auto& x = s.records[a];
      const auto& y = s.records[b];
      const double dx = decay_importance(x, now, cfg.lambda_decay);
      const double dy = decay_importance(y, now, cfg.lambda_decay);
      if (dx != dy) return dx < dy;
      if (x.encoded_at != y.encoded_at) return x.encoded_at < y.encoded_at;
      return x.id() < y.id();
    });
    for (std::size_t i : pinned) {
      while (tokens > budget && s.records[i].fidelity < Fidelity::L4) {
        step(i);
        ++rep.protected_steps;
      }
      if (tokens <= budget) break;
    }
  }

  rep.tokens_after = tokens;
  rep.within_budget = tokens <= budget;
  return rep;
}

// ---------------------------------------------------------------------------
// Forgetting job

struct ForgettingReport {
  Instant now;
  std::size_t ttl_expired = 0;
  std::size_t age_degraded = 0;
  std::size_t interference_degraded = 0;
  std::size_t budget_records = 0;  // records first touched by the budget pass
  std::size_t budget_steps = 0;
  std::size_t records_touched = 0;
  std::int64_t tokens_before = 0;
  std::int64_t tokens_after = 0;
  std::size_t store_size_before = 0;
  std::size_t store_size_after = 0;
  std::optional<std::int64_t> budget;
  bool within_budget = true;
};

/// TTL expiry, then one age-triggered degradation step, then one step for
/// every interference candidate above the priority floor, then the budget
/// pass when a budget is configured. Each record is attributed to the first
/// pass that touched it. Runs on a copy; the store is replaced only on
/// success.
inline ForgettingReport run_forgetting(StoreState& state, Instant now, std::optional<std::int64_t> budget = std::nullopt) {
  StoreState work = state;
  const auto& cfg = work.config;
  if (!budget) budget = cfg.token_budget;
  ForgettingReport rep;
  rep.now = now;
  rep.budget = budget;
  rep.tokens_before = active_tokens(work);
  rep.store_size_before = active_count(work);
  std::set<std::string> touched;

  for (auto& id : apply_ttl(work, now)) {
    touched.insert(std::move(id));
    ++rep.ttl_expired;
  }

  for (std::size_t i = 0; i < work.records.size(); ++i) {
    const auto& r = work.records[i];
    if (r.state != RecordState::retained || r.labile_at(now) || !should_degrade(r, now, cfg)) continue;
    touched.insert(r.id());
    auto& m = work.records.edit(i);
    m = degrade(std::move(m));
    ++rep.age_degraded;
  }

  for (const auto& c : select_forget_candidates(work, now, cfg.forget_priority_floor)) {
    if (touched.count(c.memory_id)) continue;
    touched.insert(c.memory_id);
    auto* m = work.records.edit(c.memory_id);
    *m = degrade(std::move(*m));
    ++rep.interference_degraded;
  }

  if (budget) {
    auto b = forget_to_budget(work, *budget, now);
    rep.budget_steps = b.steps;
    rep.within_budget = b.within_budget;
    for (const auto& id : b.touched)
      if (touched.insert(id).second) ++rep.budget_records;
  }

  rep.records_touched = touched.size();
  rep.tokens_after = active_tokens(work);
  rep.store_size_after = active_count(work);
  state = std::move(work);
  return rep;
}

}  // namespace engram
