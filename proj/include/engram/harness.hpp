#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "engram/config.hpp"
#include "engram/consolidation.hpp"
#include "engram/embedding.hpp"
#include "engram/errors.hpp"
#include "engram/forgetting.hpp"
#include "engram/graph.hpp"
#include "engram/model.hpp"
#include "engram/store.hpp"
#include "engram/time.hpp"
#include "engram/util.hpp"

namespace engram {

// ---------------------------------------------------------------------------
// Synthetic issue-tracker streams

struct StreamSpec {
  std::size_t events = 1000;
  std::size_t sessions = 20;
  double duplicate_rate = 0.4;          // slot is a copy of an earlier original
  double future_referenced_rate = 0.3;  // slot is a substantive report a later event cites
  double near_duplicate_share = 0.5;    // of duplicates, share that are perturbed copies
  double substitution_rate = 0.15;      // word substitution rate in perturbed copies
  double automation_share = 0.1;        // of filler, share that are CI reports
  double session_spacing_h = 24.0;
  double event_spacing_min = 3.0;
  Instant start = from_unix_millis(1704067200000);  // 2024-01-01T00:00:00Z
  // Copies pick their source among originals from the last N sessions
  // (current one included). 0 means any earlier original.
  std::size_t duplicate_window_sessions = 0;
};

enum class SlotKind { substantive, duplicate, filler };

struct GroundTruth {
  std::optional<std::string> is_duplicate_of;
  bool future_referenced = false;
  bool substantive = false;
  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct StreamManifest {
  std::vector<MemoryEvent> events;
  std::map<std::string, GroundTruth> truth;
  std::map<std::string, double> planted_rates;

  std::size_t count_future_referenced() const {
    return static_cast<std::size_t>(
        std::count_if(truth.begin(), truth.end(), [](const auto& kv) { return kv.second.future_referenced; }));
  }
  std::size_t count_duplicates() const {
    return static_cast<std::size_t>(
        std::count_if(truth.begin(), truth.end(), [](const auto& kv) { return kv.second.is_duplicate_of.has_value(); }));
  }
  friend bool operator==(const StreamManifest&, const StreamManifest&) = default;
};

/// Slot kinds drawn from a dedicated generator: one uniform draw per slot,
/// [0, dup) duplicate, [dup, dup + ref) substantive, the rest filler. The
/// last slot is always filler so every substantive report gets cited. A
/// duplicate drawn before any original exists becomes filler.
inline std::vector<SlotKind> plan_slots(const StreamSpec& spec, std::uint64_t seed) {
  if (spec.duplicate_rate < 0 || spec.future_referenced_rate < 0 ||
      spec.duplicate_rate + spec.future_referenced_rate > 1.0)
    throw Error(Errc::InvalidArgument, "stream rates must be non-negative and sum to at most 1");
  Rng rng(seed);
  std::vector<SlotKind> kinds;
  bool have_original = false;
  for (std::size_t i = 0; i < spec.events; ++i) {
    const double u = rng.uniform01();
    SlotKind k = SlotKind::filler;
    if (u < spec.duplicate_rate) k = have_original ? SlotKind::duplicate : SlotKind::filler;
    else if (u < spec.duplicate_rate + spec.future_referenced_rate) k = SlotKind::substantive;
    if (i + 1 == spec.events) k = SlotKind::filler;
    have_original = true;
    kinds.push_back(k);
  }
  return kinds;
}

namespace detail {

struct Vocab {
  std::vector<std::string> components{"TerminalService", "DebugAdapter", "SearchView", "ExtensionHost", "GitProvider",
                                      "SettingsEditor", "NotebookKernel", "FileExplorer", "TaskRunner", "RemoteTunnel",
                                      "TestController", "MarkdownPreview", "ThemeRegistry", "KeybindingResolver",
                                      "Minimap", "LanguageServer", "SnippetEngine", "ProblemsPanel", "TimelineView",
                                      "OutputChannel", "WebviewHost", "PortForwarder", "DiffEditor", "MergeEditor"};
  std::vector<std::string> platforms{"Windows", "macOS", "Ubuntu", "Fedora", "Alpine", "WSL", "ChromeOS", "Debian"};
  std::vector<std::string> symptoms{"freezes", "crashes", "leaks memory", "renders blank", "drops keystrokes",
                                    "hangs at startup", "spins the CPU", "loses focus", "flickers", "times out",
                                    "corrupts the buffer", "duplicates entries", "ignores the setting",
                                    "reports a stale result", "deadlocks"};
  std::vector<std::string> triggers{"resizing the panel", "switching branches", "opening a large workspace",
                                    "pasting multiline text", "restoring a session", "attaching to a container",
                                    "toggling word wrap", "reloading the window", "running tasks in parallel",
                                    "saving over the network", "renaming a symbol", "collapsing folders",
                                    "scrolling quickly", "splitting editors", "undoing a refactor"};
  std::vector<std::string> modules{"folding", "tokenizer", "scheduler", "watcher", "renderer", "indexer", "protocol",
                                   "cache", "layout", "registry", "sandbox", "telemetry", "decorations", "bracketpair",
                                   "quickpick", "hover", "suggest", "lens", "ipc", "pty"};
  std::vector<std::string> causes{"an unbounded retry loop", "a race between two listeners",
                                  "a missing dispose call", "an off-by-one in the range math",
                                  "stale cached metadata", "a blocking read on the main thread",
                                  "an integer overflow for huge files", "a wrong encoding guess",
                                  "an event fired before initialization", "a recursive watcher on symlinks",
                                  "locale-specific number parsing", "a timer that never clears"};
  std::vector<std::string> proposals{"debounce the handler", "move the work to a worker thread",
                                     "cap the queue length", "invalidate the cache on save",
                                     "add a cancellation token", "batch the updates per frame",
                                     "stream the file in chunks", "guard the listener registration",
                                     "precompute the index lazily", "pin the dependency version",
                                     "normalize paths before comparing", "fall back to polling"};
  std::vector<std::string> names{"alice", "bob", "carol", "dmitri", "eun", "farah", "gus", "hiro", "ines", "jonas"};
  std::vector<std::string> labels{"bug", "perf", "ux", "regression", "needs-triage", "confirmed", "upstream",
                                  "good-first-issue"};
  std::vector<std::string> statuses{"open", "triaged", "in progress", "in review", "blocked", "resolved"};
  std::vector<std::string> fill_words{"window", "value", "change", "result", "path", "item", "state", "update",
                                      "option", "entry", "handle", "event"};
};

inline const Vocab& vocab() {
  static const Vocab v;
  return v;
}

/// camelCase identifier from three word pools; one token to the embedder.
inline std::string symbol_name(Rng& rng) {
  static const std::vector<std::string> verbs{"flush", "resolve", "parse", "render", "schedule", "dispose", "merge",
                                              "compute", "validate", "hydrate", "watch", "encode", "measure", "attach",
                                              "collect", "restore", "emit", "sync", "probe", "split"};
  static const std::vector<std::string> adjs{"Pending", "Dirty", "Cached", "Remote", "Lazy", "Nested", "Stale",
                                             "Visible", "Shared", "Inline", "Deferred", "Active", "Partial", "Native"};
  static const std::vector<std::string> nouns{"Writes", "Tokens", "Ranges", "Frames", "Handles", "Markers", "Chunks",
                                              "Sessions", "Buffers", "Listeners", "Hunks", "Edits", "Glyphs",
                                              "Workers", "Snapshots", "Bindings"};
  return rng.pick(verbs) + rng.pick(adjs) + rng.pick(nouns);
}

inline std::string substantive_text(Rng& rng, std::size_t serial) {
  const auto& v = vocab();
  const std::string mod = rng.pick(v.modules);
  const std::string file = "src/" + mod + "/" + rng.pick(v.modules) + std::to_string(rng.range(1, 99)) + ".ts";
  const std::string ver = "1." + std::to_string(rng.range(60, 95)) + "." + std::to_string(rng.range(0, 9));
  auto sym = [&] { return symbol_name(rng); };
  auto num = [&](std::size_t lo, std::size_t hi) { return std::to_string(rng.range(lo, hi)); };
  auto comp = [&] { return rng.pick(v.components); };
  auto plat = [&] { return rng.pick(v.platforms); };
  auto modn = [&] { return rng.pick(v.modules); };
  auto code = [&] { return "E" + num(1000, 9999); };
  std::vector<std::string> pool{
      comp() + " " + rng.pick(v.symptoms) + " after " + rng.pick(v.triggers) + " on " + plat() + " " + ver + ".",
      "Trace " + sym() + " -> " + sym() + " at " + file + ":" + num(10, 2400) + ".",
      "Suspect " + rng.pick(v.causes) + " in " + sym() + ".",
      "Proposal: " + rng.pick(v.proposals) + ", guard " + sym() + ".",
      "Bisect: " + hex64(rng.next()).substr(0, 10) + " " + comp() + " " + sym() + ".",
      "Workaround " + modn() + "." + sym() + " false, restart " + comp() + ".",
      sym() + " " + num(2, 900) + "ms versus " + num(1, 90) + "ms.",
      plat() + " " + comp() + " " + sym() + " affected.",
      "Heap +" + num(20, 900) + "MB, " + sym() + " holds " + num(3, 90) + "k closures.",
      "Regressed " + ver + " from 1." + num(60, 95) + " nightly " + num(300, 999) + ".",
      "Logs: " + sym() + " " + code() + " every " + num(2, 60) + "s.",
      "Repro github.com/" + rng.pick(v.names) + "/" + sym() + ".",
      modn() + " plus " + modn() + " together triggers " + sym() + ".",
      "Reverting " + sym() + " fixes " + comp() + ".",
      "Profiler " + num(40, 99) + "% self " + sym() + " via " + comp() + ".",
      "Telemetry " + num(100, 9000) + " hits " + sym() + " " + plat() + ".",
      comp() + " duplicates " + sym() + " and " + sym() + ".",
      "Recording frame " + num(10, 600) + " shows " + sym() + " glitch.",
      "Assert " + code() + " fires inside " + sym() + " " + modn() + ".",
      "Threads " + sym() + " and " + sym() + " contend on " + modn() + " lock.",
      "Config " + modn() + "." + sym() + "=" + num(0, 64) + " reproduces reliably.",
      "Since " + ver + " " + comp() + " skips " + sym() + ".",
      "Docs for " + sym() + " disagree with " + comp() + " behaviour.",
      "Crashdump " + hex64(rng.next()).substr(0, 8) + " " + sym() + " " + code() + ".",
      "Upstream " + rng.pick(v.names) + " patched " + sym() + " in " + modn() + ".",
      "CPU " + num(60, 100) + "% " + plat() + " " + sym() + " loop.",
      "Flame graph: " + sym() + " > " + sym() + " > " + sym() + ".",
      "Keyboard " + rng.pick(v.names) + " layout breaks " + sym() + " " + comp() + ".",
  };
  rng.shuffle(pool);
  const std::size_t n = rng.range(4, 5);
  std::string out = pool[0];
  for (std::size_t i = 1; i < n; ++i) out += " " + pool[i];
  return out;
}

struct Filler {
  std::string kind;
  std::string content;
  Actor actor = Actor::user;
  bool automation = false;
};

inline Filler filler_event(Rng& rng, double automation_share, std::size_t serial) {
  const auto& v = vocab();
  if (rng.bernoulli(automation_share))
    return {"ci_report",
            "Automated check: the nightly CI pipeline finished with status " +
                std::string(rng.bernoulli(0.8) ? "passed" : "flaky") + " for build " + std::to_string(20000 + serial) +
                ".",
            Actor::automation, true};
  switch (rng.index(5)) {
    case 0: return {"label_added", "Added the label " + rng.pick(v.labels) + " to this issue.", Actor::user, false};
    case 1:
      return {"status_changed", "Changed the status of this issue to " + rng.pick(v.statuses) + ".", Actor::user, false};
    case 2: return {"assigned", "Assigned this issue to @" + rng.pick(v.names) + " for follow up.", Actor::user, false};
    case 3: return {"comment", "Thanks for the report, I will take a look at this soon.", Actor::agent, false};
    default: return {"comment", "Same here, I am also seeing this issue on my machine.", Actor::user, false};
  }
}

/// Replaces each word with probability `rate` by a stock word.
inline std::string perturb(const std::string& text, double rate, Rng& rng) {
  const auto& v = vocab();
  std::string out, word;
  auto flush = [&] {
    if (word.empty()) return;
    out += rng.bernoulli(rate) ? rng.pick(v.fill_words) : word;
    word.clear();
  };
  for (char c : text) {
    if (c == ' ') {
      flush();
      out += c;
    } else {
      word += c;
    }
  }
  flush();
  return out;
}

}  // namespace detail

/// Deterministic issue-tracker stream. Substantive reports are long,
/// specific and entity-rich; each is cited (through `causes`) by a later
/// follow-up comment. Filler is templated bookkeeping: labels, status
/// changes, assignments, acknowledgements and CI reports from low-authority
/// automation. Duplicates re-post an earlier original verbatim or with a
/// share of words swapped. The manifest records every plant.
inline StreamManifest generate_stream(const StreamSpec& spec, std::uint64_t seed) {
  if (spec.sessions == 0) throw Error(Errc::InvalidArgument, "stream needs at least one session");
  const auto kinds = plan_slots(spec, seed);
  Rng rng(splitmix64(seed ^ 0x5eed5eed5eed5eedULL));
  StreamManifest m;
  m.planted_rates = {{"duplicate", spec.duplicate_rate},
                     {"future_referenced", spec.future_referenced_rate},
                     {"near_duplicate_share", spec.near_duplicate_share}};

  const std::size_t per_session = (spec.events + spec.sessions - 1) / spec.sessions;
  std::vector<std::size_t> originals;  // indices of non-duplicate events
  std::vector<std::size_t> original_session;
  std::vector<std::string> uncited;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const std::size_t session = std::min(i / per_session, spec.sessions - 1);
    const std::size_t slot_in_session = i - session * per_session;
    MemoryEvent e;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "ev-%06zu", i + 1);
    e.id = idbuf;
    std::snprintf(idbuf, sizeof idbuf, "session-%03zu", session + 1);
    e.session_id = idbuf;
    e.timestamp = add_minutes(add_hours(spec.start, spec.session_spacing_h * static_cast<double>(session)),
                              spec.event_spacing_min * static_cast<double>(slot_in_session));
    GroundTruth gt;

    switch (kinds[i]) {
      case SlotKind::substantive:
        e.kind = rng.bernoulli(0.5) ? "issue_created" : "comment";
        e.actor = rng.bernoulli(0.7) ? Actor::user : Actor::agent;
        e.content = detail::substantive_text(rng, i);
        gt.substantive = true;
        gt.future_referenced = true;
        uncited.push_back(e.id);
        originals.push_back(i);
        original_session.push_back(session);
        break;
      case SlotKind::duplicate: {
        std::vector<std::size_t> pool;
        if (spec.duplicate_window_sessions > 0)
          for (std::size_t k = 0; k < originals.size(); ++k)
            if (original_session[k] + spec.duplicate_window_sessions > session) pool.push_back(originals[k]);
        const auto& src = m.events[rng.pick(pool.empty() ? originals : pool)];
        e.kind = src.kind;
        e.actor = src.actor;
        e.metadata = src.metadata;
        e.content = rng.bernoulli(spec.near_duplicate_share)
                        ? detail::perturb(src.content, spec.substitution_rate, rng)
                        : src.content;
        gt.is_duplicate_of = src.id;
        break;
      }
      case SlotKind::filler:
        if (!uncited.empty()) {
          e.kind = "comment";
          e.actor = Actor::user;
          e.content = "Following up on the earlier report, this still needs attention from the team.";
          e.causes = uncited;
          uncited.clear();
        } else {
          auto f = detail::filler_event(rng, spec.automation_share, i);
          e.kind = f.kind;
          e.actor = f.actor;
          e.content = f.content;
          if (f.automation) e.metadata["authority"] = "0.3";
        }
        originals.push_back(i);
        original_session.push_back(session);
        break;
    }
    m.truth[e.id] = gt;
    m.events.push_back(std::move(e));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Streaming run

/// Splits an ordered event list into sessions by first appearance.
inline std::vector<std::vector<MemoryEvent>> split_sessions(const std::vector<MemoryEvent>& events) {
  std::vector<std::vector<MemoryEvent>> out;
  std::map<std::string, std::size_t> at;
  for (const auto& e : events) {
    auto [it, fresh] = at.try_emplace(e.session_id, out.size());
    if (fresh) out.emplace_back();
    out[it->second].push_back(e);
  }
  return out;
}

struct Checkpoint {
  std::size_t index = 0;  // 1-based
  std::size_t sessions_seen = 0;
  std::size_t events_ingested = 0;
  Instant now;
  std::size_t active = 0;
  std::int64_t tokens = 0;
  std::size_t semantic_memories = 0;
  std::optional<ConsolidationReport> consolidation;
  std::optional<ForgettingReport> forgetting;
};

struct RunOptions {
  std::size_t every_n = 1;
  ConsolidationMode mode = ConsolidationMode::dedup;
  std::optional<std::int64_t> budget;
  bool baseline = false;  // keep everything: ingest only
  std::function<void(const Checkpoint&, const StoreState&)> observer;
};

struct RunMetrics {
  double retention_precision = 0.0;
  double store_reduction = 0.0;
  double retained_substantive_fraction = 0.0;
  std::size_t total_ingested = 0;
  std::size_t final_active = 0;
  std::size_t retained = 0;
  std::size_t retained_referenced = 0;
  std::int64_t final_tokens = 0;
  std::vector<std::size_t> store_size_series;
  std::vector<std::int64_t> token_totals;
  std::vector<Checkpoint> checkpoints;
  StoreConfig config_used;
  std::optional<std::int64_t> budget;
  bool completed = true;
  std::string error;
};

/// Counts toward precision: live, not quarantined, at most L3.
inline bool counts_as_retained(const EpisodicRecord& r) {
  return r.active() && r.state != RecordState::quarantined && r.fidelity <= Fidelity::L3;
}

/// Precision, reduction and substantive recall of a store against a
/// manifest.
inline void evaluate(const StoreState& s, const StreamManifest& m, std::size_t total_ingested, RunMetrics& out) {
  std::size_t retained = 0, hit = 0, substantive_kept = 0, substantive_total = 0;
  for (const auto& [_, gt] : m.truth) substantive_total += gt.substantive;
  for (const auto& r : s.records) {
    if (!counts_as_retained(r)) continue;
    ++retained;
    auto it = m.truth.find(r.id());
    if (it == m.truth.end()) continue;
    hit += it->second.future_referenced;
    substantive_kept += it->second.substantive;
  }
  out.retained = retained;
  out.retained_referenced = hit;
  out.retention_precision = retained ? static_cast<double>(hit) / static_cast<double>(retained) : 0.0;
  out.total_ingested = total_ingested;
  out.final_active = active_count(s);
  out.final_tokens = active_tokens(s);
  out.store_reduction =
      total_ingested ? 1.0 - static_cast<double>(out.final_active) / static_cast<double>(total_ingested) : 0.0;
  out.retained_substantive_fraction =
      substantive_total ? static_cast<double>(substantive_kept) / static_cast<double>(substantive_total) : 0.0;
}

struct RunResult {
  RunMetrics metrics;
  StoreState state;
};

/// Replays sessions in order. Every `every_n` sessions (and after the last
/// one) the store is consolidated, forgotten and matured at the latest
/// timestamp seen so far, so no decision can look ahead. On a batch error
/// the metrics collected so far are returned with `completed = false`.
inline RunResult stream_run(const std::vector<MemoryEvent>& events, const StreamManifest* manifest, StoreConfig cfg,
                            Embedder& embedder, const RunOptions& opts = {}) {
  if (opts.every_n == 0) throw Error(Errc::InvalidArgument, "every_n must be >= 1");
  if (opts.budget) cfg.token_budget = opts.budget;
  RunResult res{{}, StoreState(cfg)};
  auto& st = res.state;
  auto& met = res.metrics;
  met.config_used = cfg;
  met.budget = opts.budget;

  const auto sessions = split_sessions(events);
  std::size_t ingested = 0;
  Instant now = epoch();
  try {
    for (std::size_t s = 0; s < sessions.size(); ++s) {
      for (const auto& e : sessions[s]) {
        ingest(st, e, embedder);
        ++ingested;
        now = std::max(now, e.timestamp);
      }
      const bool due = (s + 1) % opts.every_n == 0 || s + 1 == sessions.size();
      if (!due) continue;
      Checkpoint cp;
      cp.index = met.checkpoints.size() + 1;
      cp.sessions_seen = s + 1;
      cp.events_ingested = ingested;
      cp.now = now;
      if (!opts.baseline) {
        cp.consolidation = run_consolidation(st, {opts.mode, now, {}});
        cp.forgetting = run_forgetting(st, now, opts.budget);
        maturation_tick(st.graph, now, st.config);
      }
      cp.active = active_count(st);
      cp.tokens = active_tokens(st);
      cp.semantic_memories = st.graph.memory_count();
      met.store_size_series.push_back(cp.active);
      met.token_totals.push_back(cp.tokens);
      if (opts.observer) opts.observer(cp, st);
      met.checkpoints.push_back(std::move(cp));
    }
  } catch (const Error& e) {
    met.completed = false;
    met.error = e.what();
  }
  if (manifest) evaluate(st, *manifest, ingested, met);
  else {
    met.total_ingested = ingested;
    met.final_active = active_count(st);
    met.final_tokens = active_tokens(st);
    met.store_reduction = ingested ? 1.0 - static_cast<double>(met.final_active) / static_cast<double>(ingested) : 0.0;
  }
  return res;
}

inline const std::vector<std::int64_t>& default_sweep_budgets() {
  static const std::vector<std::int64_t> b{25000, 50000, 115000, 200000};
  return b;
}

struct SweepRow {
  std::int64_t budget = 0;
  RunMetrics metrics;
};

/// One full run per budget, ascending.
inline std::vector<SweepRow> budget_sweep(const StreamManifest& m, const StoreConfig& cfg, Embedder& embedder,
                                          std::vector<std::int64_t> budgets, RunOptions opts = {}) {
  std::sort(budgets.begin(), budgets.end());
  std::vector<SweepRow> rows;
  for (auto b : budgets) {
    opts.budget = b;
    rows.push_back({b, stream_run(m.events, &m, cfg, embedder, opts).metrics});
  }
  return rows;
}

}  // namespace engram
