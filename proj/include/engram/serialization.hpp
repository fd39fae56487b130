#pragma once

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "engram/calibration.hpp"
#include "engram/config.hpp"
#include "engram/consolidation.hpp"
#include "engram/forgetting.hpp"
#include "engram/graph.hpp"
#include "engram/harness.hpp"
#include "engram/model.hpp"
#include "engram/retrieval.hpp"
#include "engram/store.hpp"
#include "engram/time.hpp"
#include "engram/util.hpp"

namespace engram {

using Json = nlohmann::json;

inline constexpr const char* kSnapshotFormat = "engram-snapshot";
inline constexpr int kSnapshotVersion = 1;

namespace detail {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

inline const Json& require(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(Errc::ParseError, std::string("missing field '") + key + "'");
  return *it;
}

inline Json instant_json(Instant t) { return format_rfc3339(t); }
inline Instant instant_from(const Json& j) { return parse_rfc3339(j.get<std::string>()); }

inline Json optional_instant(const std::optional<Instant>& t) { return t ? Json(format_rfc3339(*t)) : Json(nullptr); }
inline std::optional<Instant> optional_instant_from(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return instant_from(*it);
}

/// Little-endian IEEE-754 doubles, base64.
inline std::string encode_doubles(std::span<const double> v) {
  std::vector<std::uint8_t> bytes(v.size() * 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &v[i], 8);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return base64::encode(bytes);
}

inline std::vector<double> decode_doubles(std::string_view text) {
  const auto bytes = base64::decode(text);
  if (bytes.size() % 8) throw Error(Errc::ParseError, "embedding payload is not a whole number of doubles");
  std::vector<double> v(bytes.size() / 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    std::memcpy(&v[i], &bits, 8);
  }
  return v;
}

inline Json embedding_json(const Embedding& e) { return encode_doubles(e.values()); }

inline Embedding embedding_from(const Json& j) {
  auto v = decode_doubles(j.get<std::string>());
  if (v.empty()) return {};
  return Embedding::from_unit(std::move(v));
}

inline std::string metadata_value(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Events

inline Json to_json(const MemoryEvent& e) {
  Json meta = Json::object();
  for (const auto& [k, v] : e.metadata) meta[k] = v;
  return {{"id", e.id},
          {"ts", format_rfc3339(e.timestamp)},
          {"session_id", e.session_id},
          {"actor", to_string(e.actor)},
          {"kind", e.kind},
          {"content", e.content},
          {"metadata", meta},
          {"causes", e.causes}};
}

inline MemoryEvent event_from_json(const Json& j) {
  MemoryEvent e;
  try {
    e.id = detail::require(j, "id").get<std::string>();
    if (auto it = j.find("ts"); it != j.end()) e.timestamp = detail::instant_from(*it);
    else e.timestamp = detail::instant_from(detail::require(j, "timestamp"));
    e.session_id = detail::get_or<std::string>(j, "session_id", "");
    e.actor = parse_actor(detail::get_or<std::string>(j, "actor", "user"));
    e.kind = detail::get_or<std::string>(j, "kind", "message");
    e.content = detail::get_or<std::string>(j, "content", "");
    if (auto it = j.find("metadata"); it != j.end() && it->is_object())
      for (const auto& [k, v] : it->items()) e.metadata[k] = detail::metadata_value(v);
    if (auto it = j.find("causes"); it != j.end() && !it->is_null()) e.causes = it->get<std::vector<std::string>>();
  } catch (const Json::exception& ex) {
    throw Error(Errc::ParseError, ex.what());
  }
  return e;
}

struct JsonlParse {
  std::vector<MemoryEvent> events;
  std::vector<std::pair<std::size_t, std::string>> errors;  // line number, message
};

/// One event per non-blank line. Malformed lines are reported, not fatal.
inline JsonlParse read_events_jsonl(std::istream& in) {
  JsonlParse out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.events.push_back(event_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      out.errors.emplace_back(n, e.what());
    } catch (const Error& e) {
      out.errors.emplace_back(n, e.what());
    }
  }
  return out;
}

inline void write_events_jsonl(std::ostream& out, const std::vector<MemoryEvent>& events) {
  for (const auto& e : events) out << to_json(e).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Config and calibration profile

inline Json to_json(const SignalWeights& w) {
  return {{"mode", w.mode == WeightMode::five_factor ? "five_factor" : "calibrated_four"}, {"weights", w.weights}};
}

inline SignalWeights signal_weights_from_json(const Json& j) {
  SignalWeights w;
  const auto mode = detail::get_or<std::string>(j, "mode", "five_factor");
  if (mode == "five_factor") w.mode = WeightMode::five_factor;
  else if (mode == "calibrated_four") w.mode = WeightMode::calibrated_four;
  else throw Error(Errc::ParseError, "unknown weight mode '" + mode + "'");
  w.weights = detail::require(j, "weights").get<std::map<std::string, double>>();
  return w;
}

inline Json to_json(const CalibrationProfile& p) {
  return {{"near_dedup_threshold", p.near_dedup_threshold},
          {"cluster_distance", p.cluster_distance},
          {"interference_threshold", p.interference_threshold},
          {"signal_weights", to_json(p.signal_weights)},
          {"per_signal_auc", p.per_signal_auc},
          {"length_p95_chars", p.length_p95_chars},
          {"corpus_fingerprint", p.corpus_fingerprint},
          {"provenance", p.provenance}};
}

inline CalibrationProfile profile_from_json(const Json& j) {
  try {
    CalibrationProfile p;
    p.near_dedup_threshold = detail::require(j, "near_dedup_threshold").get<double>();
    p.cluster_distance = detail::require(j, "cluster_distance").get<double>();
    p.interference_threshold = detail::require(j, "interference_threshold").get<double>();
    p.signal_weights = signal_weights_from_json(detail::require(j, "signal_weights"));
    p.per_signal_auc = detail::get_or<std::map<std::string, double>>(j, "per_signal_auc", {});
    p.length_p95_chars = detail::get_or<double>(j, "length_p95_chars", 280.0);
    p.corpus_fingerprint = detail::get_or<std::string>(j, "corpus_fingerprint", "");
    p.provenance = detail::get_or<std::string>(j, "provenance", "");
    p.signal_weights.validate();
    return p;
  } catch (const Json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

inline Json to_json(const StoreConfig& c) {
  Json j;
  j["dimension"] = c.dimension;
  j["embed_seed"] = c.embed_seed;
  j["lambda_decay"] = c.lambda_decay;
  j["near_dedup_threshold"] = c.near_dedup_threshold;
  j["cluster_distance"] = c.cluster_distance;
  j["interference_threshold"] = c.interference_threshold;
  j["hot_ttl_h"] = c.hot_ttl_h;
  j["warm_ttl_h"] = c.warm_ttl_h;
  j["consolidate_every_n_sessions"] = c.consolidate_every_n_sessions;
  j["classification_fractions"] = {{"promote", c.classification_fractions.promote},
                                   {"retain", c.classification_fractions.retain},
                                   {"prune", c.classification_fractions.prune}};
  j["skew_tolerance_min"] = c.skew_tolerance_min;
  j["quarantine_ttl_min"] = c.quarantine_ttl_min;
  j["authority_downweight"] = c.authority_downweight;
  j["authority_cutoff"] = c.authority_cutoff;
  j["alert_surprise"] = c.alert_surprise;
  j["gist_top_m"] = c.gist_top_m;
  j["gist_max_tokens"] = c.gist_max_tokens;
  j["signal_weights"] = to_json(c.signal_weights);
  j["length_norm_chars"] = c.length_norm_chars;
  j["retroactive_weight"] = c.retroactive_weight;
  j["proactive_weight"] = c.proactive_weight;
  j["importance_floor"] = c.importance_floor;
  j["degrade_age_days"] = c.degrade_age_days;
  j["forget_priority_floor"] = c.forget_priority_floor;
  j["token_budget"] = c.token_budget ? Json(*c.token_budget) : Json(nullptr);
  j["maturation_enabled"] = c.maturation_enabled;
  j["maturation_half_life_h"] = c.maturation_half_life_h;
  j["maturation_slope"] = c.maturation_slope;
  j["retrieval_activation"] = c.retrieval_activation;
  j["priming_gamma"] = c.priming_gamma;
  j["retrieval_k"] = c.retrieval_k;
  j["max_hops"] = c.max_hops;
  j["importance_filter"] = c.importance_filter;
  j["recency_boost_beta"] = c.recency_boost_beta;
  j["recency_boost_lambda"] = c.recency_boost_lambda;
  j["lability_window_min"] = c.lability_window_min;
  j["alpha_confidence"] = c.alpha_confidence;
  j["alpha_severity"] = c.alpha_severity;
  j["alpha_staleness"] = c.alpha_staleness;
  j["reinforce_step"] = c.reinforce_step;
  return j;
}

/// Overrides fields of `base` with whatever `j` provides. A nested
/// "calibration" object (or a bare profile) is applied as a profile.
inline StoreConfig config_from_json(const Json& j, StoreConfig base = {}) {
  try {
    auto set = [&](const char* key, auto& field) {
      if (auto it = j.find(key); it != j.end() && !it->is_null()) field = it->get<std::decay_t<decltype(field)>>();
    };
    set("dimension", base.dimension);
    set("embed_seed", base.embed_seed);
    set("lambda_decay", base.lambda_decay);
    set("near_dedup_threshold", base.near_dedup_threshold);
    set("cluster_distance", base.cluster_distance);
    set("interference_threshold", base.interference_threshold);
    set("hot_ttl_h", base.hot_ttl_h);
    set("warm_ttl_h", base.warm_ttl_h);
    set("consolidate_every_n_sessions", base.consolidate_every_n_sessions);
    if (auto it = j.find("classification_fractions"); it != j.end()) {
      base.classification_fractions.promote = detail::get_or<double>(*it, "promote", base.classification_fractions.promote);
      base.classification_fractions.retain = detail::get_or<double>(*it, "retain", base.classification_fractions.retain);
      base.classification_fractions.prune = detail::get_or<double>(*it, "prune", base.classification_fractions.prune);
    }
    set("skew_tolerance_min", base.skew_tolerance_min);
    set("quarantine_ttl_min", base.quarantine_ttl_min);
    set("authority_downweight", base.authority_downweight);
    set("authority_cutoff", base.authority_cutoff);
    set("alert_surprise", base.alert_surprise);
    set("gist_top_m", base.gist_top_m);
    set("gist_max_tokens", base.gist_max_tokens);
    if (auto it = j.find("signal_weights"); it != j.end()) base.signal_weights = signal_weights_from_json(*it);
    set("length_norm_chars", base.length_norm_chars);
    set("retroactive_weight", base.retroactive_weight);
    set("proactive_weight", base.proactive_weight);
    set("importance_floor", base.importance_floor);
    set("degrade_age_days", base.degrade_age_days);
    set("forget_priority_floor", base.forget_priority_floor);
    if (auto it = j.find("token_budget"); it != j.end())
      base.token_budget = it->is_null() ? std::nullopt : std::optional<std::int64_t>(it->get<std::int64_t>());
    set("maturation_enabled", base.maturation_enabled);
    set("maturation_half_life_h", base.maturation_half_life_h);
    set("maturation_slope", base.maturation_slope);
    set("retrieval_activation", base.retrieval_activation);
    set("priming_gamma", base.priming_gamma);
    set("retrieval_k", base.retrieval_k);
    set("max_hops", base.max_hops);
    set("importance_filter", base.importance_filter);
    set("recency_boost_beta", base.recency_boost_beta);
    set("recency_boost_lambda", base.recency_boost_lambda);
    set("lability_window_min", base.lability_window_min);
    set("alpha_confidence", base.alpha_confidence);
    set("alpha_severity", base.alpha_severity);
    set("alpha_staleness", base.alpha_staleness);
    set("reinforce_step", base.reinforce_step);
    if (auto it = j.find("calibration"); it != j.end() && it->is_object()) base.apply(profile_from_json(*it));
    if (j.contains("corpus_fingerprint")) base.apply(profile_from_json(j));  // a bare profile
  } catch (const Json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------
// Records and graph

inline Json to_json(const Amendment& a) {
  return {{"at", format_rfc3339(a.at)}, {"content", a.content}, {"alpha", a.alpha}};
}

inline Amendment amendment_from_json(const Json& j) {
  return {detail::instant_from(detail::require(j, "at")), detail::require(j, "content").get<std::string>(),
          detail::require(j, "alpha").get<double>()};
}

inline Json amendments_json(const std::vector<Amendment>& v) {
  Json a = Json::array();
  for (const auto& x : v) a.push_back(to_json(x));
  return a;
}

inline std::vector<Amendment> amendments_from(const Json& j, const char* key) {
  std::vector<Amendment> out;
  if (auto it = j.find(key); it != j.end())
    for (const auto& x : *it) out.push_back(amendment_from_json(x));
  return out;
}

inline Json to_json(const EpisodicRecord& r) {
  return {{"event", to_json(r.event)},
          {"embedding", detail::embedding_json(r.embedding)},
          {"importance", r.importance},
          {"score_breakdown", r.score_breakdown},
          {"fidelity", to_string(r.fidelity)},
          {"tier", to_string(r.tier)},
          {"encoded_at", format_rfc3339(r.encoded_at)},
          {"last_accessed", format_rfc3339(r.last_accessed)},
          {"access_count", r.access_count},
          {"ttl_expires_at", format_rfc3339(r.ttl_expires_at)},
          {"state", to_string(r.state)},
          {"seq", r.seq},
          {"content_hash", hex64(r.content_hash)},
          {"original_chars", r.original_chars},
          {"entities", r.entities},
          {"merged_from", r.merged_from},
          {"labile_until", detail::optional_instant(r.labile_until)},
          {"amendments", amendments_json(r.amendments)}};
}

inline EpisodicRecord record_from_json(const Json& j) {
  using detail::require;
  EpisodicRecord r;
  r.event = event_from_json(require(j, "event"));
  r.embedding = detail::embedding_from(require(j, "embedding"));
  r.importance = require(j, "importance").get<double>();
  r.score_breakdown = detail::get_or<std::map<std::string, double>>(j, "score_breakdown", {});
  r.fidelity = parse_fidelity(require(j, "fidelity").get<std::string>());
  r.tier = parse_tier(require(j, "tier").get<std::string>());
  r.encoded_at = detail::instant_from(require(j, "encoded_at"));
  r.last_accessed = detail::instant_from(require(j, "last_accessed"));
  r.access_count = require(j, "access_count").get<std::uint64_t>();
  r.ttl_expires_at = detail::instant_from(require(j, "ttl_expires_at"));
  r.state = parse_record_state(require(j, "state").get<std::string>());
  r.seq = require(j, "seq").get<std::uint64_t>();
  r.content_hash = std::stoull(require(j, "content_hash").get<std::string>(), nullptr, 16);
  r.original_chars = require(j, "original_chars").get<std::size_t>();
  r.entities = detail::get_or<std::vector<std::string>>(j, "entities", {});
  r.merged_from = detail::get_or<std::vector<std::string>>(j, "merged_from", {});
  r.labile_until = detail::optional_instant_from(j, "labile_until");
  r.amendments = amendments_from(j, "amendments");
  return r;
}

inline Json to_json(const SemanticMemory& m) {
  return {{"id", m.id},
          {"gist", m.gist},
          {"embedding", detail::embedding_json(m.embedding)},
          {"source_ids", m.source_ids},
          {"created_at", format_rfc3339(m.created_at)},
          {"activation_strength", m.activation_strength},
          {"access_count", m.access_count},
          {"last_accessed", format_rfc3339(m.last_accessed)},
          {"entities", m.entities},
          {"labile_until", detail::optional_instant(m.labile_until)},
          {"amendments", amendments_json(m.amendments)}};
}

inline SemanticMemory semantic_memory_from_json(const Json& j) {
  using detail::require;
  SemanticMemory m;
  m.id = require(j, "id").get<std::string>();
  m.gist = require(j, "gist").get<std::string>();
  m.embedding = detail::embedding_from(require(j, "embedding"));
  m.source_ids = require(j, "source_ids").get<std::vector<std::string>>();
  m.created_at = detail::instant_from(require(j, "created_at"));
  m.activation_strength = require(j, "activation_strength").get<double>();
  m.access_count = require(j, "access_count").get<std::uint64_t>();
  m.last_accessed = detail::instant_from(require(j, "last_accessed"));
  m.entities = detail::get_or<std::vector<std::string>>(j, "entities", {});
  m.labile_until = detail::optional_instant_from(j, "labile_until");
  m.amendments = amendments_from(j, "amendments");
  return m;
}

inline Json to_json(const SemanticGraph& g) {
  Json entities = Json::array();
  for (const auto& [key, e] : g.entities())
    entities.push_back({{"key", key},
                        {"name", e.name},
                        {"importance", e.importance},
                        {"first_seen", format_rfc3339(e.first_seen)},
                        {"last_seen", format_rfc3339(e.last_seen)}});
  Json edges = Json::array();
  for (const auto& [edge, w] : g.co_occurrences()) edges.push_back({{"a", edge.first}, {"b", edge.second}, {"weight", w}});
  Json memories = Json::array();
  for (const auto& [_, m] : g.memories()) memories.push_back(to_json(m));
  return {{"entities", entities}, {"co_occurs", edges}, {"memories", memories}};
}

inline SemanticGraph graph_from_json(const Json& j) {
  std::map<std::string, EntityNode> entities;
  for (const auto& e : detail::require(j, "entities"))
    entities[e.at("key").get<std::string>()] = {e.at("name").get<std::string>(), e.at("importance").get<double>(),
                                                 detail::instant_from(e.at("first_seen")),
                                                 detail::instant_from(e.at("last_seen"))};
  std::map<std::pair<std::string, std::string>, double> edges;
  for (const auto& e : detail::require(j, "co_occurs"))
    edges[{e.at("a").get<std::string>(), e.at("b").get<std::string>()}] = e.at("weight").get<double>();
  std::vector<SemanticMemory> memories;
  for (const auto& m : detail::require(j, "memories")) memories.push_back(semantic_memory_from_json(m));
  return SemanticGraph::restore(std::move(entities), std::move(memories), std::move(edges));
}

// ---------------------------------------------------------------------------
// Snapshot

inline Json to_json(const QuarantineEntry& q) {
  return {{"event", to_json(q.event)},
          {"reason", to_string(q.reason)},
          {"quarantined_at", format_rfc3339(q.quarantined_at)},
          {"expires_at", format_rfc3339(q.expires_at)}};
}

inline Json snapshot_json(const StoreState& s) {
  Json records = Json::array();
  for (const auto& r : s.records) records.push_back(to_json(r));
  Json quarantine = Json::array();
  for (const auto& q : s.temporal.quarantine) quarantine.push_back(to_json(q));
  Json log = Json::array();
  for (const auto& l : s.log) log.push_back({{"at", format_rfc3339(l.at)}, {"kind", l.kind}, {"message", l.message}});
  return {{"format", kSnapshotFormat},
          {"version", kSnapshotVersion},
          {"config", to_json(s.config)},
          {"calibration", s.calibration ? to_json(*s.calibration) : Json(nullptr)},
          {"records", records},
          {"graph", to_json(s.graph)},
          {"surprise", {{"sum", detail::encode_doubles(s.surprise.sum)}, {"count", s.surprise.count}}},
          {"temporal",
           {{"watermark", format_rfc3339(s.temporal.watermark)},
            {"admitted", s.temporal.admitted},
            {"quarantine", quarantine}}},
          {"next_seq", s.next_seq},
          {"batch_counter", s.batch_counter},
          {"log", log}};
}

inline StoreState state_from_snapshot(const Json& j) {
  using detail::require;
  try {
    if (detail::get_or<std::string>(j, "format", "") != kSnapshotFormat)
      throw Error(Errc::ParseError, "not an engram snapshot");
    const int version = require(j, "version").get<int>();
    if (version != kSnapshotVersion)
      throw Error(Errc::ParseError, "unsupported snapshot version " + std::to_string(version));
    StoreState s(config_from_json(require(j, "config")));
    if (auto it = j.find("calibration"); it != j.end() && !it->is_null()) s.calibration = profile_from_json(*it);
    for (const auto& r : require(j, "records")) s.records.insert(record_from_json(r));
    s.graph = graph_from_json(require(j, "graph"));
    const auto& sur = require(j, "surprise");
    s.surprise.sum = detail::decode_doubles(sur.at("sum").get<std::string>());
    s.surprise.count = sur.at("count").get<std::uint64_t>();
    const auto& t = require(j, "temporal");
    s.temporal.watermark = detail::instant_from(t.at("watermark"));
    s.temporal.admitted = t.at("admitted").get<std::set<std::string>>();
    for (const auto& q : t.at("quarantine"))
      s.temporal.quarantine.push_back({event_from_json(q.at("event")),
                                       parse_quarantine_reason(q.at("reason").get<std::string>()),
                                       detail::instant_from(q.at("quarantined_at")),
                                       detail::instant_from(q.at("expires_at"))});
    s.next_seq = require(j, "next_seq").get<std::uint64_t>();
    s.batch_counter = require(j, "batch_counter").get<std::uint64_t>();
    for (const auto& l : require(j, "log"))
      s.log.push_back({detail::instant_from(l.at("at")), l.at("kind").get<std::string>(),
                       l.at("message").get<std::string>()});
    return s;
  } catch (const Json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

inline std::string snapshot_text(const StoreState& s) { return snapshot_json(s).dump(1) + "\n"; }

inline StoreState load_snapshot_text(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
  return state_from_snapshot(j);
}

inline void save_snapshot(const StoreState& s, const std::string& path) {
  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::InvalidArgument, "cannot write " + tmp);
    out << snapshot_text(s);
    if (!out) throw Error(Errc::InvalidArgument, "write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(Errc::InvalidArgument, "cannot replace " + path);
}

inline StoreState load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::InvalidArgument, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_snapshot_text(buf.str());
}

// ---------------------------------------------------------------------------
// Reports

inline Json to_json(const ConsolidationReport& r) {
  return {{"batch_id", r.batch_id},
          {"mode", to_string(r.mode)},
          {"now", format_rfc3339(r.now)},
          {"input_count", r.input_count},
          {"quarantined", r.quarantined},
          {"quarantine_readmitted", r.quarantine_readmitted},
          {"quarantine_dropped", r.quarantine_dropped},
          {"exact_dupes_removed", r.exact_dupes_removed},
          {"near_dupes_merged", r.near_dupes_merged},
          {"cluster_members_merged", r.cluster_members_merged},
          {"clusters_formed", r.clusters_formed},
          {"promoted", r.promoted},
          {"retained", r.retained},
          {"pruned", r.pruned},
          {"semantic_ids", r.semantic_ids},
          {"store_size_before", r.store_size_before},
          {"store_size_after", r.store_size_after},
          {"tokens_before", r.tokens_before},
          {"tokens_after", r.tokens_after}};
}

inline Json to_json(const ForgettingReport& r) {
  return {{"now", format_rfc3339(r.now)},
          {"ttl_expired", r.ttl_expired},
          {"age_degraded", r.age_degraded},
          {"interference_degraded", r.interference_degraded},
          {"budget_records", r.budget_records},
          {"budget_steps", r.budget_steps},
          {"records_touched", r.records_touched},
          {"tokens_before", r.tokens_before},
          {"tokens_after", r.tokens_after},
          {"store_size_before", r.store_size_before},
          {"store_size_after", r.store_size_after},
          {"budget", r.budget ? Json(*r.budget) : Json(nullptr)},
          {"within_budget", r.within_budget}};
}

inline Json to_json(const RetrievalHit& h) {
  return {{"memory_id", h.memory_id},
          {"tier", to_string(h.tier)},
          {"score", h.score},
          {"similarity", h.similarity},
          {"priming", h.priming},
          {"hops", h.hops ? Json(*h.hops) : Json(nullptr)},
          {"content", h.content},
          {"timestamp", format_rfc3339(h.timestamp)},
          {"fidelity", to_string(h.fidelity)}};
}

inline Json to_json(const Checkpoint& c) {
  Json j{{"index", c.index},
         {"sessions_seen", c.sessions_seen},
         {"events_ingested", c.events_ingested},
         {"now", format_rfc3339(c.now)},
         {"active", c.active},
         {"tokens", c.tokens},
         {"semantic_memories", c.semantic_memories}};
  j["consolidation"] = c.consolidation ? to_json(*c.consolidation) : Json(nullptr);
  j["forgetting"] = c.forgetting ? to_json(*c.forgetting) : Json(nullptr);
  return j;
}

inline Json to_json(const RunMetrics& m) {
  Json cps = Json::array();
  for (const auto& c : m.checkpoints) cps.push_back(to_json(c));
  return {{"retention_precision", m.retention_precision},
          {"store_reduction", m.store_reduction},
          {"retained_substantive_fraction", m.retained_substantive_fraction},
          {"total_ingested", m.total_ingested},
          {"final_active", m.final_active},
          {"retained", m.retained},
          {"retained_referenced", m.retained_referenced},
          {"final_tokens", m.final_tokens},
          {"store_size_series", m.store_size_series},
          {"token_totals", m.token_totals},
          {"checkpoints", cps},
          {"config_used", to_json(m.config_used)},
          {"budget", m.budget ? Json(*m.budget) : Json(nullptr)},
          {"completed", m.completed},
          {"error", m.error}};
}

enum class ReportFormat { json, text };

/// Checkpoint table for one run.
inline std::string report(const RunMetrics& m, ReportFormat fmt) {
  if (fmt == ReportFormat::json) return to_json(m).dump(2);
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-4s %-9s %-8s %-8s %-10s\n", "cp", "sessions", "events", "active", "tokens");
  out << line;
  for (const auto& c : m.checkpoints) {
    std::snprintf(line, sizeof line, "%-4zu %-9zu %-8zu %-8zu %-10lld\n", c.index, c.sessions_seen,
                  c.events_ingested, c.active, static_cast<long long>(c.tokens));
    out << line;
  }
  std::snprintf(line, sizeof line, "precision %.4f  reduction %.4f  retained %zu/%zu\n", m.retention_precision,
                m.store_reduction, m.retained, m.total_ingested);
  out << line;
  return out.str();
}

/// Budget sweep table: token totals against the retained-substantive share.
inline std::string report(const std::vector<SweepRow>& rows, ReportFormat fmt) {
  if (fmt == ReportFormat::json) {
    Json a = Json::array();
    for (const auto& r : rows)
      a.push_back({{"budget", r.budget},
                   {"final_tokens", r.metrics.final_tokens},
                   {"retained_substantive_fraction", r.metrics.retained_substantive_fraction},
                   {"retention_precision", r.metrics.retention_precision},
                   {"store_reduction", r.metrics.store_reduction}});
    return a.dump(2);
  }
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-12s %-12s %-10s\n", "budget", "tokens", "substantive", "precision");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-10lld %-12lld %-12.4f %-10.4f\n", static_cast<long long>(r.budget),
                  static_cast<long long>(r.metrics.final_tokens), r.metrics.retained_substantive_fraction,
                  r.metrics.retention_precision);
    out << line;
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Stream spec and manifest

inline Json to_json(const StreamSpec& s) {
  return {{"events", s.events},
          {"sessions", s.sessions},
          {"duplicate_rate", s.duplicate_rate},
          {"future_referenced_rate", s.future_referenced_rate},
          {"near_duplicate_share", s.near_duplicate_share},
          {"substitution_rate", s.substitution_rate},
          {"automation_share", s.automation_share},
          {"session_spacing_h", s.session_spacing_h},
          {"event_spacing_min", s.event_spacing_min},
          {"start", format_rfc3339(s.start)},
          {"duplicate_window_sessions", s.duplicate_window_sessions}};
}

inline StreamSpec stream_spec_from_json(const Json& j) {
  try {
    StreamSpec s;
    s.events = detail::get_or<std::size_t>(j, "events", s.events);
    s.sessions = detail::get_or<std::size_t>(j, "sessions", s.sessions);
    s.duplicate_rate = detail::get_or<double>(j, "duplicate_rate", s.duplicate_rate);
    s.future_referenced_rate = detail::get_or<double>(j, "future_referenced_rate", s.future_referenced_rate);
    s.near_duplicate_share = detail::get_or<double>(j, "near_duplicate_share", s.near_duplicate_share);
    s.substitution_rate = detail::get_or<double>(j, "substitution_rate", s.substitution_rate);
    s.automation_share = detail::get_or<double>(j, "automation_share", s.automation_share);
    s.session_spacing_h = detail::get_or<double>(j, "session_spacing_h", s.session_spacing_h);
    s.event_spacing_min = detail::get_or<double>(j, "event_spacing_min", s.event_spacing_min);
    if (auto it = j.find("start"); it != j.end()) s.start = detail::instant_from(*it);
    s.duplicate_window_sessions =
        detail::get_or<std::size_t>(j, "duplicate_window_sessions", s.duplicate_window_sessions);
    return s;
  } catch (const Json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

inline Json to_json(const GroundTruth& g) {
  return {{"is_duplicate_of", g.is_duplicate_of ? Json(*g.is_duplicate_of) : Json(nullptr)},
          {"future_referenced", g.future_referenced},
          {"substantive", g.substantive}};
}

inline Json to_json(const StreamManifest& m) {
  Json events = Json::array();
  for (const auto& e : m.events) events.push_back(to_json(e));
  Json truth = Json::object();
  for (const auto& [id, g] : m.truth) truth[id] = to_json(g);
  return {{"events", events}, {"ground_truth", truth}, {"planted_rates", m.planted_rates}};
}

inline StreamManifest manifest_from_json(const Json& j) {
  try {
    StreamManifest m;
    for (const auto& e : detail::require(j, "events")) m.events.push_back(event_from_json(e));
    for (const auto& [id, g] : detail::require(j, "ground_truth").items()) {
      GroundTruth t;
      if (!g.at("is_duplicate_of").is_null()) t.is_duplicate_of = g.at("is_duplicate_of").get<std::string>();
      t.future_referenced = g.at("future_referenced").get<bool>();
      t.substantive = g.at("substantive").get<bool>();
      m.truth[id] = t;
    }
    m.planted_rates = detail::get_or<std::map<std::string, double>>(j, "planted_rates", {});
    return m;
  } catch (const Json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

// ---------------------------------------------------------------------------
// Calibration corpus (one turn per line)

inline void write_corpus_jsonl(std::ostream& out, const CalibrationCorpus& c) {
  for (const auto& s : c.sessions)
    for (const auto& t : s.turns)
      out << Json{{"session_id", s.session_id},
                  {"position", t.position},
                  {"ts", format_rfc3339(t.ts)},
                  {"text", t.text},
                  {"label", to_string(t.label)}}
                 .dump()
          << '\n';
}

/// Turns are grouped by session in first-appearance order and sorted by
/// position within each session.
inline CalibrationCorpus read_corpus_jsonl(std::istream& in, std::string provenance = {}) {
  CalibrationCorpus c;
  c.provenance = std::move(provenance);
  std::map<std::string, std::size_t> at;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = Json::parse(line);
      const auto sid = j.at("session_id").get<std::string>();
      auto [it, fresh] = at.try_emplace(sid, c.sessions.size());
      if (fresh) c.sessions.push_back({sid, {}});
      CorpusTurn t;
      t.text = j.at("text").get<std::string>();
      t.label = parse_turn_label(detail::get_or<std::string>(j, "label", "substantive"));
      t.position = j.at("position").get<std::size_t>();
      t.ts = detail::instant_from(j.at("ts"));
      c.sessions[it->second].turns.push_back(std::move(t));
    } catch (const Json::exception& e) {
      throw Error(Errc::ParseError, "corpus line " + std::to_string(n) + ": " + e.what());
    }
  }
  for (auto& s : c.sessions)
    std::stable_sort(s.turns.begin(), s.turns.end(), [](const auto& a, const auto& b) { return a.position < b.position; });
  return c;
}

}  // namespace engram
