#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "engram/config.hpp"
#include "engram/embedding.hpp"
#include "engram/errors.hpp"
#include "engram/model.hpp"
#include "engram/time.hpp"
#include "engram/util.hpp"

namespace engram {

// ---------------------------------------------------------------------------
// Entity extraction

namespace detail {

inline const std::unordered_set<std::string>& sentence_initial_stopwords() {
  static const std::unordered_set<std::string> words{
      "a",      "an",     "the",    "i",      "we",     "you",   "he",     "she",    "it",    "they",
      "this",   "that",   "these",  "those",  "there",  "here",  "what",   "when",   "where", "why",
      "how",    "who",    "which",  "in",     "on",     "at",    "for",    "to",     "of",    "and",
      "but",    "or",     "if",     "so",     "is",     "are",   "was",    "were",   "be",    "my",
      "our",    "your",   "his",    "her",    "its",    "their", "please", "thanks", "thank", "yes",
      "no",     "hi",     "hello",  "hey",    "also",   "then",  "after",  "before", "with",  "from",
      "by",     "as",     "not",    "do",     "does",   "did",   "can",    "could",  "would", "should",
      "will",   "just",   "ok",     "okay",   "sure",   "maybe", "some",   "any",    "all",   "still",
      "since",  "while",  "once",   "now",    "today",  "yesterday", "tomorrow", "sounds", "great", "label",
      "status", "closed", "opened", "assigned", "added", "removed", "same",  "let",    "let's", "see"};
  return words;
}

inline bool is_first_person_pronoun(std::string_view w) {
  return w == "I" || w == "I'm" || w == "I've" || w == "I'll" || w == "I'd";
}

inline std::string_view trim_punct(std::string_view w, bool& ends_sentence, bool& ends_run) {
  ends_sentence = false;
  ends_run = false;
  auto is_punct = [](char c) {
    return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '"' || c == '(' ||
           c == ')' || c == '[' || c == ']' || c == '{' || c == '}' || c == '\'';
  };
  while (!w.empty() && is_punct(w.front()) && w.front() != '\'') w.remove_prefix(1);
  while (!w.empty() && is_punct(w.back())) {
    const char c = w.back();
    if (c == '.' || c == '!' || c == '?') ends_sentence = true;
    ends_run = true;
    w.remove_suffix(1);
  }
  return w;
}

}  // namespace detail

/// Rule-based extractor: maximal runs of capitalized words, `@mentions` and
/// `#refs`. A sentence-initial stopword never starts a run, nor does the
/// pronoun "I". Output is in first-appearance order, de-duplicated by
/// case-folded name.
inline std::vector<std::string> extract_entities_default(std::string_view content) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto emit = [&](std::string name) {
    if (name.empty()) return;
    if (seen.insert(case_fold(name)).second) out.push_back(std::move(name));
  };

  std::string run;
  auto flush = [&] {
    emit(run);
    run.clear();
  };

  bool sentence_start = true;
  std::size_t i = 0;
  while (i < content.size()) {
    while (i < content.size() && std::isspace(static_cast<unsigned char>(content[i]))) ++i;
    std::size_t j = i;
    while (j < content.size() && !std::isspace(static_cast<unsigned char>(content[j]))) ++j;
    if (j == i) break;
    bool ends_sentence = false;
    bool ends_run = false;
    std::string_view word = detail::trim_punct(content.substr(i, j - i), ends_sentence, ends_run);
    i = j;

    if (!word.empty() && (word.front() == '@' || word.front() == '#')) {
      flush();
      if (word.size() > 1) emit(std::string(word));
    } else if (!word.empty() && word.front() >= 'A' && word.front() <= 'Z' && !detail::is_first_person_pronoun(word) &&
               !(sentence_start && detail::sentence_initial_stopwords().count(case_fold(word)))) {
      if (!run.empty()) run += ' ';
      run += word;
    } else {
      flush();
    }
    if (ends_run) flush();
    sentence_start = ends_sentence;
  }
  flush();
  return out;
}

using EntityExtractor = std::function<std::vector<std::string>(std::string_view)>;

/// Runs the pluggable extractor, falling back to the rule-based one when it
/// is absent or throws.
inline std::vector<std::string> extract_entities(std::string_view content, const EntityExtractor& extractor = {}) {
  if (extractor) {
    try {
      return extractor(content);
    } catch (const std::exception&) {
    }
  }
  return extract_entities_default(content);
}

// ---------------------------------------------------------------------------
// Maturation

/// Sigmoid activation in elapsed hours: 1 / (1 + exp(-(t - t_half) / k)).
inline double activation(Instant created_at, Instant now, double t_half_h, double slope_h) {
  const double t = hours_between(created_at, now);
  if (t < 0.0) throw Error(Errc::NegativeElapsed, "now precedes created_at");
  return 1.0 / (1.0 + std::exp(-(t - t_half_h) / slope_h));
}

// ---------------------------------------------------------------------------
// Graph types

struct EntityNode {
  std::string name;
  double importance = 0.0;
  Instant first_seen;
  Instant last_seen;
  friend bool operator==(const EntityNode&, const EntityNode&) = default;
};

struct SemanticMemory {
  std::string id;
  std::string gist;
  Embedding embedding;
  std::vector<std::string> source_ids;  // sorted
  Instant created_at;
  double activation_strength = 0.0;
  std::uint64_t access_count = 0;
  Instant last_accessed;
  std::vector<std::string> entities;
  std::optional<Instant> labile_until;
  std::vector<Amendment> amendments;
  friend bool operator==(const SemanticMemory&, const SemanticMemory&) = default;
};

enum class EdgeKind { mentions, co_occurs, derived_from };

inline std::string_view to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::mentions: return "mentions";
    case EdgeKind::co_occurs: return "co_occurs";
    case EdgeKind::derived_from: return "derived_from";
  }
  return "mentions";
}

struct Edge {
  std::string from;
  std::string to;
  EdgeKind kind;
  double weight = 1.0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct TraversalHit {
  std::string memory_id;
  int hops = 0;
  friend bool operator==(const TraversalHit&, const TraversalHit&) = default;
};

/// Entity knowledge graph holding semantic memories. Entities are keyed by
/// case-folded name; co-occurrence edges are undirected and weighted by the
/// number of memories the two entities share.
class SemanticGraph {
 public:
  using EntityKey = std::string;

  const std::map<EntityKey, EntityNode>& entities() const { return entities_; }
  const std::map<std::string, SemanticMemory>& memories() const { return memories_; }
  const std::map<std::pair<EntityKey, EntityKey>, double>& co_occurrences() const { return co_occurs_; }

  std::size_t entity_count() const { return entities_.size(); }
  std::size_t memory_count() const { return memories_.size(); }

  const SemanticMemory* find_memory(const std::string& id) const {
    auto it = memories_.find(id);
    return it == memories_.end() ? nullptr : &it->second;
  }
  SemanticMemory* find_memory(const std::string& id) {
    auto it = memories_.find(id);
    return it == memories_.end() ? nullptr : &it->second;
  }

  const EntityNode* find_entity(std::string_view name) const {
    auto it = entities_.find(case_fold(name));
    return it == entities_.end() ? nullptr : &it->second;
  }

  double entity_importance(std::string_view name) const {
    const auto* e = find_entity(name);
    return e ? e->importance : 0.0;
  }

  EntityNode& upsert_entity(std::string_view name, Instant seen) {
    auto key = case_fold(name);
    auto [it, inserted] = entities_.try_emplace(key);
    if (inserted) {
      it->second.name = std::string(name);
      it->second.first_seen = seen;
      it->second.last_seen = seen;
    } else {
      it->second.first_seen = std::min(it->second.first_seen, seen);
      it->second.last_seen = std::max(it->second.last_seen, seen);
    }
    return it->second;
  }

  /// Adds `weight` to the co-occurrence edge between two entities, creating
  /// both nodes if needed. Self-loops are ignored.
  void add_co_occurrence(std::string_view a, std::string_view b, double weight, Instant seen) {
    upsert_entity(a, seen);
    upsert_entity(b, seen);
    auto ka = case_fold(a);
    auto kb = case_fold(b);
    if (ka == kb) return;
    if (kb < ka) std::swap(ka, kb);
    co_occurs_[{ka, kb}] += weight;
  }

  /// Inserts a memory and wires its entity edges. Returns false (and leaves
  /// the graph untouched) when a memory with the same id already exists.
  bool insert_memory(SemanticMemory memory, Instant seen) {
    if (memories_.count(memory.id)) return false;
    std::vector<EntityKey> keys;
    for (const auto& name : memory.entities) {
      upsert_entity(name, seen);
      keys.push_back(case_fold(name));
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    for (std::size_t i = 0; i < keys.size(); ++i) {
      mentions_[keys[i]].insert(memory.id);
      for (std::size_t j = i + 1; j < keys.size(); ++j) co_occurs_[{keys[i], keys[j]}] += 1.0;
    }
    memories_.emplace(memory.id, std::move(memory));
    return true;
  }

  /// Drops a memory and its mention edges. Co-occurrence weight contributed
  /// by the memory is withdrawn; edges reaching zero are removed.
  bool erase_memory(const std::string& id) {
    auto it = memories_.find(id);
    if (it == memories_.end()) return false;
    std::vector<EntityKey> keys;
    for (const auto& name : it->second.entities) keys.push_back(case_fold(name));
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (auto m = mentions_.find(keys[i]); m != mentions_.end()) {
        m->second.erase(id);
        if (m->second.empty()) mentions_.erase(m);
      }
      for (std::size_t j = i + 1; j < keys.size(); ++j) {
        auto e = co_occurs_.find({keys[i], keys[j]});
        if (e != co_occurs_.end() && (e->second -= 1.0) <= 0.0) co_occurs_.erase(e);
      }
    }
    memories_.erase(it);
    return true;
  }

  std::size_t degree(const EntityKey& key) const {
    std::size_t d = 0;
    if (auto m = mentions_.find(key); m != mentions_.end()) d += m->second.size();
    auto adj = adjacency_index();
    if (auto a = adj.find(key); a != adj.end()) d += a->second.size();
    return d;
  }

  /// importance = degree / max degree, 1.0 for a lone entity.
  void recompute_importance() {
    std::map<EntityKey, std::size_t> deg;
    for (const auto& [key, _] : entities_) deg[key] = 0;
    for (const auto& [key, mems] : mentions_) deg[key] += mems.size();
    for (const auto& [edge, _] : co_occurs_) {
      ++deg[edge.first];
      ++deg[edge.second];
    }
    std::size_t max_deg = 0;
    for (const auto& [_, d] : deg) max_deg = std::max(max_deg, d);
    for (auto& [key, node] : entities_) {
      if (entities_.size() == 1)
        node.importance = 1.0;
      else
        node.importance = max_deg == 0 ? 0.0 : static_cast<double>(deg[key]) / static_cast<double>(max_deg);
    }
  }

  /// Co-occurrence neighbours of an entity, heaviest first, then by name.
  std::vector<std::pair<std::string, double>> neighbors(std::string_view name) const {
    std::vector<std::pair<std::string, double>> out;
    const auto key = case_fold(name);
    for (const auto& [edge, w] : co_occurs_) {
      if (edge.first == key) out.emplace_back(entities_.at(edge.second).name, w);
      else if (edge.second == key) out.emplace_back(entities_.at(edge.first).name, w);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return case_fold(a.first) < case_fold(b.first);
    });
    return out;
  }

  std::vector<std::string> memories_mentioning(std::string_view name) const {
    auto it = mentions_.find(case_fold(name));
    if (it == mentions_.end()) return {};
    return {it->second.begin(), it->second.end()};
  }

  /// All edges: entity co-occurrences, memory->entity mentions and
  /// memory->source derivations.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (const auto& [edge, w] : co_occurs_)
      out.push_back({entities_.at(edge.first).name, entities_.at(edge.second).name, EdgeKind::co_occurs, w});
    for (const auto& [id, mem] : memories_) {
      for (const auto& e : mem.entities) out.push_back({id, e, EdgeKind::mentions, 1.0});
      for (const auto& s : mem.source_ids) out.push_back({id, s, EdgeKind::derived_from, 1.0});
    }
    return out;
  }

  /// Breadth-first walk over co-occurrence edges from the seed entities.
  /// Neighbours are expanded heaviest edge first, then by name. Each memory
  /// mentioning a visited entity is reported once, at the hop distance of
  /// the nearest such entity. Unknown seeds contribute nothing.
  std::vector<TraversalHit> traverse(const std::vector<std::string>& seeds, int max_hops) const {
    if (max_hops < 1) throw Error(Errc::InvalidArgument, "max_hops must be >= 1");
    const auto adj = adjacency_index();
    std::map<EntityKey, int> dist;
    std::deque<EntityKey> queue;
    std::vector<EntityKey> ordered_seeds;
    for (const auto& s : seeds) {
      auto key = case_fold(s);
      if (entities_.count(key)) ordered_seeds.push_back(std::move(key));
    }
    std::sort(ordered_seeds.begin(), ordered_seeds.end());
    ordered_seeds.erase(std::unique(ordered_seeds.begin(), ordered_seeds.end()), ordered_seeds.end());
    for (const auto& k : ordered_seeds) {
      dist[k] = 0;
      queue.push_back(k);
    }

    std::vector<TraversalHit> hits;
    std::set<std::string> reported;
    while (!queue.empty()) {
      const EntityKey key = queue.front();
      queue.pop_front();
      const int d = dist[key];
      if (auto m = mentions_.find(key); m != mentions_.end()) {
        for (const auto& mem_id : m->second)
          if (reported.insert(mem_id).second) hits.push_back({mem_id, d});
      }
      if (d >= max_hops) continue;
      auto a = adj.find(key);
      if (a == adj.end()) continue;
      for (const auto& [next, _] : a->second) {
        if (dist.count(next)) continue;
        dist[next] = d + 1;
        queue.push_back(next);
      }
    }
    return hits;
  }

  /// Rebuilds a graph from its persisted parts. Mention edges are derived
  /// from the memories' entity lists.
  static SemanticGraph restore(std::map<EntityKey, EntityNode> entities, std::vector<SemanticMemory> memories,
                               std::map<std::pair<EntityKey, EntityKey>, double> co_occurs) {
    SemanticGraph g;
    g.entities_ = std::move(entities);
    g.co_occurs_ = std::move(co_occurs);
    for (auto& m : memories) {
      for (const auto& name : m.entities) g.mentions_[case_fold(name)].insert(m.id);
      auto id = m.id;
      g.memories_.emplace(std::move(id), std::move(m));
    }
    for (const auto& [key, _] : g.mentions_)
      if (!g.entities_.count(key)) throw Error(Errc::ParseError, "memory mentions unknown entity '" + key + "'");
    for (const auto& [edge, _] : g.co_occurs_)
      if (!g.entities_.count(edge.first) || !g.entities_.count(edge.second))
        throw Error(Errc::ParseError, "co-occurrence edge references unknown entity");
    return g;
  }

  friend bool operator==(const SemanticGraph&, const SemanticGraph&) = default;

 private:
  // entity key -> neighbours sorted by (weight desc, key asc)
  std::map<EntityKey, std::vector<std::pair<EntityKey, double>>> adjacency_index() const {
    std::map<EntityKey, std::vector<std::pair<EntityKey, double>>> adj;
    for (const auto& [edge, w] : co_occurs_) {
      adj[edge.first].emplace_back(edge.second, w);
      adj[edge.second].emplace_back(edge.first, w);
    }
    for (auto& [_, v] : adj)
      std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
      });
    return adj;
  }

  std::map<EntityKey, EntityNode> entities_;
  std::map<std::string, SemanticMemory> memories_;
  std::map<std::pair<EntityKey, EntityKey>, double> co_occurs_;
  std::map<EntityKey, std::set<std::string>> mentions_;
};

/// A semantic memory surfaces directly once its activation reaches the
/// retrieval threshold; with maturation disabled every memory is treated
/// as fully active.
inline bool is_explicitly_retrievable(const SemanticMemory& m, Instant now, const StoreConfig& cfg) {
  if (!cfg.maturation_enabled) return true;
  return activation(m.created_at, now, cfg.maturation_half_life_h, cfg.maturation_slope) >= cfg.retrieval_activation;
}

/// Activation of a still-silent memory, used as a priming multiplier
/// `1 + gamma * A` on episodic hits that share an entity with it. Zero for
/// mature memories and when maturation is disabled.
inline double priming_weight(const SemanticMemory& m, Instant now, const StoreConfig& cfg) {
  if (!cfg.maturation_enabled) return 0.0;
  const double a = activation(m.created_at, now, cfg.maturation_half_life_h, cfg.maturation_slope);
  return a < cfg.retrieval_activation ? a : 0.0;
}

/// Refreshes the stored activation of every memory.
inline void maturation_tick(SemanticGraph& graph, Instant now, const StoreConfig& cfg) {
  for (const auto& [id, _] : graph.memories()) {
    auto* m = graph.find_memory(id);
    if (!cfg.maturation_enabled) {
      m->activation_strength = 1.0;
    } else if (now >= m->created_at) {
      m->activation_strength = activation(m->created_at, now, cfg.maturation_half_life_h, cfg.maturation_slope);
    }
  }
}

}  // namespace engram
