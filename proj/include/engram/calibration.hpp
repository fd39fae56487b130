#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "engram/config.hpp"
#include "engram/embedding.hpp"
#include "engram/errors.hpp"
#include "engram/scoring.hpp"
#include "engram/time.hpp"
#include "engram/util.hpp"

namespace engram {

// ---------------------------------------------------------------------------
// Corpus

enum class TurnLabel { substantive, filler };

inline std::string_view to_string(TurnLabel l) { return l == TurnLabel::substantive ? "substantive" : "filler"; }

inline TurnLabel parse_turn_label(std::string_view s) {
  if (s == "substantive") return TurnLabel::substantive;
  if (s == "filler") return TurnLabel::filler;
  throw Error(Errc::ParseError, "unknown turn label '" + std::string(s) + "'");
}

struct CorpusTurn {
  std::string text;
  TurnLabel label = TurnLabel::substantive;
  std::size_t position = 0;
  Instant ts;
  friend bool operator==(const CorpusTurn&, const CorpusTurn&) = default;
};

struct CorpusSession {
  std::string session_id;
  std::vector<CorpusTurn> turns;
  friend bool operator==(const CorpusSession&, const CorpusSession&) = default;
};

struct CalibrationCorpus {
  std::vector<CorpusSession> sessions;
  std::string provenance;

  std::size_t turn_count() const {
    std::size_t n = 0;
    for (const auto& s : sessions) n += s.turns.size();
    return n;
  }
  std::size_t count(TurnLabel l) const {
    std::size_t n = 0;
    for (const auto& s : sessions)
      for (const auto& t : s.turns) n += t.label == l;
    return n;
  }
  friend bool operator==(const CalibrationCorpus&, const CalibrationCorpus&) = default;
};

/// Stable hash of the corpus content (provenance excluded).
inline std::string corpus_fingerprint(const CalibrationCorpus& c) {
  std::string buf;
  for (const auto& s : c.sessions)
    for (const auto& t : s.turns) {
      buf += s.session_id;
      buf += '\x1f';
      buf += std::to_string(t.position);
      buf += '\x1f';
      buf += std::to_string(to_unix_millis(t.ts));
      buf += '\x1f';
      buf += to_string(t.label);
      buf += '\x1f';
      buf += t.text;
      buf += '\x1e';
    }
  return hex64(fnv1a64(buf));
}

// ---------------------------------------------------------------------------
// Template corpus generator

struct CorpusTopic {
  std::string name;
  std::vector<std::string> keywords;
};

struct CorpusSpec {
  std::vector<CorpusTopic> topics;
  std::size_t sessions = 8;
  std::size_t turns = 88;
  std::size_t substantive = 66;
  double returning_topic_rate = 0.3;  // chance a session revisits an earlier topic
  Instant start = from_unix_millis(1704067200000);  // 2024-01-01T00:00:00Z
  double session_spacing_h = 24.0;
  double turn_spacing_min = 2.0;
};

inline std::vector<CorpusTopic> default_corpus_topics() {
  return {
      {"gardening", {"tomatoes", "compost", "mulch", "seedlings", "raised beds", "aphids", "watering schedule", "soil pH"}},
      {"cooking", {"sourdough", "starter", "hydration", "proofing", "cast iron", "braise", "knife skills", "stock"}},
      {"travel", {"itinerary", "rail pass", "layover", "hostel", "visa", "packing list", "jet lag", "museum passes"}},
      {"finance", {"index funds", "emergency fund", "budget", "interest rate", "mortgage", "tax bracket", "rebalancing", "expense ratio"}},
      {"fitness", {"deadlift", "progressive overload", "mobility", "tempo runs", "protein intake", "rest days", "kettlebell", "heart rate zones"}},
      {"programming", {"refactor", "unit tests", "race condition", "profiling", "memory leak", "code review", "dependency injection", "build cache"}},
      {"music", {"chord progression", "metronome", "scales", "fingerstyle", "capo", "ear training", "sight reading", "home recording"}},
      {"home repair", {"drywall", "caulk", "stud finder", "leaky faucet", "circuit breaker", "grout", "paint primer", "weatherstripping"}},
      {"astronomy", {"telescope", "light pollution", "Saturn", "star charts", "eyepiece", "meteor shower", "collimation", "dark site"}},
      {"language learning", {"flashcards", "conjugation", "listening practice", "tutor", "spaced repetition", "grammar drills", "podcasts", "pronunciation"}},
      {"photography", {"aperture", "shutter speed", "golden hour", "prime lens", "histogram", "white balance", "tripod", "composition"}},
      {"parenting", {"bedtime routine", "screen time", "picky eating", "reading together", "tantrums", "school lunches", "chores chart", "playdates"}},
  };
}

inline CorpusSpec similarity_corpus_spec() {
  CorpusSpec s;
  s.topics = default_corpus_topics();
  s.sessions = 8;
  s.turns = 88;
  s.substantive = 66;
  return s;
}

inline CorpusSpec weight_corpus_spec() {
  CorpusSpec s;
  s.topics = default_corpus_topics();
  s.sessions = 50;
  s.turns = 483;
  s.substantive = 377;
  return s;
}

namespace detail {

inline const std::vector<std::string>& substantive_templates() {
  static const std::vector<std::string> t{
      "I have been thinking about {a} for {topic} and wonder whether {b} matters more than {c} in practice.",
      "Last week I tried {a} and it went badly, so for {topic} I want a plan that covers {b} and {c} step by step.",
      "Can you compare {a} with {b}? My {topic} setup already handles {c} but I keep running into trouble.",
      "For {topic}, my notes say {a} should come before {b}, although a friend insists {c} is the real bottleneck.",
      "Here is my situation with {topic}: {a} is fine, {b} is inconsistent, and I have not started on {c} yet.",
      "What would a sensible weekly routine look like if {a} and {b} are the priorities and {c} is optional?",
      "I read that {a} changes how you should approach {b}; does that hold for {topic} when {c} is involved too?",
  };
  return t;
}

inline const std::vector<std::string>& filler_phrases() {
  static const std::vector<std::string> f{
      "ok thanks", "got it", "sounds good", "nice", "cool, thanks!", "makes sense", "sure", "haha yes",
      "thanks a lot", "perfect", "ok", "great, talk later", "will do", "hmm ok", "right", "yep",
  };
  return f;
}

inline std::string fill(std::string tpl, const std::map<std::string, std::string>& vars) {
  for (const auto& [k, v] : vars) {
    const std::string key = "{" + k + "}";
    for (std::size_t at = tpl.find(key); at != std::string::npos; at = tpl.find(key, at + v.size()))
      tpl.replace(at, key.size(), v);
  }
  return tpl;
}

}  // namespace detail

/// Deterministic template corpus. Turn and substantive counts match the
/// spec exactly. Substantive turns are long sentences built from the
/// session topic's keywords; filler turns are short stock phrases and lean
/// toward the end of a session. Some sessions revisit an earlier topic.
inline CalibrationCorpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  if (spec.topics.empty()) throw Error(Errc::InvalidArgument, "corpus spec needs topics");
  if (spec.sessions == 0 || spec.turns < spec.sessions)
    throw Error(Errc::InvalidArgument, "corpus spec needs at least one turn per session");
  if (spec.substantive > spec.turns) throw Error(Errc::InvalidArgument, "more substantive turns than turns");
  Rng rng(seed);

  std::vector<std::size_t> lengths(spec.sessions, spec.turns / spec.sessions);
  for (std::size_t i = 0; i < spec.turns % spec.sessions; ++i) ++lengths[i];

  // Filler slots: per-turn key = relative position + noise; the highest keys
  // across the corpus become filler.
  struct Slot {
    std::size_t session, pos;
    double key;
  };
  std::vector<Slot> slots;
  for (std::size_t s = 0; s < spec.sessions; ++s)
    for (std::size_t p = 0; p < lengths[s]; ++p)
      slots.push_back({s, p, static_cast<double>(p) / static_cast<double>(lengths[s]) + 0.8 * rng.uniform01()});
  std::vector<std::size_t> order(slots.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return slots[a].key > slots[b].key; });
  std::vector<std::vector<char>> filler(spec.sessions);
  for (std::size_t s = 0; s < spec.sessions; ++s) filler[s].assign(lengths[s], 0);
  for (std::size_t i = 0; i < spec.turns - spec.substantive; ++i) filler[slots[order[i]].session][slots[order[i]].pos] = 1;

  CalibrationCorpus c;
  c.provenance = "template generator, seed " + std::to_string(seed);
  std::vector<std::size_t> used_topics;
  const auto& tpls = detail::substantive_templates();
  const auto& fills = detail::filler_phrases();
  for (std::size_t s = 0; s < spec.sessions; ++s) {
    std::size_t topic;
    if (!used_topics.empty() && rng.bernoulli(spec.returning_topic_rate)) topic = rng.pick(used_topics);
    else topic = s % spec.topics.size();
    used_topics.push_back(topic);
    const auto& t = spec.topics[topic];

    CorpusSession sess;
    sess.session_id = "s" + std::to_string(s + 1);
    const Instant base = add_hours(spec.start, spec.session_spacing_h * static_cast<double>(s));
    for (std::size_t p = 0; p < lengths[s]; ++p) {
      CorpusTurn turn;
      turn.position = p;
      turn.ts = add_minutes(base, spec.turn_spacing_min * static_cast<double>(p));
      if (filler[s][p]) {
        turn.label = TurnLabel::filler;
        turn.text = rng.pick(fills);
      } else {
        turn.label = TurnLabel::substantive;
        auto kw = t.keywords;
        rng.shuffle(kw);
        turn.text = detail::fill(rng.pick(tpls), {{"topic", t.name}, {"a", kw[0]}, {"b", kw[1]}, {"c", kw[2]}});
      }
      sess.turns.push_back(std::move(turn));
    }
    c.sessions.push_back(std::move(sess));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Percentiles and thresholds

/// Linear interpolation between closest ranks: rank = p/100 * (n-1).
inline double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) throw Error(Errc::InsufficientSamples, "percentile of an empty sample");
  if (!(p >= 0.0 && p <= 100.0)) throw Error(Errc::InvalidArgument, "percentile must lie in [0,100]");
  std::sort(samples.begin(), samples.end());
  const double rank = p / 100.0 * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, samples.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return samples[lo] + frac * (samples[hi] - samples[lo]);
}

struct SimilarityDistributions {
  std::vector<double> within;
  std::vector<double> cross;
  std::vector<double> all;
};

/// Cosine similarity of every unordered turn pair, split by whether the two
/// turns share a session.
inline SimilarityDistributions similarity_distributions(const CalibrationCorpus& c, Embedder& embedder) {
  std::vector<std::pair<std::size_t, Embedding>> turns;
  for (std::size_t s = 0; s < c.sessions.size(); ++s)
    for (const auto& t : c.sessions[s].turns) turns.emplace_back(s, embedder.embed(t.text));
  SimilarityDistributions d;
  for (std::size_t i = 0; i < turns.size(); ++i)
    for (std::size_t j = i + 1; j < turns.size(); ++j) {
      const double sim = cosine_similarity(turns[i].second, turns[j].second);
      d.all.push_back(sim);
      (turns[i].first == turns[j].first ? d.within : d.cross).push_back(sim);
    }
  return d;
}

struct DerivedThresholds {
  double near_dedup = 0.0;
  double cluster_distance = 0.0;
  double interference = 0.0;
  friend bool operator==(const DerivedThresholds&, const DerivedThresholds&) = default;
};

inline constexpr std::size_t kMinCalibrationPairs = 20;

/// near-dup = P99(all pairs), cluster distance = 1 - P95(within session),
/// interference = P90(within session).
inline DerivedThresholds derive_thresholds(const SimilarityDistributions& d) {
  auto need = [](const std::vector<double>& v, const char* what) {
    if (v.size() < kMinCalibrationPairs)
      throw Error(Errc::InsufficientSamples, std::string(what) + " distribution has " + std::to_string(v.size()) +
                                                 " pairs, need " + std::to_string(kMinCalibrationPairs));
  };
  need(d.all, "all-pairs");
  need(d.within, "within-session");
  need(d.cross, "cross-session");
  return {percentile(d.all, 99.0), 1.0 - percentile(d.within, 95.0), percentile(d.within, 90.0)};
}

// ---------------------------------------------------------------------------
// ROC AUC and weights

/// Mann-Whitney AUC: chance a random positive outscores a random negative,
/// ties counted half. Computed from mid-ranks in O(n log n).
inline double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw Error(Errc::InvalidArgument, "scores and labels differ in length");
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw Error(Errc::DegenerateLabels, "need both positive and negative labels");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]]) pos_rank_sum += mid;
    i = j;
  }
  return (pos_rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

inline constexpr double kAucExcessFloor = 0.01;

/// weight_i = max(AUC_i - 0.5, floor) / sum of the same.
inline SignalWeights weights_from_auc(const std::map<std::string, double>& auc, double floor = kAucExcessFloor) {
  SignalWeights w;
  w.mode = WeightMode::calibrated_four;
  double total = 0.0;
  for (const auto& name : factor_names(WeightMode::calibrated_four)) {
    auto it = auc.find(name);
    if (it == auc.end()) throw Error(Errc::InvalidArgument, "missing AUC for '" + name + "'");
    const double e = std::max(it->second - 0.5, floor);
    w.weights[name] = e;
    total += e;
  }
  for (auto& [_, v] : w.weights) v /= total;
  return w;
}

struct SignalTable {
  std::map<std::string, std::vector<double>> scores;
  std::vector<bool> labels;  // true = substantive
};

/// The four calibration signals for every turn: content length, surprise
/// against the running centroid of earlier turns in the session, position
/// (earlier is higher) and recency against the corpus's latest turn.
inline SignalTable corpus_signals(const CalibrationCorpus& c, Embedder& embedder, double lambda_per_hour) {
  SignalTable t;
  Instant latest = epoch();
  for (const auto& s : c.sessions)
    for (const auto& turn : s.turns) latest = std::max(latest, turn.ts);
  for (const auto& s : c.sessions) {
    std::vector<double> sum;
    const double n = static_cast<double>(s.turns.size());
    for (const auto& turn : s.turns) {
      const auto e = embedder.embed(turn.text);
      std::optional<Embedding> prior;
      if (!sum.empty()) {
        double sq = 0.0;
        for (double v : sum) sq += v * v;
        if (sq > 1e-24) prior = normalize(sum);
      }
      t.scores[factor::length].push_back(static_cast<double>(char_count(turn.text)));
      t.scores[factor::surprise].push_back(surprise_factor(e, prior));
      t.scores[factor::position].push_back(1.0 - static_cast<double>(turn.position) / n);
      t.scores[factor::recency].push_back(recency_factor(turn.ts, latest, lambda_per_hour));
      t.labels.push_back(turn.label == TurnLabel::substantive);
      if (sum.empty()) sum.assign(e.dimension(), 0.0);
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += e.values()[i];
    }
  }
  return t;
}

struct WeightDerivation {
  SignalWeights weights;
  std::map<std::string, double> auc;
};

inline WeightDerivation derive_weights(const CalibrationCorpus& c, Embedder& embedder, double lambda_per_hour = 0.001) {
  const auto t = corpus_signals(c, embedder, lambda_per_hour);
  WeightDerivation d;
  for (const auto& [name, scores] : t.scores) d.auc[name] = roc_auc(scores, t.labels);
  d.weights = weights_from_auc(d.auc);
  return d;
}

/// Full calibration: thresholds from the similarity distributions, weights
/// from per-signal AUC, and the 95th percentile of turn length as the
/// length normalizer.
inline CalibrationProfile calibrate(const CalibrationCorpus& c, Embedder& embedder, double lambda_per_hour = 0.001) {
  const auto th = derive_thresholds(similarity_distributions(c, embedder));
  const auto w = derive_weights(c, embedder, lambda_per_hour);
  std::vector<double> lengths;
  for (const auto& s : c.sessions)
    for (const auto& turn : s.turns) lengths.push_back(static_cast<double>(char_count(turn.text)));
  CalibrationProfile p;
  p.near_dedup_threshold = th.near_dedup;
  p.cluster_distance = th.cluster_distance;
  p.interference_threshold = th.interference;
  p.signal_weights = w.weights;
  p.per_signal_auc = w.auc;
  p.length_p95_chars = std::max(1.0, percentile(lengths, 95.0));
  p.corpus_fingerprint = corpus_fingerprint(c);
  p.provenance = "calibrated on " + std::to_string(c.sessions.size()) + " sessions / " +
                 std::to_string(c.turn_count()) + " turns with embedder " + embedder.name();
  return p;
}

}  // namespace engram
