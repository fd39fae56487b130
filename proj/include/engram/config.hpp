#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "engram/errors.hpp"

namespace engram {

enum class WeightMode { five_factor, calibrated_four };

namespace factor {
inline constexpr const char* recency = "recency";
inline constexpr const char* frequency = "frequency";
inline constexpr const char* surprise = "surprise";
inline constexpr const char* entity_salience = "entity_salience";
inline constexpr const char* outcome = "outcome";
inline constexpr const char* length = "length";
inline constexpr const char* position = "position";
}  // namespace factor

inline std::vector<std::string> factor_names(WeightMode mode) {
  if (mode == WeightMode::five_factor)
    return {factor::recency, factor::frequency, factor::surprise, factor::entity_salience, factor::outcome};
  return {factor::length, factor::position, factor::surprise, factor::recency};
}

/// Convex weights over a scoring mode's factors.
struct SignalWeights {
  WeightMode mode = WeightMode::five_factor;
  std::map<std::string, double> weights;

  static SignalWeights five_factor_defaults() {
    return {WeightMode::five_factor,
            {{factor::recency, 0.25},
             {factor::frequency, 0.25},
             {factor::surprise, 0.20},
             {factor::entity_salience, 0.15},
             {factor::outcome, 0.15}}};
  }

  // Surprise takes the remainder of the three published weights.
  static SignalWeights calibrated_four_defaults() {
    return {WeightMode::calibrated_four,
            {{factor::length, 0.363}, {factor::position, 0.325}, {factor::surprise, 0.293}, {factor::recency, 0.019}}};
  }

  double at(const std::string& name) const {
    auto it = weights.find(name);
    return it == weights.end() ? 0.0 : it->second;
  }

  void validate() const {
    const auto names = factor_names(mode);
    if (weights.size() != names.size()) throw Error(Errc::InvalidWeights, "wrong number of factors for mode");
    double sum = 0.0;
    for (const auto& n : names) {
      auto it = weights.find(n);
      if (it == weights.end()) throw Error(Errc::InvalidWeights, "missing weight '" + n + "'");
      if (!(it->second >= 0.0) || !std::isfinite(it->second))
        throw Error(Errc::InvalidWeights, "negative or non-finite weight '" + n + "'");
      sum += it->second;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(Errc::InvalidWeights, "weights sum to " + std::to_string(sum));
  }

  friend bool operator==(const SignalWeights&, const SignalWeights&) = default;
};

/// Thresholds and weights derived from a synthetic corpus.
struct CalibrationProfile {
  double near_dedup_threshold = 0.559;
  double cluster_distance = 0.404;
  double interference_threshold = 0.542;
  SignalWeights signal_weights = SignalWeights::calibrated_four_defaults();
  std::map<std::string, double> per_signal_auc;
  double length_p95_chars = 280.0;
  std::string corpus_fingerprint;
  std::string provenance;

  friend bool operator==(const CalibrationProfile&, const CalibrationProfile&) = default;
};

struct ClassificationFractions {
  double promote = 0.20;
  double retain = 0.60;
  double prune = 0.20;
  friend bool operator==(const ClassificationFractions&, const ClassificationFractions&) = default;
};

/// Every tunable of the lifecycle. Defaults are the published values where
/// one exists; the rest are documented constants.
struct StoreConfig {
  // embedding
  std::size_t dimension = 256;
  std::uint64_t embed_seed = 0;

  // decay and similarity thresholds
  double lambda_decay = 0.001;  // per hour
  double near_dedup_threshold = 0.559;
  double cluster_distance = 0.404;
  double interference_threshold = 0.542;

  // tiers
  double hot_ttl_h = 24.0;
  double warm_ttl_h = 30.0 * 24.0;

  // consolidation
  int consolidate_every_n_sessions = 1;
  ClassificationFractions classification_fractions;
  double skew_tolerance_min = 5.0;
  double quarantine_ttl_min = 15.0;
  double authority_downweight = 0.5;
  double authority_cutoff = 0.5;
  double alert_surprise = 0.8;
  std::size_t gist_top_m = 3;
  std::size_t gist_max_tokens = 128;
  SignalWeights signal_weights = SignalWeights::five_factor_defaults();
  double length_norm_chars = 280.0;

  // forgetting
  double retroactive_weight = 0.6;
  double proactive_weight = 0.4;
  double importance_floor = 0.5;
  std::array<double, 5> degrade_age_days{7, 14, 30, 60, 90};
  double forget_priority_floor = 1.0;
  std::optional<std::int64_t> token_budget;

  // maturation
  bool maturation_enabled = true;
  double maturation_half_life_h = 168.0;
  double maturation_slope = 48.0;
  double retrieval_activation = 0.5;
  double priming_gamma = 0.1;

  // retrieval and reconsolidation
  int retrieval_k = 10;
  int max_hops = 2;
  double importance_filter = 0.0;
  double recency_boost_beta = 0.2;
  double recency_boost_lambda = 0.01;
  double lability_window_min = 60.0;
  double alpha_confidence = 0.5;
  double alpha_severity = 0.3;
  double alpha_staleness = 0.2;
  double reinforce_step = 0.05;

  void apply(const CalibrationProfile& p) {
    near_dedup_threshold = p.near_dedup_threshold;
    cluster_distance = p.cluster_distance;
    interference_threshold = p.interference_threshold;
    signal_weights = p.signal_weights;
    length_norm_chars = p.length_p95_chars;
  }

  void validate() const {
    auto unit = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::InvalidConfig, std::string(name) + " must lie in [0,1]");
    };
    unit(near_dedup_threshold, "near_dedup_threshold");
    unit(cluster_distance, "cluster_distance");
    unit(interference_threshold, "interference_threshold");
    unit(importance_floor, "importance_floor");
    unit(retrieval_activation, "retrieval_activation");
    unit(importance_filter, "importance_filter");
    unit(retroactive_weight, "retroactive_weight");
    unit(proactive_weight, "proactive_weight");
    const auto& f = classification_fractions;
    if (f.promote < 0 || f.retain < 0 || f.prune < 0 || std::abs(f.promote + f.retain + f.prune - 1.0) > 1e-9)
      throw Error(Errc::InvalidConfig, "classification fractions must be non-negative and sum to 1");
    if (!(maturation_half_life_h > 0.0)) throw Error(Errc::InvalidConfig, "maturation half-life must be positive");
    if (!(maturation_slope > 0.0)) throw Error(Errc::InvalidConfig, "maturation slope must be positive");
    if (!(lambda_decay >= 0.0)) throw Error(Errc::InvalidConfig, "lambda_decay must be non-negative");
    if (!(hot_ttl_h > 0.0) || !(warm_ttl_h > 0.0)) throw Error(Errc::InvalidConfig, "TTLs must be positive");
    if (consolidate_every_n_sessions < 1) throw Error(Errc::InvalidConfig, "consolidate_every_n_sessions must be >= 1");
    if (retrieval_k < 1 || max_hops < 1) throw Error(Errc::InvalidConfig, "retrieval_k and max_hops must be >= 1");
    if (dimension < 8) throw Error(Errc::InvalidConfig, "dimension must be >= 8");
    if (!(length_norm_chars > 0.0)) throw Error(Errc::InvalidConfig, "length_norm_chars must be positive");
    if (token_budget && *token_budget <= 0) throw Error(Errc::InvalidConfig, "token budget must be positive");
    signal_weights.validate();
  }

  friend bool operator==(const StoreConfig&, const StoreConfig&) = default;
};

}  // namespace engram
