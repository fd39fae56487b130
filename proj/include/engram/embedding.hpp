#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "engram/errors.hpp"
#include "engram/util.hpp"

namespace engram {

/// Unit-norm embedding vector. The only ways to obtain a non-empty one are
/// `normalize` and `Embedding::from_unit`, so every stored embedding carries
/// the unit-norm guarantee.
class Embedding {
 public:
  Embedding() = default;

  /// Adopts values that are already unit norm (e.g. read back from a
  /// snapshot). Throws if the norm is off by more than 1e-6.
  static Embedding from_unit(std::vector<double> values) {
    Embedding e(std::move(values));
    if (e.values_.empty()) return e;
    if (std::abs(e.norm() - 1.0) > 1e-6) throw Error(Errc::InvalidArgument, "embedding is not unit norm");
    return e;
  }

  std::span<const double> values() const { return values_; }
  std::size_t dimension() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  explicit Embedding(std::vector<double> values) : values_(std::move(values)) {}
  friend Embedding normalize(std::span<const double> values);

  std::vector<double> values_;
};

inline Embedding normalize(std::span<const double> values) {
  double sq = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, "non-finite embedding component");
    sq += v * v;
  }
  const double n = std::sqrt(sq);
  if (n < 1e-12) throw Error(Errc::ZeroVector, "cannot normalize a zero vector");
  std::vector<double> out(values.begin(), values.end());
  for (double& v : out) v /= n;
  return Embedding(std::move(out));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Cosine of two unit vectors, clamped to [-1, 1] against rounding.
inline double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.dimension() != b.dimension())
    throw Error(Errc::DimensionMismatch, std::to_string(a.dimension()) + " vs " + std::to_string(b.dimension()));
  return std::clamp(dot(a.values(), b.values()), -1.0, 1.0);
}

/// Source of embeddings for record content and queries.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(std::string_view text) = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;
};

namespace detail {

inline std::uint64_t token_hash(std::string_view token, std::uint64_t seed) {
  return splitmix64(fnv1a64(token) ^ splitmix64(seed));
}

inline void add_feature(std::vector<double>& acc, std::string_view token, std::uint64_t seed) {
  const std::uint64_t h = token_hash(token, seed);
  acc[h % acc.size()] += (h >> 63) ? -1.0 : 1.0;
}

}  // namespace detail

/// Signed feature hashing over lower-cased word tokens. Deterministic in
/// (text, dimension, seed). Texts without tokens, or whose buckets cancel
/// exactly, map to a fixed sentinel direction.
inline Embedding hash_embed(std::string_view text, std::size_t dimension, std::uint64_t seed) {
  if (dimension < 8) throw Error(Errc::InvalidArgument, "hash embedding dimension must be >= 8");
  std::vector<double> acc(dimension, 0.0);
  for (const auto& tok : word_tokens(text)) detail::add_feature(acc, tok, seed);
  double sq = 0.0;
  for (double v : acc) sq += v * v;
  if (sq < 0.5) detail::add_feature(acc, "\x01<empty>", seed);
  return normalize(acc);
}

class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dimension = 256, std::uint64_t seed = 0)
      : dimension_(dimension), seed_(seed) {
    if (dimension_ < 8) throw Error(Errc::InvalidArgument, "hash embedding dimension must be >= 8");
  }

  Embedding embed(std::string_view text) override { return hash_embed(text, dimension_, seed_); }
  std::size_t dimension() const override { return dimension_; }
  std::string name() const override { return "hash"; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

}  // namespace engram
