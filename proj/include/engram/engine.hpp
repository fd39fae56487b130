#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "engram/calibration.hpp"
#include "engram/consolidation.hpp"
#include "engram/forgetting.hpp"
#include "engram/graph.hpp"
#include "engram/retrieval.hpp"
#include "engram/serialization.hpp"
#include "engram/store.hpp"

namespace engram {

/// Thread-safe facade over a StoreState. Readers take an immutable snapshot
/// and never block on writers. Writers run one at a time against a private
/// copy that is published only if the job finishes, so a failed job leaves
/// the store as it was.
class MemoryEngine {
 public:
  MemoryEngine(StoreConfig cfg, std::shared_ptr<Embedder> embedder)
      : embedder_(std::move(embedder)), current_(std::make_shared<const StoreState>(std::move(cfg))) {
    if (!embedder_) throw Error(Errc::InvalidArgument, "engine needs an embedder");
  }

  MemoryEngine(StoreState state, std::shared_ptr<Embedder> embedder)
      : embedder_(std::move(embedder)), current_(std::make_shared<const StoreState>(std::move(state))) {
    if (!embedder_) throw Error(Errc::InvalidArgument, "engine needs an embedder");
  }

  std::shared_ptr<const StoreState> snapshot() const {
    std::lock_guard lock(publish_mu_);
    return current_;
  }

  /// Runs `job` on a copy of the current state and publishes the result.
  template <class Fn>
  auto write(Fn&& job) {
    std::lock_guard writer(write_mu_);
    auto next = std::make_shared<StoreState>(*snapshot());
    if constexpr (std::is_void_v<std::invoke_result_t<Fn, StoreState&>>) {
      job(*next);
      publish(std::move(next));
    } else {
      auto out = job(*next);
      publish(std::move(next));
      return out;
    }
  }

  void ingest(const MemoryEvent& e, const IngestOptions& opts = {}) {
    write([&](StoreState& s) { engram::ingest(s, e, *embedder_, opts); });
  }

  IngestSummary ingest_all(const std::vector<MemoryEvent>& events, const IngestOptions& opts = {}) {
    return write([&](StoreState& s) { return engram::ingest_all(s, events, *embedder_, opts); });
  }

  ConsolidationReport consolidate(const ConsolidationOptions& opts) {
    return write([&](StoreState& s) { return run_consolidation(s, opts); });
  }

  ForgettingReport forget(Instant now, std::optional<std::int64_t> budget = std::nullopt) {
    return write([&](StoreState& s) { return run_forgetting(s, now, budget); });
  }

  void tick(Instant now) {
    write([&](StoreState& s) { maturation_tick(s.graph, now, s.config); });
  }

  /// Read-only; concurrent with any writer.
  std::vector<RetrievalHit> retrieve(std::string_view query, Instant now, const RetrievalOptions& opts = {}) const {
    return hybrid_retrieve(*snapshot(), query, *embedder_, now, opts);
  }

  /// Records access for the hits and opens their lability windows.
  void touch(const std::vector<RetrievalHit>& hits, Instant now) {
    write([&](StoreState& s) {
      for (const auto& h : hits) open_lability(s, h.memory_id, now);
    });
  }

  ReconsolidationResult correct(const std::string& id, const Correction& c, Instant now) {
    return write([&](StoreState& s) { return reconsolidate(s, id, c, *embedder_, now); });
  }

  void feedback(const std::string& id, bool success, Instant now) {
    write([&](StoreState& s) { reinforce(s, id, success, now); });
  }

  void apply_calibration(const CalibrationProfile& p) {
    write([&](StoreState& s) {
      StoreConfig cfg = s.config;
      cfg.apply(p);
      cfg.validate();
      s.config = cfg;
      s.calibration = p;
    });
  }

  void save(const std::string& path) const { save_snapshot(*snapshot(), path); }

  void load(const std::string& path) {
    auto loaded = load_snapshot(path);
    write([&](StoreState& s) { s = std::move(loaded); });
  }

  Embedder& embedder() const { return *embedder_; }

 private:
  void publish(std::shared_ptr<StoreState> next) {
    std::lock_guard lock(publish_mu_);
    current_ = std::move(next);
  }

  std::shared_ptr<Embedder> embedder_;
  mutable std::mutex publish_mu_;
  std::mutex write_mu_;
  std::shared_ptr<const StoreState> current_;
};

}  // namespace engram
