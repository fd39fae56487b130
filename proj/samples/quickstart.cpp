// Ingest a handful of events, consolidate, forget, then query the store.

#include <iostream>

#include "engram/engram.hpp"

using namespace engram;

int main() {
  StoreConfig cfg;
  auto embedder = std::make_shared<HashEmbedder>(cfg.dimension, cfg.embed_seed);
  MemoryEngine engine(cfg, embedder);

  const Instant t0 = parse_rfc3339("2024-03-01T09:00:00Z");
  auto event = [&](std::string id, double minutes, std::string content, std::string kind = "comment") {
    MemoryEvent e;
    e.id = std::move(id);
    e.timestamp = add_minutes(t0, minutes);
    e.session_id = "s1";
    e.kind = std::move(kind);
    e.content = std::move(content);
    return e;
  };

  engine.ingest_all({
      event("e1", 0, "Checkout fails with a 502 from PaymentGateway after the Redis upgrade.", "created"),
      event("e2", 3, "Checkout fails with a 502 from PaymentGateway after the Redis upgrade."),
      event("e3", 6, "Rolled back Redis to 6.2 on staging; PaymentGateway recovers."),
      event("e4", 9, "thanks"),
      event("e5", 12, "Root cause: connection pool size in PaymentGateway defaults to 8 under Redis 7."),
  });

  const Instant now = add_minutes(t0, 15);
  ConsolidationOptions opts;
  opts.now = now;
  auto rep = engine.consolidate(opts);
  std::cout << "consolidation: " << rep.input_count << " in, " << rep.exact_dupes_removed << " exact dupes, "
            << rep.promoted << " promoted, " << rep.semantic_ids.size() << " gists\n";

  auto forget = engine.forget(now);
  std::cout << "forgetting: " << forget.records_touched << " records touched, " << forget.tokens_after
            << " tokens left\n";

  for (const auto& hit : engine.retrieve("why does PaymentGateway return 502", now, {.k = 3}))
    std::cout << "  " << to_string(hit.tier) << " " << hit.memory_id << " score=" << hit.score << "  "
              << hit.content << '\n';
}
