// engram: command-line front end over a snapshot file.
//
// Every command reads the store from --store (default: $ENGRAM_STORE or
// engram.snapshot.json), does its work, and writes the store back when it
// changed. Reports go to stdout as JSON; diagnostics go to stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "engram/engram.hpp"
#include "engram/remote_embedder.hpp"

using namespace engram;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string store_path;
  std::string config_path;
  std::string embedder = "hash";
  std::string ledger;
  bool quiet = false;
};

void log(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::cerr << "engram: " << msg << '\n';
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidArgument, "cannot read " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(Errc::ParseError, path + ": " + e.what());
  }
}

StoreConfig base_config(const Globals& g) {
  if (g.config_path.empty()) return {};
  return config_from_json(read_json_file(g.config_path));
}

StoreState open_store(const Globals& g) {
  if (fs::exists(g.store_path)) return load_snapshot(g.store_path);
  log(g, "no store at " + g.store_path + ", starting empty");
  return StoreState(base_config(g));
}

std::unique_ptr<Embedder> make_embedder(const Globals& g, const StoreConfig& cfg) {
  if (g.embedder == "hash") return std::make_unique<HashEmbedder>(cfg.dimension, cfg.embed_seed);
  if (g.embedder == "remote") {
    auto rc = RemoteEmbedderConfig::from_env();
    if (!rc.dimension) rc.dimension = cfg.dimension;
    return std::make_unique<RemoteEmbedder>(rc);
  }
  throw Error(Errc::InvalidArgument, "unknown embedder '" + g.embedder + "' (hash or remote)");
}

/// Writes the store back, refusing to persist a store that breaks its
/// invariants.
void commit(const Globals& g, const StoreState& s) {
  auto bad = check_invariants(s);
  if (!bad.empty()) {
    for (const auto& b : bad) std::cerr << "invariant: " << b << '\n';
    throw Error(Errc::InvalidArgument, std::to_string(bad.size()) + " invariant violation(s), store not written");
  }
  save_snapshot(s, g.store_path);
}

Instant resolve_now(const std::string& text, const StoreState& s) {
  return text.empty() ? latest_timestamp(s) : parse_rfc3339(text);
}

void emit(const Json& j) { std::cout << j.dump(2) << '\n'; }

/// Appends one JSON line per batch report when --ledger is given.
void append_ledger(const Globals& g, const std::string& kind, const Json& report) {
  if (g.ledger.empty()) return;
  std::ofstream out(g.ledger, std::ios::app);
  if (!out) throw Error(Errc::InvalidArgument, "cannot append to " + g.ledger);
  out << Json{{"kind", kind}, {"report", report}}.dump() << '\n';
}

std::set<Tier> parse_tiers(const std::string& csv) {
  std::set<Tier> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.insert(parse_tier(item));
  if (out.empty()) throw Error(Errc::InvalidArgument, "no tiers given");
  return out;
}

std::vector<MemoryEvent> read_events_file(const Globals& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidArgument, "cannot read " + path);
  auto parsed = read_events_jsonl(in);
  for (const auto& [line, msg] : parsed.errors) log(g, path + ":" + std::to_string(line) + ": " + msg);
  if (!parsed.errors.empty())
    throw Error(Errc::ParseError, std::to_string(parsed.errors.size()) + " malformed line(s) in " + path);
  return parsed.events;
}

/// A stream file is either a manifest from `generate` or bare event JSONL.
StreamManifest read_stream(const Globals& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidArgument, "cannot read " + path);
  const int first = in.peek();
  in.close();
  if (first == '{') {
    auto j = read_json_file(path);
    if (j.contains("ground_truth")) return manifest_from_json(j);
  }
  StreamManifest m;
  m.events = read_events_file(g, path);
  return m;
}

Json stats_json(const StoreState& s) {
  std::map<std::string, std::size_t> by_state, by_tier, by_fidelity;
  for (const auto& r : s.records) {
    ++by_state[std::string(to_string(r.state))];
    if (r.active()) {
      ++by_tier[std::string(to_string(r.tier))];
      ++by_fidelity[std::string(to_string(r.fidelity))];
    }
  }
  std::size_t mature = 0;
  const Instant now = latest_timestamp(s);
  for (const auto& [_, m] : s.graph.memories())
    if (is_explicitly_retrievable(m, now, s.config)) ++mature;
  return {{"records", s.records.size()},
          {"active", active_count(s)},
          {"active_tokens", active_tokens(s)},
          {"by_state", by_state},
          {"by_tier", by_tier},
          {"by_fidelity", by_fidelity},
          {"quarantine", s.temporal.quarantine.size()},
          {"semantic_memories", s.graph.memory_count()},
          {"retrievable_semantic_memories", mature},
          {"entities", s.graph.entity_count()},
          {"latest_timestamp", format_rfc3339(now)},
          {"calibrated", s.calibration.has_value()},
          {"invariant_violations", check_invariants(s)}};
}

CalibrationCorpus corpus_from_arg(const std::string& arg, std::uint64_t seed) {
  if (arg == "similarity") return generate_corpus(similarity_corpus_spec(), seed);
  if (arg == "weights") return generate_corpus(weight_corpus_spec(), seed);
  std::ifstream in(arg);
  if (!in) throw Error(Errc::InvalidArgument, "cannot read corpus " + arg);
  return read_corpus_jsonl(in, arg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"engram: episodic/semantic memory store with consolidation and forgetting"};
  app.require_subcommand(1);
  Globals g;
  if (const char* env = std::getenv("ENGRAM_STORE")) g.store_path = env;
  else g.store_path = "engram.snapshot.json";
  app.add_option("--store", g.store_path, "Snapshot file holding the store");
  app.add_option("--config", g.config_path, "JSON config overrides, used when creating a new store");
  app.add_option("--embedder", g.embedder, "hash or remote (ENGRAM_EMBED_URL / ENGRAM_EMBED_TOKEN)");
  app.add_option("--ledger", g.ledger, "Append consolidation/forgetting reports to this JSONL file");
  app.add_flag("-q,--quiet", g.quiet, "Suppress stderr diagnostics");

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Ingest a JSONL event file");
  std::string ingest_file;
  ingest_cmd->add_option("file", ingest_file)->required();
  ingest_cmd->callback([&] {
    auto s = open_store(g);
    auto emb = make_embedder(g, s.config);
    auto events = read_events_file(g, ingest_file);
    auto summary = ingest_all(s, events, *emb);
    for (const auto& [id, why] : summary.rejected) log(g, "rejected " + id + ": " + why);
    commit(g, s);
    emit({{"ingested", summary.ingested}, {"rejected", summary.rejected.size()}, {"active", active_count(s)}});
  });

  // consolidate
  auto* cons_cmd = app.add_subcommand("consolidate", "Run one consolidation batch over pending records");
  std::string cons_mode = "dedup", cons_now;
  std::optional<std::int64_t> cons_budget;
  cons_cmd->add_option("--mode", cons_mode, "dedup, dedup-adaptive or aggressive");
  cons_cmd->add_option("--now", cons_now, "RFC3339 instant (default: latest event)");
  cons_cmd->add_option("--budget", cons_budget, "Follow the batch with forgetting to this token budget");
  cons_cmd->callback([&] {
    auto s = open_store(g);
    ConsolidationOptions o;
    o.mode = parse_consolidation_mode(cons_mode);
    o.now = resolve_now(cons_now, s);
    Json out = to_json(run_consolidation(s, o));
    append_ledger(g, "consolidation", out);
    if (cons_budget) {
      Json f = to_json(run_forgetting(s, o.now, cons_budget));
      append_ledger(g, "forgetting", f);
      out = {{"consolidation", out}, {"forgetting", f}};
    }
    commit(g, s);
    emit(out);
  });

  // forget
  auto* forget_cmd = app.add_subcommand("forget", "Apply TTL, decay, interference and budget forgetting");
  std::string forget_now;
  std::optional<std::int64_t> forget_budget;
  forget_cmd->add_option("--now", forget_now, "RFC3339 instant (default: latest event)");
  forget_cmd->add_option("--budget", forget_budget, "Token budget");
  forget_cmd->callback([&] {
    auto s = open_store(g);
    Json rep = to_json(run_forgetting(s, resolve_now(forget_now, s), forget_budget));
    append_ledger(g, "forgetting", rep);
    commit(g, s);
    emit(rep);
  });

  // retrieve
  auto* ret_cmd = app.add_subcommand("retrieve", "Hybrid retrieval over hot, warm and graph tiers");
  std::string query, ret_now, as_of, tiers;
  int k = 10;
  bool touch = false;
  ret_cmd->add_option("query", query)->required();
  ret_cmd->add_option("-k,--k", k, "Number of hits");
  ret_cmd->add_option("--now", ret_now, "RFC3339 instant (default: latest event)");
  ret_cmd->add_option("--as-of", as_of, "Ignore anything created after this instant");
  ret_cmd->add_option("--tiers", tiers, "Comma-separated subset of hot,warm,graph");
  ret_cmd->add_flag("--touch", touch, "Record access and open lability windows for the hits");
  ret_cmd->callback([&] {
    auto s = open_store(g);
    auto emb = make_embedder(g, s.config);
    RetrievalOptions o;
    o.k = std::max(k, 1);
    if (!as_of.empty()) o.as_of = parse_rfc3339(as_of);
    if (!tiers.empty()) o.tiers = parse_tiers(tiers);
    const Instant now = resolve_now(ret_now, s);
    auto hits = hybrid_retrieve(s, query, *emb, now, o);
    Json out = Json::array();
    for (const auto& h : hits) out.push_back(to_json(h));
    if (touch) {
      for (const auto& h : hits) open_lability(s, h.memory_id, now);
      commit(g, s);
    }
    emit(out);
  });

  // correct (reconsolidation)
  auto* corr_cmd = app.add_subcommand("correct", "Reconsolidate a labile memory with new content");
  std::string corr_id, corr_text, corr_now;
  double confidence = 0.5;
  corr_cmd->add_option("id", corr_id)->required();
  corr_cmd->add_option("content", corr_text)->required();
  corr_cmd->add_option("--confidence", confidence);
  corr_cmd->add_option("--now", corr_now);
  corr_cmd->callback([&] {
    auto s = open_store(g);
    auto emb = make_embedder(g, s.config);
    const Instant now = resolve_now(corr_now, s);
    Correction c{corr_text, confidence, std::nullopt, std::nullopt};
    auto res = reconsolidate(s, corr_id, c, *emb, now);
    commit(g, s);
    emit({{"alpha", res.alpha}, {"replaced", res.replaced}, {"changed", res.changed}});
  });

  // calibrate
  auto* cal_cmd = app.add_subcommand("calibrate", "Derive thresholds and weights from a labelled corpus");
  std::string corpus_arg = "similarity", weights_arg = "weights", profile_out;
  std::uint64_t cal_seed = 42;
  bool apply = false;
  cal_cmd->add_option("--corpus", corpus_arg, "Corpus JSONL for thresholds, or 'similarity' to generate one");
  cal_cmd->add_option("--weight-corpus", weights_arg, "Corpus JSONL for weights, or 'weights' to generate one");
  cal_cmd->add_option("--seed", cal_seed, "Seed for generated corpora");
  cal_cmd->add_option("-o,--out", profile_out, "Write the profile here");
  cal_cmd->add_flag("--apply", apply, "Apply the profile to the store");
  cal_cmd->callback([&] {
    StoreConfig cfg = fs::exists(g.store_path) ? load_snapshot(g.store_path).config : base_config(g);
    auto emb = make_embedder(g, cfg);
    auto sim_corpus = corpus_from_arg(corpus_arg, cal_seed);
    auto w_corpus = corpus_from_arg(weights_arg, cal_seed);
    auto profile = calibrate(sim_corpus, *emb, cfg.lambda_decay);
    auto w = derive_weights(w_corpus, *emb, cfg.lambda_decay);
    profile.signal_weights = w.weights;
    profile.per_signal_auc = w.auc;
    profile.provenance = "thresholds: " + corpus_fingerprint(sim_corpus) + ", weights: " + corpus_fingerprint(w_corpus) +
                         ", embedder: " + emb->name();
    if (!profile_out.empty()) {
      std::ofstream out(profile_out);
      out << to_json(profile).dump(2) << '\n';
    }
    if (apply) {
      auto s = open_store(g);
      s.config.apply(profile);
      s.calibration = profile;
      commit(g, s);
    }
    emit(to_json(profile));
  });

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Generate a synthetic event stream with ground truth");
  std::string spec_path, gen_out;
  std::uint64_t gen_seed = 42;
  bool events_only = false;
  gen_cmd->add_option("--spec", spec_path, "JSON stream spec (defaults apply for missing fields)");
  gen_cmd->add_option("--seed", gen_seed);
  gen_cmd->add_option("-o,--out", gen_out, "Output file (default stdout)");
  gen_cmd->add_flag("--events-only", events_only, "Write bare event JSONL instead of the manifest");
  gen_cmd->callback([&] {
    StreamSpec spec = spec_path.empty() ? StreamSpec{} : stream_spec_from_json(read_json_file(spec_path));
    auto m = generate_stream(spec, gen_seed);
    std::ofstream file;
    if (!gen_out.empty()) file.open(gen_out);
    std::ostream& out = gen_out.empty() ? std::cout : file;
    if (events_only) write_events_jsonl(out, m.events);
    else out << to_json(m).dump() << '\n';
    log(g, std::to_string(m.events.size()) + " events, " + std::to_string(m.count_future_referenced()) +
               " future-referenced, " + std::to_string(m.count_duplicates()) + " duplicates");
  });

  // generate-corpus
  auto* gc_cmd = app.add_subcommand("generate-corpus", "Generate a labelled calibration corpus");
  std::string gc_kind = "similarity", gc_out;
  std::uint64_t gc_seed = 42;
  gc_cmd->add_option("--kind", gc_kind, "similarity or weights");
  gc_cmd->add_option("--seed", gc_seed);
  gc_cmd->add_option("-o,--out", gc_out);
  gc_cmd->callback([&] {
    if (gc_kind != "similarity" && gc_kind != "weights") throw Error(Errc::InvalidArgument, "kind must be similarity or weights");
    auto c = corpus_from_arg(gc_kind, gc_seed);
    std::ofstream file;
    if (!gc_out.empty()) file.open(gc_out);
    write_corpus_jsonl(gc_out.empty() ? std::cout : file, c);
  });

  // run
  auto* run_cmd = app.add_subcommand("run", "Streaming evaluation: ingest by session, consolidate and forget every N");
  std::string stream_path, run_mode = "dedup", format = "json";
  std::size_t every_n = 1;
  std::optional<std::int64_t> run_budget;
  std::uint64_t run_seed = 42;
  bool sweep = false, baseline = false;
  run_cmd->add_option("--stream", stream_path, "Manifest or event JSONL (default: generate with --seed)");
  run_cmd->add_option("--every-n", every_n, "Sessions per consolidation checkpoint")->check(CLI::PositiveNumber);
  run_cmd->add_option("--budget", run_budget, "Token budget applied at each checkpoint");
  run_cmd->add_option("--seed", run_seed, "Seed for the generated stream");
  run_cmd->add_option("--mode", run_mode, "dedup, dedup-adaptive or aggressive");
  run_cmd->add_option("--format", format, "json or text");
  run_cmd->add_flag("--sweep", sweep, "Run the 25K/50K/115K/200K budget sweep");
  run_cmd->add_flag("--baseline", baseline, "Keep everything (no consolidation or forgetting)");
  run_cmd->callback([&] {
    auto m = stream_path.empty() ? generate_stream(StreamSpec{}, run_seed) : read_stream(g, stream_path);
    const bool has_truth = !m.truth.empty();
    StoreConfig cfg = base_config(g);
    auto emb = make_embedder(g, cfg);
    RunOptions o;
    o.every_n = every_n;
    o.mode = parse_consolidation_mode(run_mode);
    o.budget = run_budget;
    o.baseline = baseline;
    const auto fmt = format == "text" ? ReportFormat::text : ReportFormat::json;
    if (sweep) {
      if (!has_truth) throw Error(Errc::InvalidArgument, "budget sweep needs a manifest with ground truth");
      std::cout << report(budget_sweep(m, cfg, *emb, default_sweep_budgets(), o), fmt) << '\n';
      return;
    }
    auto res = stream_run(m.events, has_truth ? &m : nullptr, cfg, *emb, o);
    std::cout << report(res.metrics, fmt) << '\n';
    if (!res.metrics.completed) throw Error(Errc::InvalidArgument, "run stopped early: " + res.metrics.error);
    auto bad = check_invariants(res.state);
    for (const auto& b : bad) std::cerr << "invariant: " << b << '\n';
    if (!bad.empty()) throw Error(Errc::InvalidArgument, "final store breaks invariants");
  });

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Summarize the store");
  stats_cmd->callback([&] {
    auto s = open_store(g);
    auto j = stats_json(s);
    emit(j);
    if (!j["invariant_violations"].empty()) throw Error(Errc::InvalidArgument, "store breaks invariants");
  });

  // snapshot / load
  auto* snap_cmd = app.add_subcommand("snapshot", "Copy the store to a snapshot file");
  std::string snap_path;
  snap_cmd->add_option("file", snap_path)->required();
  snap_cmd->callback([&] {
    auto s = open_store(g);
    save_snapshot(s, snap_path);
    emit({{"written", snap_path}, {"records", s.records.size()}});
  });

  auto* load_cmd = app.add_subcommand("load", "Replace the store with a snapshot file");
  std::string load_path;
  load_cmd->add_option("file", load_path)->required();
  load_cmd->callback([&] {
    auto s = load_snapshot(load_path);
    commit(g, s);
    emit({{"loaded", load_path}, {"records", s.records.size()}});
  });

  // graph
  auto* graph_cmd = app.add_subcommand("graph", "Inspect the semantic graph");
  graph_cmd->require_subcommand(1);
  auto* gstats = graph_cmd->add_subcommand("stats", "Entity and memory counts");
  gstats->callback([&] {
    auto s = open_store(g);
    std::vector<std::pair<double, std::string>> top;
    for (const auto& [key, e] : s.graph.entities()) top.emplace_back(-e.importance, e.name);
    std::sort(top.begin(), top.end());
    Json t = Json::array();
    for (std::size_t i = 0; i < std::min<std::size_t>(10, top.size()); ++i)
      t.push_back({{"entity", top[i].second}, {"importance", -top[i].first}});
    emit({{"entities", s.graph.entity_count()},
          {"memories", s.graph.memory_count()},
          {"co_occurrence_edges", s.graph.co_occurrences().size()},
          {"top_entities", t}});
  });
  auto* gnb = graph_cmd->add_subcommand("neighbors", "Co-occurring entities and memories reachable from an entity");
  std::string entity;
  int hops = 2;
  gnb->add_option("entity", entity)->required();
  gnb->add_option("--hops", hops);
  gnb->callback([&] {
    auto s = open_store(g);
    if (!s.graph.find_entity(entity)) throw Error(Errc::UnknownId, "entity " + entity);
    Json nb = Json::array();
    for (const auto& [name, w] : s.graph.neighbors(entity)) nb.push_back({{"entity", name}, {"weight", w}});
    Json mems = Json::array();
    for (const auto& h : s.graph.traverse({entity}, hops)) mems.push_back({{"memory_id", h.memory_id}, {"hops", h.hops}});
    emit({{"entity", entity}, {"neighbors", nb}, {"memories", mems}});
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "engram: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "engram: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
