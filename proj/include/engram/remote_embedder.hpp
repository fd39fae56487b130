#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "engram/embedding.hpp"
#include "engram/errors.hpp"

namespace engram {

struct HttpReply {
  int status = 0;  // 0 = no response (connect failure, timeout)
  std::string body;
};

/// Posts a JSON body to the provider and returns the raw reply.
using EmbedTransport = std::function<HttpReply(const std::string& body)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct RemoteEmbedderConfig {
  std::string url;    // http://host[:port]/path
  std::string token;  // sent as a bearer token when non-empty
  std::size_t dimension = 0;  // 0 = accept whatever the provider returns
  int max_attempts = 5;
  std::chrono::milliseconds base_backoff{200};
  std::chrono::milliseconds max_backoff{5000};
  std::chrono::seconds timeout{30};

  /// ENGRAM_EMBED_URL (required), ENGRAM_EMBED_TOKEN, ENGRAM_EMBED_DIM.
  static RemoteEmbedderConfig from_env() {
    RemoteEmbedderConfig c;
    const char* url = std::getenv("ENGRAM_EMBED_URL");
    if (!url || !*url) throw Error(Errc::ProviderUnavailable, "ENGRAM_EMBED_URL is not set");
    c.url = url;
    if (const char* t = std::getenv("ENGRAM_EMBED_TOKEN")) c.token = t;
    if (const char* d = std::getenv("ENGRAM_EMBED_DIM")) c.dimension = std::strtoull(d, nullptr, 10);
    return c;
  }
};

namespace detail {

struct UrlParts {
  std::string origin;  // scheme://host:port
  std::string path;
};

inline UrlParts split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(Errc::InvalidArgument, "embedding URL needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline EmbedTransport http_transport(const RemoteEmbedderConfig& cfg) {
  auto parts = split_url(cfg.url);
  return [parts, token = cfg.token, timeout = cfg.timeout](const std::string& body) -> HttpReply {
    httplib::Client cli(parts.origin);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
    auto res = cli.Post(parts.path, headers, body, "application/json");
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, res->body};
  };
}

inline bool transient(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

}  // namespace detail

/// Embeds through an HTTP provider: POST {"input": text} -> {"embedding": [...]}.
/// Transient failures are retried with capped exponential backoff.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig cfg, EmbedTransport transport = {}, Sleeper sleeper = {})
      : cfg_(std::move(cfg)),
        transport_(transport ? std::move(transport) : detail::http_transport(cfg_)),
        sleeper_(sleeper ? std::move(sleeper) : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    if (cfg_.max_attempts < 1) throw Error(Errc::InvalidArgument, "max_attempts must be >= 1");
  }

  Embedding embed(std::string_view text) override {
    const std::string body = nlohmann::json{{"input", text}}.dump();
    std::string last;
    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
      HttpReply reply = transport_(body);
      if (reply.status >= 200 && reply.status < 300) return decode(reply.body);
      last = "status " + std::to_string(reply.status) + (reply.body.empty() ? "" : ": " + reply.body.substr(0, 200));
      if (!detail::transient(reply.status)) throw Error(Errc::EmbeddingFailure, "provider rejected request, " + last);
      if (attempt == cfg_.max_attempts) break;
      const auto delay = backoff(attempt);
      retry_log_.push_back("attempt " + std::to_string(attempt) + " failed (" + last + "), retrying in " +
                           std::to_string(delay.count()) + "ms");
      sleeper_(delay);
    }
    throw Error(Errc::ProviderUnavailable,
                "gave up after " + std::to_string(cfg_.max_attempts) + " attempts, last " + last);
  }

  std::size_t dimension() const override { return cfg_.dimension ? cfg_.dimension : observed_; }
  std::string name() const override { return "remote"; }

  const std::vector<std::string>& retry_log() const { return retry_log_; }

  std::chrono::milliseconds backoff(int attempt) const {
    auto d = cfg_.base_backoff;
    for (int i = 1; i < attempt && d < cfg_.max_backoff; ++i) d *= 2;
    return std::min(d, cfg_.max_backoff);
  }

 private:
  Embedding decode(const std::string& body) {
    std::vector<double> v;
    try {
      v = nlohmann::json::parse(body).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::EmbeddingFailure, std::string("malformed provider reply: ") + e.what());
    }
    if (v.empty()) throw Error(Errc::EmbeddingFailure, "provider returned an empty embedding");
    if (cfg_.dimension && v.size() != cfg_.dimension)
      throw Error(Errc::DimensionMismatch, "provider returned " + std::to_string(v.size()) + " dimensions, store uses " +
                                               std::to_string(cfg_.dimension));
    if (observed_ && v.size() != observed_)
      throw Error(Errc::DimensionMismatch, "provider dimension changed from " + std::to_string(observed_));
    observed_ = v.size();
    return normalize(v);
  }

  RemoteEmbedderConfig cfg_;
  EmbedTransport transport_;
  Sleeper sleeper_;
  std::size_t observed_ = 0;
  std::vector<std::string> retry_log_;
};

}  // namespace engram
