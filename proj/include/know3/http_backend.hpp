#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "know3/llm_gateway.hpp"
#include "know3/similarity.hpp"

namespace know3 {

struct HttpEndpoint {
  std::string base_url;     // e.g. https://api.openai.com/v1
  std::string model;
  std::string api_key_env;  // empty: no Authorization header
  double timeout_s = 60.0;
  int max_attempts = 3;
  int backoff_ms = 500;     // doubled after each failed attempt
};

// OpenAI-style chat completions client. Retries connection failures, 408,
// 429 and 5xx responses; other errors fail at once.
class HttpBackend : public ChatBackend {
 public:
  // Throws ConfigError on a malformed URL or a missing API key variable.
  explicit HttpBackend(HttpEndpoint ep);

  std::string name() const override { return "http:" + ep_.model; }
  ChatResponse complete(const ChatRequest& req) override;

 private:
  HttpEndpoint ep_;
  std::string origin_;
  std::string path_prefix_;
  std::string api_key_;
};

// Cosine similarity of embeddings from an OpenAI-style /embeddings endpoint.
// Embeddings are cached per string. Identical strings score 1 without a call.
class HttpEmbeddingSimilarity : public SimilarityProvider {
 public:
  explicit HttpEmbeddingSimilarity(HttpEndpoint ep);

  std::string name() const override { return "external"; }
  double sim(std::string_view a, std::string_view b) const override;

 private:
  std::vector<double> embed(std::string_view text) const;

  HttpEndpoint ep_;
  std::string origin_;
  std::string path_prefix_;
  std::string api_key_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::vector<double>, std::less<>> cache_;
};

}  // namespace know3
