#include "know3/http_backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "know3/errors.hpp"

namespace know3 {

using json = nlohmann::json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const size_t scheme = url.find("://");
  if (scheme == std::string::npos || (url.compare(0, scheme, "http") != 0 &&
                                      url.compare(0, scheme, "https") != 0)) {
    throw ConfigError("endpoint URL must start with http:// or https://: '" + url + "'");
  }
  const size_t slash = url.find('/', scheme + 3);
  SplitUrl out;
  out.origin = url.substr(0, slash);
  if (out.origin.size() == scheme + 3) throw ConfigError("endpoint URL has no host: '" + url + "'");
  if (slash != std::string::npos) out.prefix = url.substr(slash);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

std::string read_key(const std::string& env) {
  if (env.empty()) return {};
  const char* v = std::getenv(env.c_str());
  if (!v || !*v) throw ConfigError("environment variable " + env + " is not set");
  return v;
}

bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

json post_json(const HttpEndpoint& ep, const std::string& origin, const std::string& path,
               const std::string& api_key, const json& body, const std::string& role) {
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  const std::string payload = body.dump();
  const auto timeout = std::chrono::duration<double>(ep.timeout_s);
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);

  std::string last_error;
  const int attempts = std::max(1, ep.max_attempts);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(
          static_cast<long long>(ep.backoff_ms * std::pow(2.0, attempt - 1))));
    }
    httplib::Client cli(origin);
    cli.set_connection_timeout(timeout_us);
    cli.set_read_timeout(timeout_us);
    cli.set_write_timeout(timeout_us);
    auto res = cli.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300);
      if (retryable(res->status)) continue;
      throw BackendError(role, last_error);
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw BackendError(role, std::string("malformed response: ") + e.what());
    }
  }
  throw BackendError(role, last_error + " (after " + std::to_string(attempts) + " attempts)");
}

}  // namespace

HttpBackend::HttpBackend(HttpEndpoint ep) : ep_(std::move(ep)) {
  if (ep_.model.empty()) throw ConfigError("http backend needs a model id");
  auto url = split_url(ep_.base_url);
  origin_ = url.origin;
  path_prefix_ = url.prefix;
  api_key_ = read_key(ep_.api_key_env);
}

ChatResponse HttpBackend::complete(const ChatRequest& req) {
  json body = {
      {"model", ep_.model},
      {"messages", json::array({{{"role", "system"}, {"content", req.system}},
                                {{"role", "user"}, {"content", req.prompt}}})},
      {"temperature", req.temperature},
      {"max_tokens", req.max_tokens},
  };
  const std::string role = req.role.str();
  json resp = post_json(ep_, origin_, path_prefix_ + "/chat/completions", api_key_, body, role);
  ChatResponse out;
  try {
    const auto& content = resp.at("choices").at(0).at("message").at("content");
    out.text = content.is_null() ? "" : content.get<std::string>();
    if (auto u = resp.find("usage"); u != resp.end() && u->is_object()) {
      if (u->contains("prompt_tokens")) out.prompt_tokens = u->at("prompt_tokens").get<int>();
      if (u->contains("completion_tokens")) {
        out.completion_tokens = u->at("completion_tokens").get<int>();
      }
    }
  } catch (const json::exception& e) {
    throw BackendError(role, std::string("unexpected response shape: ") + e.what());
  }
  return out;
}

HttpEmbeddingSimilarity::HttpEmbeddingSimilarity(HttpEndpoint ep) : ep_(std::move(ep)) {
  if (ep_.model.empty()) throw ConfigError("embedding endpoint needs a model id");
  auto url = split_url(ep_.base_url);
  origin_ = url.origin;
  path_prefix_ = url.prefix;
  api_key_ = read_key(ep_.api_key_env);
}

std::vector<double> HttpEmbeddingSimilarity::embed(std::string_view text) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(text); it != cache_.end()) return it->second;
  }
  json body = {{"model", ep_.model}, {"input", json::array({std::string(text)})}};
  json resp = post_json(ep_, origin_, path_prefix_ + "/embeddings", api_key_, body, "embedding");
  std::vector<double> v;
  try {
    v = resp.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw BackendError("embedding", std::string("unexpected response shape: ") + e.what());
  }
  if (v.empty()) throw BackendError("embedding", "empty embedding");
  std::lock_guard lock(mu_);
  cache_.emplace(std::string(text), v);
  return v;
}

double HttpEmbeddingSimilarity::sim(std::string_view a, std::string_view b) const {
  if (a == b) return 1.0;
  const auto va = embed(a);
  const auto vb = embed(b);
  if (va.size() != vb.size()) throw BackendError("embedding", "embedding sizes differ");
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < va.size(); ++i) {
    dot += va[i] * vb[i];
    na += va[i] * va[i];
    nb += vb[i] * vb[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

}  // namespace know3
