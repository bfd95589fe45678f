#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "know3/prompt.hpp"

namespace know3 {

enum class RoleKind { answer, triple_extract, query_gen, relevance, knowledge_model };

struct LlmRole {
  RoleKind kind = RoleKind::answer;
  std::string model;  // knowledge models only

  // "answer", ..., "knowledge_model:<name>"
  std::string str() const;
  // Throws ConfigError on an unknown role string.
  static LlmRole parse(std::string_view s);

  friend bool operator==(const LlmRole&, const LlmRole&) = default;
};

struct ChatRequest {
  LlmRole role;
  int turn = 0;
  SlotValues slots;
  std::string system;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 512;
};

struct ChatResponse {
  std::string text;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

// Implementations must be safe for concurrent calls and throw BackendError
// once they give up.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string name() const = 0;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

// Stable hash of the slot values (sorted by slot name), 16 hex digits.
std::string slot_key(const SlotValues& slots);

// One scripted reply. Absent fields match anything.
struct FixtureRecord {
  std::string role;
  std::optional<int> turn;
  std::optional<std::string> key;       // slot_key of the request
  std::optional<std::string> contains;  // substring of the rendered prompt
  std::optional<std::string> response;
  std::optional<std::string> error;     // reply with a backend failure instead
};

// Replays scripted responses. A request is answered by the matching record
// with the most constraints (turn, key, contains); ties go to the earlier
// record. No match is a BackendError.
class FixtureBackend : public ChatBackend {
 public:
  explicit FixtureBackend(std::vector<FixtureRecord> records);

  // One JSON object per line; blank lines are skipped. Trace files written
  // by TraceLog load as fixtures. Throws DataError with the line number.
  static FixtureBackend parse(std::string_view jsonl);
  static FixtureBackend load(const std::filesystem::path& path);

  std::string name() const override { return "fixture"; }
  ChatResponse complete(const ChatRequest& req) override;

  const std::vector<FixtureRecord>& records() const { return records_; }

 private:
  std::vector<FixtureRecord> records_;
};

struct ChatExchange {
  std::string role;
  int turn = 0;
  std::string key;
  std::string prompt;
  std::string response;
  std::optional<std::string> error;
  std::optional<double> latency_ms;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;

  std::string to_json_line() const;
};

// Append-only exchange log, one JSON object per line in completion order.
// With `deterministic` set, latency is left out.
class TraceLog {
 public:
  explicit TraceLog(std::optional<std::filesystem::path> path = {}, bool deterministic = false);

  void record(ChatExchange ex);
  std::vector<ChatExchange> exchanges() const;
  size_t size() const;
  bool deterministic() const { return deterministic_; }

 private:
  mutable std::mutex mu_;
  std::vector<ChatExchange> exchanges_;
  std::ofstream out_;
  bool deterministic_;
};

struct TextTriple {
  std::string head, relation, tail;
  friend bool operator==(const TextTriple&, const TextTriple&) = default;
};

// Every "(head, relation, tail)" group in the text. The head ends at the
// first comma and the tail starts after the last one; any commas in between
// stay in the relation. Groups with an empty part are dropped.
std::vector<TextTriple> parse_triples(std::string_view text);

// First true/false/yes/no word decides; none of them means false.
bool parse_verdict(std::string_view text);

struct GatewayOptions {
  size_t max_concurrency = 4;
  int max_tokens = 512;
};

class Gateway {
 public:
  explicit Gateway(PromptSet prompts, GatewayOptions opts = {}, TraceLog* trace = nullptr);

  // Rebinding replaces the previous backend.
  void bind(RoleKind role, std::shared_ptr<ChatBackend> backend);
  void add_knowledge_model(const std::string& name, std::shared_ptr<ChatBackend> backend);
  const std::vector<std::string>& knowledge_models() const { return model_names_; }

  // Receives messages about skipped knowledge-model calls. Defaults to stderr.
  void set_warning_sink(std::function<void(const std::string&)> sink);

  // Throws std::invalid_argument on a blank question, before any call.
  // Throws BackendError on backend failure or an empty answer.
  std::string generate_answer(std::string_view question, std::span<const std::string> refs,
                              int turn);

  std::vector<TextTriple> extract_triples(std::string_view question, std::string_view answer,
                                          int turn);

  // Turns 0 and 1 return the question itself without a call. An empty
  // reply also falls back to the question.
  std::string regenerate_query(std::string_view question, std::span<const std::string> refs,
                               std::string_view answer, int turn);

  bool relevance_check(std::string_view document, std::string_view question,
                       std::span<const std::string> entity_labels, int turn);

  // nullopt (with a warning) when the backend fails or replies with nothing.
  // Throws ConfigError for an unregistered model.
  std::optional<std::string> generate_reference(const std::string& model,
                                                std::string_view query, int turn);

  struct ReferenceJob {
    std::string model;
    std::string query;
  };
  // Runs the jobs with at most max_concurrency in flight. Results are in
  // job order.
  std::vector<std::optional<std::string>> generate_references(std::span<const ReferenceJob> jobs,
                                                              int turn);

  // Total backend calls made, including failed ones.
  size_t calls() const { return calls_.load(); }

 private:
  ChatResponse call(const LlmRole& role, ChatBackend& backend, const PromptTemplate& tmpl,
                    SlotValues slots, int turn);
  ChatBackend& backend_for(RoleKind kind) const;
  void warn(const std::string& msg);

  PromptSet prompts_;
  GatewayOptions opts_;
  TraceLog* trace_;
  std::map<RoleKind, std::shared_ptr<ChatBackend>> roles_;
  std::map<std::string, std::shared_ptr<ChatBackend>> models_;
  std::vector<std::string> model_names_;
  std::function<void(const std::string&)> warn_;
  std::mutex warn_mu_;
  std::atomic<size_t> calls_{0};
};

// Numbered reference block: "[1] ...\n[2] ...", or "(none)".
std::string format_references(std::span<const std::string> refs);

}  // namespace know3
