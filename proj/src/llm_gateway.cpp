#include "know3/llm_gateway.hpp"

#include <chrono>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "know3/errors.hpp"
#include "know3/text.hpp"

namespace know3 {

using json = nlohmann::ordered_json;

std::string LlmRole::str() const {
  switch (kind) {
    case RoleKind::answer: return "answer";
    case RoleKind::triple_extract: return "triple_extract";
    case RoleKind::query_gen: return "query_gen";
    case RoleKind::relevance: return "relevance";
    case RoleKind::knowledge_model: return "knowledge_model:" + model;
  }
  return "unknown";
}

LlmRole LlmRole::parse(std::string_view s) {
  if (s == "answer") return {RoleKind::answer, {}};
  if (s == "triple_extract") return {RoleKind::triple_extract, {}};
  if (s == "query_gen") return {RoleKind::query_gen, {}};
  if (s == "relevance") return {RoleKind::relevance, {}};
  constexpr std::string_view prefix = "knowledge_model:";
  if (s.starts_with(prefix) && s.size() > prefix.size()) {
    return {RoleKind::knowledge_model, std::string(s.substr(prefix.size()))};
  }
  throw ConfigError("unknown LLM role '" + std::string(s) + "'");
}

std::string slot_key(const SlotValues& slots) {
  std::string buf;
  for (const auto& [name, value] : slots) {
    buf += name;
    buf += '\x1f';
    buf += value;
    buf += '\x1e';
  }
  return hex64(fnv1a64(buf));
}

// ---- fixtures -------------------------------------------------------------

FixtureBackend::FixtureBackend(std::vector<FixtureRecord> records) : records_(std::move(records)) {}

namespace {

std::optional<std::string> opt_string(const json& j, const char* field, size_t line) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw DataError("fixtures line " + std::to_string(line) + ": '" + field + "' must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

FixtureBackend FixtureBackend::parse(std::string_view jsonl) {
  std::vector<FixtureRecord> records;
  size_t line_no = 0;
  for (std::string_view line : split(jsonl, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("fixtures line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) throw DataError("fixtures line " + std::to_string(line_no) + ": not an object");
    FixtureRecord r;
    auto role = opt_string(j, "role", line_no);
    if (!role) throw DataError("fixtures line " + std::to_string(line_no) + ": missing 'role'");
    LlmRole::parse(*role);
    r.role = *role;
    if (auto it = j.find("turn"); it != j.end() && !it->is_null()) {
      if (!it->is_number_integer()) {
        throw DataError("fixtures line " + std::to_string(line_no) + ": 'turn' must be an integer");
      }
      r.turn = it->get<int>();
    }
    r.key = opt_string(j, "key", line_no);
    r.contains = opt_string(j, "contains", line_no);
    r.response = opt_string(j, "response", line_no);
    r.error = opt_string(j, "error", line_no);
    if (!r.response && !r.error) {
      throw DataError("fixtures line " + std::to_string(line_no) +
                      ": needs 'response' or 'error'");
    }
    records.push_back(std::move(r));
  }
  return FixtureBackend(std::move(records));
}

FixtureBackend FixtureBackend::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open fixtures file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

ChatResponse FixtureBackend::complete(const ChatRequest& req) {
  const std::string role = req.role.str();
  const std::string key = slot_key(req.slots);
  const FixtureRecord* best = nullptr;
  int best_rank = -1;
  for (const FixtureRecord& r : records_) {
    if (r.role != role) continue;
    if (r.turn && *r.turn != req.turn) continue;
    if (r.key && *r.key != key) continue;
    if (r.contains && req.prompt.find(*r.contains) == std::string::npos) continue;
    const int rank = int(r.turn.has_value()) + int(r.key.has_value()) + int(r.contains.has_value());
    if (rank > best_rank) {
      best = &r;
      best_rank = rank;
    }
  }
  if (!best) {
    throw BackendError(role, "no fixture for turn " + std::to_string(req.turn) + " key " + key);
  }
  if (best->error) throw BackendError(role, *best->error);
  return {*best->response, std::nullopt, std::nullopt};
}

// ---- trace ----------------------------------------------------------------

std::string ChatExchange::to_json_line() const {
  json j;
  j["role"] = role;
  j["turn"] = turn;
  j["key"] = key;
  j["prompt"] = prompt;
  if (error) {
    j["error"] = *error;
  } else {
    j["response"] = response;
  }
  if (latency_ms) j["latency_ms"] = *latency_ms;
  if (prompt_tokens) j["prompt_tokens"] = *prompt_tokens;
  if (completion_tokens) j["completion_tokens"] = *completion_tokens;
  return j.dump();
}

TraceLog::TraceLog(std::optional<std::filesystem::path> path, bool deterministic)
    : deterministic_(deterministic) {
  if (path) {
    out_.open(*path, std::ios::binary | std::ios::app);
    if (!out_) throw ConfigError("cannot open trace file " + path->string());
  }
}

void TraceLog::record(ChatExchange ex) {
  if (deterministic_) ex.latency_ms.reset();
  std::lock_guard lock(mu_);
  if (out_.is_open()) {
    out_ << ex.to_json_line() << '\n';
    out_.flush();
  }
  exchanges_.push_back(std::move(ex));
}

std::vector<ChatExchange> TraceLog::exchanges() const {
  std::lock_guard lock(mu_);
  return exchanges_;
}

size_t TraceLog::size() const {
  std::lock_guard lock(mu_);
  return exchanges_.size();
}

// ---- parsing --------------------------------------------------------------

namespace {

std::string clean_part(std::string_view s) {
  s = trim(s);
  while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                           (s.front() == '\'' && s.back() == '\''))) {
    s = trim(s.substr(1, s.size() - 2));
  }
  return collapse_whitespace(s);
}

}  // namespace

std::vector<TextTriple> parse_triples(std::string_view text) {
  std::vector<TextTriple> out;
  size_t i = 0;
  while ((i = text.find('(', i)) != std::string_view::npos) {
    int depth = 0;
    size_t j = i;
    for (; j < text.size(); ++j) {
      if (text[j] == '\n') break;
      if (text[j] == '(') ++depth;
      if (text[j] == ')' && --depth == 0) break;
    }
    if (j >= text.size() || text[j] != ')') {
      i = j;
      continue;
    }
    const std::string_view inner = text.substr(i + 1, j - i - 1);
    const size_t first = inner.find(',');
    const size_t last = inner.rfind(',');
    if (first != std::string_view::npos && first != last) {
      TextTriple t{clean_part(inner.substr(0, first)),
                   clean_part(inner.substr(first + 1, last - first - 1)),
                   clean_part(inner.substr(last + 1))};
      if (!t.head.empty() && !t.relation.empty() && !t.tail.empty()) out.push_back(std::move(t));
    }
    i = j + 1;
  }
  return out;
}

bool parse_verdict(std::string_view text) {
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
    const std::string word = fold_case(text.substr(i, j - i));
    if (word == "true" || word == "yes") return true;
    if (word == "false" || word == "no") return false;
    i = j;
  }
  return false;
}

std::string format_references(std::span<const std::string> refs) {
  if (refs.empty()) return "(none)";
  std::string out;
  for (size_t i = 0; i < refs.size(); ++i) {
    if (i) out += '\n';
    out += "[" + std::to_string(i + 1) + "] " + refs[i];
  }
  return out;
}

// ---- gateway --------------------------------------------------------------

Gateway::Gateway(PromptSet prompts, GatewayOptions opts, TraceLog* trace)
    : prompts_(std::move(prompts)), opts_(opts), trace_(trace) {
  if (opts_.max_concurrency == 0) throw ConfigError("gateway.max_concurrency must be >= 1");
  warn_ = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
}

void Gateway::bind(RoleKind role, std::shared_ptr<ChatBackend> backend) {
  if (role == RoleKind::knowledge_model) {
    throw std::invalid_argument("bind: use add_knowledge_model for knowledge models");
  }
  roles_[role] = std::move(backend);
}

void Gateway::add_knowledge_model(const std::string& name, std::shared_ptr<ChatBackend> backend) {
  if (name.empty()) throw ConfigError("knowledge model name must not be empty");
  if (!models_.count(name)) model_names_.push_back(name);
  models_[name] = std::move(backend);
}

void Gateway::set_warning_sink(std::function<void(const std::string&)> sink) {
  warn_ = std::move(sink);
}

void Gateway::warn(const std::string& msg) {
  std::lock_guard lock(warn_mu_);
  if (warn_) warn_(msg);
}

ChatBackend& Gateway::backend_for(RoleKind kind) const {
  auto it = roles_.find(kind);
  if (it == roles_.end() || !it->second) {
    throw ConfigError("no backend bound for role '" + LlmRole{kind, {}}.str() + "'");
  }
  return *it->second;
}

ChatResponse Gateway::call(const LlmRole& role, ChatBackend& backend, const PromptTemplate& tmpl,
                           SlotValues slots, int turn) {
  ChatRequest req;
  req.role = role;
  req.turn = turn;
  req.prompt = tmpl.render(slots);
  req.slots = std::move(slots);
  req.system = "You are a helpful assistant.";
  req.max_tokens = opts_.max_tokens;

  ChatExchange ex;
  ex.role = role.str();
  ex.turn = turn;
  ex.key = slot_key(req.slots);
  ex.prompt = req.prompt;

  ++calls_;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  };
  try {
    ChatResponse resp = backend.complete(req);
    ex.response = resp.text;
    ex.latency_ms = elapsed();
    ex.prompt_tokens = resp.prompt_tokens;
    ex.completion_tokens = resp.completion_tokens;
    if (trace_) trace_->record(std::move(ex));
    return resp;
  } catch (const std::exception& e) {
    ex.error = e.what();
    ex.latency_ms = elapsed();
    if (trace_) trace_->record(std::move(ex));
    if (dynamic_cast<const BackendError*>(&e)) throw;
    throw BackendError(role.str(), e.what());
  }
}

std::string Gateway::generate_answer(std::string_view question, std::span<const std::string> refs,
                                     int turn) {
  if (trim(question).empty()) throw std::invalid_argument("generate_answer: empty question");
  LlmRole role{RoleKind::answer, {}};
  auto resp = call(role, backend_for(RoleKind::answer), prompts_.answer,
                   {{"question", std::string(question)}, {"references", format_references(refs)}},
                   turn);
  std::string answer(trim(resp.text));
  if (answer.empty()) throw BackendError(role.str(), "empty answer");
  return answer;
}

std::vector<TextTriple> Gateway::extract_triples(std::string_view question, std::string_view answer,
                                                 int turn) {
  auto resp = call({RoleKind::triple_extract, {}}, backend_for(RoleKind::triple_extract),
                   prompts_.triple_extract,
                   {{"question", std::string(question)}, {"answer", std::string(answer)}}, turn);
  return parse_triples(resp.text);
}

std::string Gateway::regenerate_query(std::string_view question, std::span<const std::string> refs,
                                      std::string_view answer, int turn) {
  if (turn <= 1) return std::string(question);
  auto resp = call({RoleKind::query_gen, {}}, backend_for(RoleKind::query_gen), prompts_.query_gen,
                   {{"question", std::string(question)},
                    {"references", format_references(refs)},
                    {"answer", std::string(answer)}},
                   turn);
  std::string q = collapse_whitespace(resp.text);
  return q.empty() ? std::string(question) : q;
}

bool Gateway::relevance_check(std::string_view document, std::string_view question,
                              std::span<const std::string> entity_labels, int turn) {
  std::string entities;
  for (const auto& l : entity_labels) {
    if (!entities.empty()) entities += "; ";
    entities += l;
  }
  if (entities.empty()) entities = "(none)";
  auto resp = call({RoleKind::relevance, {}}, backend_for(RoleKind::relevance), prompts_.relevance,
                   {{"question", std::string(question)},
                    {"document", std::string(document)},
                    {"entities", entities}},
                   turn);
  return parse_verdict(resp.text);
}

std::optional<std::string> Gateway::generate_reference(const std::string& model,
                                                       std::string_view query, int turn) {
  auto it = models_.find(model);
  if (it == models_.end() || !it->second) {
    throw ConfigError("knowledge model '" + model + "' is not registered");
  }
  try {
    auto resp = call({RoleKind::knowledge_model, model}, *it->second, prompts_.knowledge,
                     {{"question", std::string(query)}}, turn);
    std::string text(trim(resp.text));
    if (text.empty()) {
      warn("knowledge model '" + model + "' returned an empty document; skipped");
      return std::nullopt;
    }
    return text;
  } catch (const BackendError& e) {
    warn(std::string(e.what()) + "; reference skipped");
    return std::nullopt;
  }
}

std::vector<std::optional<std::string>> Gateway::generate_references(
    std::span<const ReferenceJob> jobs, int turn) {
  std::vector<std::optional<std::string>> out(jobs.size());
  for (const auto& job : jobs) {
    if (!models_.count(job.model)) {
      throw ConfigError("knowledge model '" + job.model + "' is not registered");
    }
  }
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i; (i = next.fetch_add(1)) < jobs.size();) {
      try {
        out[i] = generate_reference(jobs[i].model, jobs[i].query, turn);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const size_t n_threads = std::min(opts_.max_concurrency, jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace know3
