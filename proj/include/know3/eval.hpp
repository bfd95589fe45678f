#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "know3/pipeline.hpp"

namespace know3 {

// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
// whitespace.
std::string normalize_answer(std::string_view s);

// Both throw std::invalid_argument on an empty gold list. Scores are the
// maximum over golds. Token F1 is 1 when both sides normalize to nothing.
int exact_match(std::string_view pred, std::span<const std::string> golds);
double token_f1(std::string_view pred, std::span<const std::string> golds);

struct QAItem {
  std::string id;
  std::string question;
  std::vector<std::string> answers;
};

enum class DatasetFormat { records, hotpotqa, twowiki, popqa };
// "records", "hotpotqa", "2wiki", "popqa". Throws ConfigError otherwise.
DatasetFormat parse_dataset_format(std::string_view s);

// records: JSONL of {id, question, answers: [...]}.
// hotpotqa / 2wiki: a JSON array (or JSONL) of {_id, question, answer}.
// popqa: JSONL of {id, question, possible_answers}, where possible_answers
// is a list or a JSON-encoded list.
// Every item needs a question and at least one answer (DataError).
std::vector<QAItem> parse_dataset(std::string_view text, DatasetFormat fmt);
std::vector<QAItem> load_dataset(const std::filesystem::path& path,
                                 DatasetFormat fmt = DatasetFormat::records);

struct EvalItem {
  std::string id;
  std::string question;
  std::string prediction;
  int em = 0;
  double f1 = 0.0;
  int final_turn = -1;  // -1 when the run failed
  std::optional<StopReason> stop_reason;
  std::optional<std::string> error;
};

struct ModelUsage {
  size_t generated = 0;  // candidate documents over all turns
  size_t relevant = 0;   // of those, judged relevant
  size_t accepted = 0;   // in the final reference set
  double usage = 0.0;    // accepted / all accepted documents
};

struct EvalReport {
  std::vector<EvalItem> items;
  double em = 0.0;
  double f1 = 0.0;
  // Items whose answer was accepted at each turn, and the failed runs.
  std::map<int, size_t> turn_counts;
  size_t failed = 0;
  std::map<std::string, ModelUsage> usage;

  size_t size() const { return items.size(); }
  // Fraction of items per final turn (failed runs excluded from the keys).
  std::map<int, double> turn_fractions() const;

  // One record per item, then a summary record.
  std::string to_jsonl() const;
  std::string table(int max_turns) const;
};

struct EvalOptions {
  std::optional<size_t> limit;
  size_t workers = 1;
};

using ItemRunner = std::function<AnswerRecord(const QAItem&)>;

// Runs the first `limit` items (all by default) with up to `workers` in
// parallel. A PipelineError marks the item failed with EM = F1 = 0.
EvalReport evaluate(std::span<const QAItem> items, const ItemRunner& run,
                    const EvalOptions& opts = {});

}  // namespace know3
