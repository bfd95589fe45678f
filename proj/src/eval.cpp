#include "know3/eval.hpp"

#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "know3/text.hpp"

namespace know3 {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::vector<std::string> tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double f1_one(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() || gold.empty()) return pred == gold ? 1.0 : 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : gold) ++counts[t];
  int common = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double p = double(common) / double(pred.size());
  const double r = double(common) / double(gold.size());
  return 2.0 * p * r / (p + r);
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string cleaned;
  for (char c : fold_case(s)) {
    if (std::ispunct(static_cast<unsigned char>(c))) continue;
    cleaned += c;
  }
  std::string out;
  for (const auto& t : tokens(cleaned)) {
    if (t == "a" || t == "an" || t == "the") continue;
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

int exact_match(std::string_view pred, std::span<const std::string> golds) {
  if (golds.empty()) throw std::invalid_argument("exact_match: no gold answers");
  const std::string p = normalize_answer(pred);
  for (const auto& g : golds) {
    if (normalize_answer(g) == p) return 1;
  }
  return 0;
}

double token_f1(std::string_view pred, std::span<const std::string> golds) {
  if (golds.empty()) throw std::invalid_argument("token_f1: no gold answers");
  const auto p = tokens(normalize_answer(pred));
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, f1_one(p, tokens(normalize_answer(g))));
  return best;
}

// ---- datasets ---------------------------------------------------------------

DatasetFormat parse_dataset_format(std::string_view s) {
  if (s == "records") return DatasetFormat::records;
  if (s == "hotpotqa") return DatasetFormat::hotpotqa;
  if (s == "2wiki") return DatasetFormat::twowiki;
  if (s == "popqa") return DatasetFormat::popqa;
  throw ConfigError("unknown dataset format '" + std::string(s) +
                    "' (expected records, hotpotqa, 2wiki or popqa)");
}

namespace {

std::string id_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw DataError("id must be a string or integer");
}

std::vector<std::string> answer_list(const json& v) {
  std::vector<std::string> out;
  if (v.is_string()) {
    out.push_back(v.get<std::string>());
  } else if (v.is_array()) {
    for (const auto& a : v) {
      if (!a.is_string()) throw DataError("answers must be strings");
      out.push_back(a.get<std::string>());
    }
  } else {
    throw DataError("answers must be a string or a list of strings");
  }
  return out;
}

QAItem convert(const json& j, DatasetFormat fmt, size_t index) {
  if (!j.is_object()) throw DataError("item is not an object");
  QAItem item;
  const char* id_key = fmt == DatasetFormat::hotpotqa || fmt == DatasetFormat::twowiki ? "_id" : "id";
  if (j.contains(id_key)) {
    item.id = id_string(j[id_key]);
  } else if (j.contains("id")) {
    item.id = id_string(j["id"]);
  } else {
    item.id = std::to_string(index);
  }
  if (!j.contains("question") || !j["question"].is_string()) {
    throw DataError("missing string 'question'");
  }
  item.question = j["question"].get<std::string>();
  switch (fmt) {
    case DatasetFormat::records:
      if (!j.contains("answers")) throw DataError("missing 'answers'");
      item.answers = answer_list(j["answers"]);
      break;
    case DatasetFormat::hotpotqa:
    case DatasetFormat::twowiki:
      if (!j.contains("answer")) throw DataError("missing 'answer'");
      item.answers = answer_list(j["answer"]);
      break;
    case DatasetFormat::popqa: {
      if (!j.contains("possible_answers")) throw DataError("missing 'possible_answers'");
      json pa = j["possible_answers"];
      if (pa.is_string()) {
        try {
          pa = json::parse(pa.get<std::string>());
        } catch (const json::exception&) {
          // A bare string is a single answer.
        }
      }
      item.answers = answer_list(pa);
      break;
    }
  }
  if (trim(item.question).empty()) throw DataError("empty question");
  std::erase_if(item.answers, [](const std::string& a) { return trim(a).empty(); });
  if (item.answers.empty()) throw DataError("no gold answers");
  return item;
}

}  // namespace

std::vector<QAItem> parse_dataset(std::string_view text, DatasetFormat fmt) {
  std::vector<QAItem> out;
  const std::string_view body = trim(text);
  if (body.empty()) return out;
  if (body.front() == '[') {
    json arr;
    try {
      arr = json::parse(body);
    } catch (const json::exception& e) {
      throw DataError(std::string("dataset is not valid JSON: ") + e.what());
    }
    for (size_t i = 0; i < arr.size(); ++i) {
      try {
        out.push_back(convert(arr[i], fmt, i));
      } catch (const DataError& e) {
        throw DataError("dataset item " + std::to_string(i) + ": " + e.what());
      }
    }
    return out;
  }
  size_t line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(convert(json::parse(line), fmt, out.size()));
    } catch (const json::exception& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<QAItem> load_dataset(const std::filesystem::path& path, DatasetFormat fmt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_dataset(ss.str(), fmt);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- evaluation -------------------------------------------------------------

std::map<int, double> EvalReport::turn_fractions() const {
  std::map<int, double> out;
  if (items.empty()) return out;
  for (const auto& [t, n] : turn_counts) out[t] = double(n) / double(items.size());
  return out;
}

std::string EvalReport::to_jsonl() const {
  std::string out;
  for (const auto& it : items) {
    ojson j;
    j["id"] = it.id;
    j["question"] = it.question;
    j["prediction"] = it.prediction;
    j["em"] = it.em;
    j["f1"] = it.f1;
    j["final_turn"] = it.final_turn;
    j["stop_reason"] = it.stop_reason ? ojson(std::string(to_string(*it.stop_reason))) : ojson(nullptr);
    if (it.error) j["error"] = *it.error;
    out += j.dump() + "\n";
  }
  ojson s;
  s["n"] = items.size();
  s["em"] = em;
  s["f1"] = f1;
  ojson turns = ojson::object();
  for (const auto& [t, frac] : turn_fractions()) turns[std::to_string(t)] = frac;
  s["turn_fractions"] = turns;
  s["failed"] = failed;
  ojson usage_j = ojson::object();
  for (const auto& [m, u] : usage) {
    usage_j[m] = {{"generated", u.generated},
                  {"relevant", u.relevant},
                  {"accepted", u.accepted},
                  {"usage", u.usage}};
  }
  s["usage"] = usage_j;
  out += ojson{{"summary", s}}.dump() + "\n";
  return out;
}

std::string EvalReport::table(int max_turns) const {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "items %zu   EM %.3f   F1 %.3f   failed %zu\n", items.size(), em,
                f1, failed);
  out += buf;
  int last = max_turns;
  if (!turn_counts.empty()) last = std::max(last, turn_counts.rbegin()->first);
  out += "\nturn   ";
  for (int t = 0; t <= last; ++t) {
    std::snprintf(buf, sizeof buf, "%8d", t);
    out += buf;
  }
  out += "\nshare  ";
  const auto fr = turn_fractions();
  for (int t = 0; t <= last; ++t) {
    auto it = fr.find(t);
    std::snprintf(buf, sizeof buf, "%7.1f%%", 100.0 * (it == fr.end() ? 0.0 : it->second));
    out += buf;
  }
  out += "\n";
  if (!usage.empty()) {
    out += "\nmodel        generated  relevant  accepted   usage\n";
    for (const auto& [m, u] : usage) {
      std::snprintf(buf, sizeof buf, "%-12s %9zu %9zu %9zu %6.1f%%\n", m.c_str(), u.generated,
                    u.relevant, u.accepted, 100.0 * u.usage);
      out += buf;
    }
  }
  return out;
}

EvalReport evaluate(std::span<const QAItem> items, const ItemRunner& run, const EvalOptions& opts) {
  const size_t n = opts.limit ? std::min(*opts.limit, items.size()) : items.size();
  std::vector<EvalItem> results(n);
  std::vector<std::optional<AnswerRecord>> records(n);

  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (size_t i; (i = next.fetch_add(1)) < n;) {
      const QAItem& q = items[i];
      EvalItem& r = results[i];
      r.id = q.id;
      r.question = q.question;
      try {
        AnswerRecord rec = run(q);
        r.prediction = rec.final_answer;
        r.em = exact_match(rec.final_answer, q.answers);
        r.f1 = token_f1(rec.final_answer, q.answers);
        r.final_turn = rec.final_turn();
        r.stop_reason = rec.stop_reason;
        records[i] = std::move(rec);
      } catch (const PipelineError& e) {
        r.error = e.what();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const size_t n_threads = std::max<size_t>(1, std::min(opts.workers, n));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EvalReport rep;
  rep.items = std::move(results);
  size_t total_accepted = 0;
  for (size_t i = 0; i < n; ++i) {
    const EvalItem& r = rep.items[i];
    rep.em += r.em;
    rep.f1 += r.f1;
    if (r.error) {
      ++rep.failed;
    } else {
      ++rep.turn_counts[r.final_turn];
    }
    if (!records[i]) continue;
    for (const auto& state : records[i]->trace) {
      for (const auto& d : state.candidates) {
        auto& u = rep.usage[d.source_model];
        ++u.generated;
        u.relevant += d.relevance;
      }
    }
    if (records[i]->trace.empty()) continue;
    for (const auto& d : records[i]->trace.back().accepted_refs) {
      ++rep.usage[d.source_model].accepted;
      ++total_accepted;
    }
  }
  if (n > 0) {
    rep.em /= double(n);
    rep.f1 /= double(n);
  }
  for (auto& [m, u] : rep.usage) {
    u.usage = total_accepted ? double(u.accepted) / double(total_accepted) : 0.0;
  }
  return rep;
}

}  // namespace know3
