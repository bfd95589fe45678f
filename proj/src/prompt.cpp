#include "know3/prompt.hpp"

#include <fstream>
#include <sstream>

#include "know3/errors.hpp"

namespace know3 {

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  std::string literal;
  for (size_t i = 0; i < text_.size(); ++i) {
    const char c = text_[i];
    if (c == '{' && i + 1 < text_.size() && text_[i + 1] == '{') {
      literal += '{';
      ++i;
    } else if (c == '}' && i + 1 < text_.size() && text_[i + 1] == '}') {
      literal += '}';
      ++i;
    } else if (c == '{') {
      const size_t close = text_.find('}', i + 1);
      if (close == std::string::npos) {
        throw ConfigError("prompt template: unterminated slot at offset " + std::to_string(i));
      }
      std::string name = text_.substr(i + 1, close - i - 1);
      if (name.empty() || name.find_first_of("{ \n\t") != std::string::npos) {
        throw ConfigError("prompt template: bad slot name at offset " + std::to_string(i));
      }
      if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
      literal.clear();
      bool known = false;
      for (const auto& s : slots_) known |= s == name;
      if (!known) slots_.push_back(name);
      pieces_.push_back({true, std::move(name)});
      i = close;
    } else if (c == '}') {
      throw ConfigError("prompt template: stray '}' at offset " + std::to_string(i));
    } else {
      literal += c;
    }
  }
  if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
}

std::string PromptTemplate::render(const SlotValues& values) const {
  std::string out;
  for (const Piece& p : pieces_) {
    if (!p.is_slot) {
      out += p.text;
      continue;
    }
    auto it = values.find(p.text);
    if (it == values.end()) throw ConfigError("prompt template: no value for slot {" + p.text + "}");
    out += it->second;
  }
  return out;
}

namespace {

constexpr std::string_view kAnswer =
    R"(Answer the question. Use the references when they are helpful. Reply with a short answer only, without explanation.

Question: Who directed the film in which Tom Hanks played Forrest Gump?
Answer: Robert Zemeckis

Question: What is the capital of the country where the Eiffel Tower stands?
Answer: Paris

Question: Which river flows through the city where Mozart was born?
Answer: Salzach

References:
{references}

Question: {question}
Answer:)";

constexpr std::string_view kTripleExtract =
    R"(Extract the facts stated in the answer as knowledge graph triples. Write one triple per line as (head, relation, tail). Use full entity names and Wikidata-style relation names such as "student of" or "country of citizenship". The question is given for context only. If the answer states no facts, reply "no facts".

Question: {question}
Answer: {answer}
Triples:)";

constexpr std::string_view kQueryGen =
    R"(The current answer to the question may be wrong. Using the question, the references collected so far and the current answer, write one new search query that targets the missing or doubtful facts. Reply with the query only.

Question: {question}
References:
{references}
Current answer: {answer}
Query:)";

constexpr std::string_view kRelevance =
    R"(Decide whether the document is relevant for answering the question. Entities mentioned in the question: {entities}.
Reply with True or False.

Question: {question}
Document: {document}
Relevant:)";

constexpr std::string_view kKnowledge =
    R"(Write a short factual passage that helps answer the query below. State names, places and relations explicitly.

Query: {question}
Passage:)";

}  // namespace

std::string_view default_prompt_text(std::string_view name) {
  if (name == "answer") return kAnswer;
  if (name == "triple_extract") return kTripleExtract;
  if (name == "query_gen") return kQueryGen;
  if (name == "relevance") return kRelevance;
  if (name == "knowledge") return kKnowledge;
  throw ConfigError("unknown prompt template '" + std::string(name) + "'");
}

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.answer = PromptTemplate(std::string(kAnswer));
  p.triple_extract = PromptTemplate(std::string(kTripleExtract));
  p.query_gen = PromptTemplate(std::string(kQueryGen));
  p.relevance = PromptTemplate(std::string(kRelevance));
  p.knowledge = PromptTemplate(std::string(kKnowledge));
  return p;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("prompt directory not found: " + dir.string());
  }
  PromptSet p = defaults();
  PromptTemplate* slots[] = {&p.answer, &p.triple_extract, &p.query_gen, &p.relevance,
                             &p.knowledge};
  for (size_t i = 0; i < std::size(kPromptNames); ++i) {
    const auto path = dir / (std::string(kPromptNames[i]) + ".txt");
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    // Editors like to add a final newline.
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    try {
      *slots[i] = PromptTemplate(std::move(text));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return p;
}

}  // namespace know3
