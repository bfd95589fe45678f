#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace know3 {

using SlotValues = std::map<std::string, std::string>;

// Text with `{name}` slots. `{{` and `}}` render as literal braces. Slot
// values are inserted verbatim and never re-expanded.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  // Throws ConfigError on an unterminated or empty slot, or a stray '}'.
  explicit PromptTemplate(std::string text);

  const std::string& text() const { return text_; }
  // Slot names in order of first appearance.
  const std::vector<std::string>& slots() const { return slots_; }

  // Throws ConfigError naming the first slot without a value. Extra values
  // are ignored.
  std::string render(const SlotValues& values) const;

 private:
  struct Piece {
    bool is_slot;
    std::string text;
  };
  std::string text_;
  std::vector<Piece> pieces_;
  std::vector<std::string> slots_;
};

// Template names: answer, triple_extract, query_gen, relevance, knowledge.
struct PromptSet {
  PromptTemplate answer;
  PromptTemplate triple_extract;
  PromptTemplate query_gen;
  PromptTemplate relevance;
  PromptTemplate knowledge;

  static PromptSet defaults();
  // Starts from the defaults and replaces each template for which
  // `<dir>/<name>.txt` exists.
  static PromptSet load(const std::filesystem::path& dir);
};

std::string_view default_prompt_text(std::string_view name);
inline constexpr std::string_view kPromptNames[] = {"answer", "triple_extract", "query_gen",
                                                    "relevance", "knowledge"};

}  // namespace know3
