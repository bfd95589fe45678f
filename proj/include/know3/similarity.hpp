#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace know3 {

// Text similarity in [-1, 1]. Implementations must be symmetric, must score
// a string against itself at least as high as against anything else, and
// must be safe for concurrent calls.
class SimilarityProvider {
 public:
  virtual ~SimilarityProvider() = default;
  virtual std::string name() const = 0;
  virtual double sim(std::string_view a, std::string_view b) const = 0;
};

// Character-trigram TF-IDF cosine over case-folded, whitespace-collapsed
// strings. Document frequencies come from the corpus given at construction;
// trigrams outside it get the maximum idf.
class LexicalSimilarity : public SimilarityProvider {
 public:
  LexicalSimilarity() = default;
  explicit LexicalSimilarity(std::span<const std::string> corpus);

  std::string name() const override { return "lexical"; }
  double sim(std::string_view a, std::string_view b) const override;

  static std::vector<std::string> trigrams(std::string_view text);

 private:
  using Vector = std::unordered_map<std::string, double>;
  Vector vectorize(std::string_view text) const;
  double idf(const std::string& gram) const;

  std::unordered_map<std::string, size_t> doc_freq_;
  size_t num_docs_ = 0;
};

}  // namespace know3
