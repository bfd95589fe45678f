#include "know3/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "know3/text.hpp"

namespace know3 {

LexicalSimilarity::LexicalSimilarity(std::span<const std::string> corpus)
    : num_docs_(corpus.size()) {
  for (const std::string& doc : corpus) {
    auto grams = trigrams(doc);
    std::set<std::string> unique(grams.begin(), grams.end());
    for (const auto& g : unique) ++doc_freq_[g];
  }
}

std::vector<std::string> LexicalSimilarity::trigrams(std::string_view text) {
  std::string norm = collapse_whitespace(fold_case(text));
  if (norm.empty()) return {};
  std::string padded = " " + norm + " ";
  std::vector<std::string> out;
  out.reserve(padded.size());
  for (size_t i = 0; i + 3 <= padded.size(); ++i) out.push_back(padded.substr(i, 3));
  return out;
}

double LexicalSimilarity::idf(const std::string& gram) const {
  auto it = doc_freq_.find(gram);
  double df = it == doc_freq_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((1.0 + static_cast<double>(num_docs_)) / (1.0 + df)) + 1.0;
}

LexicalSimilarity::Vector LexicalSimilarity::vectorize(std::string_view text) const {
  Vector v;
  for (auto& g : trigrams(text)) v[g] += 1.0;
  for (auto& [g, w] : v) w *= idf(g);
  return v;
}

double LexicalSimilarity::sim(std::string_view a, std::string_view b) const {
  Vector va = vectorize(a);
  Vector vb = vectorize(b);
  if (va.empty() || vb.empty()) return 0.0;
  if (collapse_whitespace(fold_case(a)) == collapse_whitespace(fold_case(b))) return 1.0;

  // Accumulate in key order so the result does not depend on which argument
  // comes first.
  std::vector<std::string> keys;
  for (const auto& [g, w] : va) {
    if (vb.count(g)) keys.push_back(g);
  }
  std::sort(keys.begin(), keys.end());
  double dot = 0.0;
  for (const auto& g : keys) dot += va[g] * vb[g];

  auto norm = [](const Vector& v) {
    std::vector<double> sq;
    sq.reserve(v.size());
    for (const auto& [g, w] : v) sq.push_back(w * w);
    std::sort(sq.begin(), sq.end());
    double s = 0.0;
    for (double x : sq) s += x;
    return std::sqrt(s);
  };
  double cos = dot / (norm(va) * norm(vb));
  return std::clamp(cos, -1.0, 1.0);
}

}  // namespace know3
