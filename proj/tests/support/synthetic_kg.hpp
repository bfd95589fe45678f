#pragma once

#include <array>
#include <string>
#include <vector>

#include "know3/kg_store.hpp"

namespace know3::testing {

// Rule KG with r(a, b) and s(b, c) implying t(a, c). Thirty "a" entities
// fall into ten clusters, each cluster sharing one "b" and hence one "c".
// One t-triple per cluster is held out of the training graph.
struct RuleKg {
  KnowledgeGraph graph;       // training triples only
  std::vector<Triple> held_out;
  std::vector<Triple> all_true;  // training + held-out
};

inline RuleKg make_rule_kg() {
  constexpr int kClusters = 10;
  constexpr int kPerCluster = 3;
  KnowledgeGraph::Builder builder;
  auto a = [](int i) { return "a" + std::to_string(i); };
  auto b = [](int j) { return "b" + std::to_string(j); };
  auto c = [](int j) { return "c" + std::to_string(j); };
  for (int i = 0; i < kClusters * kPerCluster; ++i) builder.add_entity(a(i));
  for (int j = 0; j < kClusters; ++j) builder.add_entity(b(j));
  for (int j = 0; j < kClusters; ++j) builder.add_entity(c(j));
  builder.add_relation("r");
  builder.add_relation("s");
  builder.add_relation("t");

  std::vector<std::array<std::string, 3>> held;
  for (int i = 0; i < kClusters * kPerCluster; ++i) {
    builder.add_triple(a(i), "r", b(i % kClusters));
    if (i < kClusters * (kPerCluster - 1)) {
      builder.add_triple(a(i), "t", c(i % kClusters));
    } else {
      held.push_back({a(i), "t", c(i % kClusters)});
    }
  }
  for (int j = 0; j < kClusters; ++j) builder.add_triple(b(j), "s", c(j));

  RuleKg out{std::move(builder).build(), {}, {}};
  for (const auto& h : held) {
    out.held_out.push_back({*out.graph.find_entity(h[0]), *out.graph.find_relation(h[1]),
                            *out.graph.find_entity(h[2])});
  }
  out.all_true.assign(out.graph.triples().begin(), out.graph.triples().end());
  out.all_true.insert(out.all_true.end(), out.held_out.begin(), out.held_out.end());
  return out;
}

}  // namespace know3::testing
