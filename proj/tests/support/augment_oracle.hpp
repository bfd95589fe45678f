#pragma once

// Exhaustive reimplementation of related entity search, working from the raw
// triple list rather than the adjacency index.

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "know3/augmenter.hpp"

namespace testing {

inline know3::RelatedEntities brute_force_related(const std::string& query,
                                                  const know3::KnowledgeGraph& kg,
                                                  const know3::ComplExModel& model,
                                                  const know3::SimilarityProvider& sim,
                                                  const std::vector<know3::EntityId>& linked,
                                                  size_t topk, size_t max_tails) {
  using namespace know3;
  RelatedEntities out;
  out.query_linked = linked;
  for (EntityId e : linked) {
    std::map<RelationId, std::vector<EntityId>> by_rel;
    for (const Triple& t : kg.triples()) {
      if (t.head == e) by_rel[t.relation].push_back(t.tail);
    }
    if (by_rel.empty()) continue;

    std::vector<std::pair<double, RelationId>> sims;
    for (const auto& [r, tails] : by_rel) {
      sims.emplace_back(sim.sim(kg.entity_label(e) + " " + kg.relation_label(r), query), r);
    }
    // Order by similarity descending, then relation id ascending.
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });

    auto tails = by_rel[sims.front().second];
    std::sort(tails.begin(), tails.end());
    for (size_t i = 0; i < tails.size() && i < max_tails; ++i) {
      if (std::find(out.local_neighbors.begin(), out.local_neighbors.end(), tails[i]) ==
          out.local_neighbors.end()) {
        out.local_neighbors.push_back(tails[i]);
      }
    }

    bool have = false;
    double best = 0;
    EntityId best_t = 0;
    for (size_t i = 0; i < sims.size() && i < topk; ++i) {
      for (EntityId t = 0; t < kg.num_entities(); ++t) {
        const double s = model.score(e, sims[i].second, t);
        if (!have || s > best) {
          have = true;
          best = s;
          best_t = t;
        }
      }
    }
    if (std::find(out.global_predicted.begin(), out.global_predicted.end(), best_t) ==
        out.global_predicted.end()) {
      out.global_predicted.push_back(best_t);
    }
  }
  return out;
}

}  // namespace testing


namespace testing {

struct ToyScenario {
  know3::KnowledgeGraph kg;
  know3::ComplExModel model;
  std::string query;
};

// Random graph of at most 30 entities with a random model and a query that
// mentions a few entities and relation words.
inline ToyScenario make_toy_scenario(uint64_t seed) {
  static const char* kRelations[] = {"born in",   "member of", "located in", "capital of",
                                     "spouse of", "student of", "author of", "part of"};
  static const char* kFiller[] = {"who", "was", "the", "teacher", "of", "where", "what",
                                  "nationality", "city", "born", "wrote", "and"};
  std::mt19937_64 rng(seed);
  auto pick = [&](size_t n) { return std::uniform_int_distribution<size_t>(0, n - 1)(rng); };

  const size_t n_ent = 3 + pick(28);
  const size_t n_rel = 1 + pick(8);
  know3::KnowledgeGraph::Builder b;
  for (size_t i = 0; i < n_ent; ++i) b.add_entity("ent" + std::to_string(i));
  const size_t n_triples = pick(3 * n_ent + 1);
  for (size_t i = 0; i < n_triples; ++i) {
    b.add_triple("ent" + std::to_string(pick(n_ent)), kRelations[pick(n_rel)],
                 "ent" + std::to_string(pick(n_ent)));
  }
  ToyScenario s{std::move(b).build(), {}, {}};
  s.model = know3::ComplExModel::random(s.kg.num_entities(), std::max<size_t>(1, s.kg.num_relations()),
                                        4, seed + 1);
  const size_t n_words = 2 + pick(8);
  for (size_t i = 0; i < n_words; ++i) {
    if (!s.query.empty()) s.query += ' ';
    switch (pick(3)) {
      case 0: s.query += "ent" + std::to_string(pick(n_ent)); break;
      case 1: s.query += kRelations[pick(8)]; break;
      default: s.query += kFiller[pick(12)]; break;
    }
  }
  return s;
}

}  // namespace testing
