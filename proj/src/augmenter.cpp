#include "know3/augmenter.hpp"

#include <algorithm>
#include <unordered_set>

namespace know3 {

std::vector<EntityId> RelatedEntities::all() const {
  std::vector<EntityId> out;
  std::unordered_set<EntityId> seen;
  for (const auto* list : {&query_linked, &local_neighbors, &global_predicted}) {
    for (EntityId e : *list) {
      if (seen.insert(e).second) out.push_back(e);
    }
  }
  return out;
}

namespace {

struct RankedRelation {
  RelationId relation;
  double sim;
};

// Distinct relations leaving `e`, most similar first, ties to the lower id.
std::vector<RankedRelation> rank_relations(EntityId e, std::string_view query,
                                           const KnowledgeGraph& kg,
                                           const SimilarityProvider& sim) {
  std::vector<RankedRelation> ranked;
  const std::string& label = kg.entity_label(e);
  for (const Edge& edge : kg.neighbors(e)) {
    if (!ranked.empty() && ranked.back().relation == edge.relation) continue;
    const std::string text = label + " " + kg.relation_label(edge.relation);
    ranked.push_back({edge.relation, sim.sim(text, query)});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedRelation& a, const RankedRelation& b) { return a.sim > b.sim; });
  return ranked;
}

}  // namespace

RelatedEntities related_entities(std::string_view query, const KnowledgeGraph& kg,
                                 const ComplExModel& model, const SimilarityProvider& sim,
                                 const EntityLinker& linker, const AugmentConfig& cfg) {
  RelatedEntities out;
  out.query_linked = linker.link(query);
  if (kg.num_entities() == 0) return out;

  std::unordered_set<EntityId> local_seen, global_seen;
  for (EntityId e : out.query_linked) {
    const auto ranked = rank_relations(e, query, kg, sim);
    if (ranked.empty()) continue;

    const auto tails = kg.tails(e, ranked.front().relation);
    const size_t n_local = std::min(tails.size(), cfg.max_tails_per_entity);
    for (size_t i = 0; i < n_local; ++i) {
      if (local_seen.insert(tails[i]).second) out.local_neighbors.push_back(tails[i]);
    }

    const size_t k = std::min(ranked.size(), cfg.topk_relations);
    if (k == 0) continue;
    EntityId best_tail = 0;
    double best_score = 0.0;
    bool have = false;
    for (size_t i = 0; i < k; ++i) {
      const RelationId r = ranked[i].relation;
      const EntityId t = predict_tail(model, e, r);
      const double s = model.score(e, r, t);
      if (!have || s > best_score) {
        best_tail = t;
        best_score = s;
        have = true;
      }
    }
    if (global_seen.insert(best_tail).second) out.global_predicted.push_back(best_tail);
  }
  return out;
}

std::string augment_query(std::string_view query, const RelatedEntities& ents,
                          const KnowledgeGraph& kg) {
  const auto ids = ents.all();
  if (ids.empty()) return std::string(query);
  std::string out = "Related entities: ";
  std::unordered_set<std::string> labels;
  bool first = true;
  for (EntityId e : ids) {
    const std::string& label = kg.entity_label(e);
    if (!labels.insert(label).second) continue;
    if (!first) out += "; ";
    out += label;
    first = false;
  }
  out += '\n';
  out.append(query);
  return out;
}

}  // namespace know3
