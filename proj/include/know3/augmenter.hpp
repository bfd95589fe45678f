#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "know3/kg_store.hpp"
#include "know3/kge.hpp"
#include "know3/similarity.hpp"

namespace know3 {

struct AugmentConfig {
  size_t topk_relations = 3;
  size_t max_tails_per_entity = 3;
};

struct RelatedEntities {
  std::vector<EntityId> query_linked;      // linked in the query
  std::vector<EntityId> local_neighbors;   // KG tails along the best relation
  std::vector<EntityId> global_predicted;  // KGE tail predictions

  // Linked, then local, then predicted; first occurrence wins.
  std::vector<EntityId> all() const;
  bool empty() const {
    return query_linked.empty() && local_neighbors.empty() && global_predicted.empty();
  }
};

// Related entity search. For each entity linked in the query:
//  - relations are ranked by sim("<entity label> <relation label>", query),
//    ties to the lower relation id;
//  - the best relation contributes up to max_tails_per_entity KG tails, in
//    tail id order;
//  - among the top-k relations, the (relation, tail) pair with the highest
//    KGE score over the whole vocabulary contributes one predicted entity
//    (ties keep the better ranked relation, then the lower tail id).
// Entities without outgoing triples contribute nothing beyond themselves.
RelatedEntities related_entities(std::string_view query, const KnowledgeGraph& kg,
                                 const ComplExModel& model, const SimilarityProvider& sim,
                                 const EntityLinker& linker, const AugmentConfig& cfg = {});

// "Related entities: <l1>; <l2>; ...\n<query>", or the query unchanged when
// there are no entities. Labels appear once each.
std::string augment_query(std::string_view query, const RelatedEntities& ents,
                          const KnowledgeGraph& kg);

}  // namespace know3
