#include <doctest.h>

#include <set>

#include "know3/augmenter.hpp"
#include "support/augment_oracle.hpp"

using namespace know3;

namespace {

std::vector<std::string> vocabulary(const KnowledgeGraph& kg) {
  std::vector<std::string> out;
  for (EntityId e = 0; e < kg.num_entities(); ++e) out.push_back(kg.entity_label(e));
  for (RelationId r = 0; r < kg.num_relations(); ++r) out.push_back(kg.relation_label(r));
  return out;
}

// Fixed similarity table keyed on the relation string.
class TableSimilarity : public SimilarityProvider {
 public:
  explicit TableSimilarity(std::map<std::string, double> table) : table_(std::move(table)) {}
  std::string name() const override { return "table"; }
  double sim(std::string_view a, std::string_view) const override {
    auto it = table_.find(std::string(a));
    return it == table_.end() ? 0.0 : it->second;
  }

 private:
  std::map<std::string, double> table_;
};

}  // namespace

TEST_CASE("case-study question finds the teacher") {
  auto kg = load_kg(std::string(KNOW3_SOURCE_DIR) + "/data/case_study/kg.tsv",
                    std::string(KNOW3_SOURCE_DIR) + "/data/case_study/aliases.tsv");
  const auto vocab = vocabulary(kg);
  LexicalSimilarity sim(vocab);
  AliasLinker linker(kg);
  auto model = ComplExModel::random(kg.num_entities(), kg.num_relations(), 8, 3);

  const std::string q = "Whose teacher was Bernhard Heiden's, and what nationality?";
  auto ents = related_entities(q, kg, model, sim, linker);
  REQUIRE(ents.query_linked.size() == 1);
  CHECK(kg.entity_label(ents.query_linked[0]) == "Bernhard Heiden");
  REQUIRE(ents.local_neighbors.size() == 1);
  CHECK(kg.entity_label(ents.local_neighbors[0]) == "Paul Hindemith");
  CHECK(ents.global_predicted.size() == 1);
}

TEST_CASE("no linkable entity gives empty sets") {
  auto kg = parse_kg("a\tr\tb\n");
  LexicalSimilarity sim;
  AliasLinker linker(kg);
  auto model = ComplExModel::random(2, 1, 4, 0);
  auto ents = related_entities("nothing here", kg, model, sim, linker);
  CHECK(ents.empty());
  CHECK(ents.all().empty());
}

TEST_CASE("entity without outgoing triples contributes only itself") {
  auto kg = parse_kg("a\tr\tb\n");
  LexicalSimilarity sim;
  AliasLinker linker(kg);
  auto model = ComplExModel::random(2, 1, 4, 0);
  auto ents = related_entities("tell me about b", kg, model, sim, linker);
  CHECK(ents.query_linked == std::vector<EntityId>{1});
  CHECK(ents.local_neighbors.empty());
  CHECK(ents.global_predicted.empty());
}

TEST_CASE("top-1 relation decides the global prediction") {
  // e has relations r1 and r2; similarity ranks r2 first.
  auto kg = parse_kg("e\tr1\tx\ne\tr2\ty\nz\tr1\tx\n");
  TableSimilarity sim({{"e r1", 0.1}, {"e r2", 0.9}});
  AliasLinker linker(kg);
  auto model = ComplExModel::random(kg.num_entities(), kg.num_relations(), 4, 11);
  const EntityId e = *kg.find_entity("e");
  const RelationId r2 = *kg.find_relation("r2");

  AugmentConfig cfg;
  cfg.topk_relations = 1;
  auto ents = related_entities("e", kg, model, sim, linker, cfg);
  CHECK(ents.local_neighbors == std::vector<EntityId>{*kg.find_entity("y")});

  // Brute force over every tail for r2.
  EntityId best = 0;
  for (EntityId t = 1; t < kg.num_entities(); ++t) {
    if (model.score(e, r2, t) > model.score(e, r2, best)) best = t;
  }
  CHECK(ents.global_predicted == std::vector<EntityId>{best});
}

TEST_CASE("local neighbors are capped and ordered by tail id") {
  auto kg = parse_kg("e\tr\td\ne\tr\tc\ne\tr\tb\ne\tr\ta\n");
  LexicalSimilarity sim;
  AliasLinker linker(kg);
  auto model = ComplExModel::random(kg.num_entities(), 1, 4, 2);
  auto ents = related_entities("e", kg, model, sim, linker);
  auto tails = kg.tails(0, 0);
  CHECK(ents.local_neighbors == std::vector<EntityId>(tails.begin(), tails.begin() + 3));
  AugmentConfig cfg;
  cfg.max_tails_per_entity = 10;
  CHECK(related_entities("e", kg, model, sim, linker, cfg).local_neighbors.size() == 4);
}

TEST_CASE("relation similarity ties go to the lower relation id") {
  auto kg = parse_kg("e\tq\ta\ne\tp\tb\n");
  TableSimilarity sim({});
  AliasLinker linker(kg);
  auto model = ComplExModel::random(kg.num_entities(), kg.num_relations(), 4, 5);
  auto ents = related_entities("e", kg, model, sim, linker);
  CHECK(ents.local_neighbors == std::vector<EntityId>{*kg.find_entity("a")});
}

TEST_CASE("related_entities matches exhaustive search on random graphs") {
  for (uint64_t seed = 0; seed < 200; ++seed) {
    auto s = testing::make_toy_scenario(seed);
    const auto vocab = vocabulary(s.kg);
    LexicalSimilarity sim(vocab);
    AliasLinker linker(s.kg);
    for (size_t topk : {1u, 2u, 3u, 8u}) {
      AugmentConfig cfg;
      cfg.topk_relations = topk;
      auto got = related_entities(s.query, s.kg, s.model, sim, linker, cfg);
      auto want = testing::brute_force_related(s.query, s.kg, s.model, sim,
                                               link_entities(s.query, s.kg), topk, 3);
      INFO("seed " << seed << " topk " << topk << " query " << s.query);
      CHECK(got.query_linked == want.query_linked);
      CHECK(got.local_neighbors == want.local_neighbors);
      CHECK(got.global_predicted == want.global_predicted);

      // Every local neighbor is one hop from a linked entity.
      for (EntityId n : got.local_neighbors) {
        bool reachable = false;
        for (const Triple& t : s.kg.triples()) {
          for (EntityId e : got.query_linked) reachable |= (t.head == e && t.tail == n);
        }
        CHECK(reachable);
      }
      // Deterministic.
      auto again = related_entities(s.query, s.kg, s.model, sim, linker, cfg);
      CHECK(again.all() == got.all());
    }
  }
}

TEST_CASE("all() keeps first-seen order without duplicates") {
  RelatedEntities ents{{3, 1}, {1, 4}, {4, 3, 9}};
  CHECK(ents.all() == std::vector<EntityId>{3, 1, 4, 9});
}

TEST_CASE("augment_query") {
  auto kg = parse_kg("Bernhard Heiden\tstudent of\tPaul Hindemith\n");
  const std::string q = "Whose teacher was Bernhard Heiden's, and what nationality?";
  RelatedEntities ents{{0}, {1}, {}};
  CHECK(augment_query(q, ents, kg) ==
        "Related entities: Bernhard Heiden; Paul Hindemith\n" + q);
  CHECK(augment_query(q, {}, kg) == q);
  RelatedEntities dup{{0}, {0, 1}, {1}};
  CHECK(augment_query(q, dup, kg) == augment_query(q, ents, kg));
}

TEST_CASE("augment_query is injective in the query for a fixed entity set") {
  auto kg = parse_kg("a\tr\tb\n");
  RelatedEntities ents{{0}, {1}, {}};
  std::set<std::string> seen;
  const std::vector<std::string> queries = {"", "a", "a ", "b", "Related entities: a", "\n", "a\nb"};
  for (const auto& q : queries) CHECK(seen.insert(augment_query(q, ents, kg)).second);
}
