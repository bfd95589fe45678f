#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace know3 {

class SimilarityProvider;

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct Edge {
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Immutable after construction. Safe to share across reader threads.
class KnowledgeGraph {
 public:
  class Builder;

  KnowledgeGraph() = default;

  size_t num_entities() const { return entity_labels_.size(); }
  size_t num_relations() const { return relation_labels_.size(); }
  size_t num_triples() const { return triples_.size(); }

  // Sorted by (head, relation, tail), duplicates removed.
  std::span<const Triple> triples() const { return triples_; }

  const std::string& entity_label(EntityId e) const;
  const std::string& relation_label(RelationId r) const;
  const std::vector<std::string>& entity_aliases(EntityId e) const;

  // Exact case-folded lookup over labels and aliases.
  std::optional<EntityId> find_entity(std::string_view surface) const;
  std::optional<RelationId> find_relation(std::string_view label) const;

  // All (relation, tail) pairs for `head`, ordered by (relation id, tail id).
  // Throws std::out_of_range on an unknown id.
  std::span<const Edge> neighbors(EntityId head) const;

  // Tails for (head, relation), ordered by tail id.
  std::vector<EntityId> tails(EntityId head, RelationId relation) const;

  // Number of triples mentioning the entity as head or tail.
  size_t degree(EntityId e) const;

  bool contains(const Triple& t) const;

  // Surface form (case-folded) -> entity, labels and resolved aliases.
  const std::unordered_map<std::string, EntityId>& surface_forms() const {
    return surfaces_;
  }
  size_t max_surface_length() const { return max_surface_length_; }

  // Writes entities.tsv and relations.tsv (`id<TAB>label`) into `dir`.
  void dump_vocabulary(const std::filesystem::path& dir) const;

 private:
  std::vector<std::string> entity_labels_;
  std::vector<std::vector<std::string>> entity_aliases_;
  std::vector<std::string> relation_labels_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::unordered_map<std::string, EntityId> surfaces_;
  size_t max_surface_length_ = 0;

  std::vector<Triple> triples_;
  // CSR layout: edges of head h live in edges_[offsets_[h], offsets_[h+1]).
  std::vector<size_t> offsets_;
  std::vector<Edge> edges_;
  std::vector<size_t> degree_;
};

// Assembles a graph from labelled triples and aliases. Entity and relation
// ids are assigned in first-seen order.
class KnowledgeGraph::Builder {
 public:
  EntityId add_entity(std::string_view label);
  RelationId add_relation(std::string_view label);
  void add_triple(std::string_view head, std::string_view relation,
                  std::string_view tail);
  // Throws DataError if `canonical` is not a known entity label.
  void add_alias(std::string_view alias, std::string_view canonical);

  KnowledgeGraph build() &&;

 private:
  KnowledgeGraph g_;
  std::vector<std::pair<std::string, EntityId>> aliases_;
};

// Triples: `head<TAB>relation<TAB>tail`. Aliases: `alias<TAB>canonical`.
// Blank lines and lines starting with '#' are skipped. Throws DataError
// (with the line number) on malformed lines and ConfigError on unreadable
// files.
KnowledgeGraph load_kg(const std::filesystem::path& triples_path,
                       const std::optional<std::filesystem::path>& aliases_path = {});

// Same formats, from in-memory text.
KnowledgeGraph parse_kg(std::string_view triples_tsv,
                        std::string_view aliases_tsv = {});

class EntityLinker {
 public:
  virtual ~EntityLinker() = default;
  virtual std::vector<EntityId> link(std::string_view text) const = 0;
};

// Case-folded dictionary matcher over labels and aliases. Matches must sit on
// word boundaries; overlapping candidates are resolved longest-first, then
// leftmost. Output is in span order with duplicates removed.
class AliasLinker : public EntityLinker {
 public:
  explicit AliasLinker(const KnowledgeGraph& kg) : kg_(kg) {}
  std::vector<EntityId> link(std::string_view text) const override;

 private:
  const KnowledgeGraph& kg_;
};

std::vector<EntityId> link_entities(std::string_view text,
                                    const KnowledgeGraph& kg);

inline constexpr double kRelationMatchThreshold = 0.5;

// Maps a free-text triple onto graph ids. Entities resolve through exact
// case-folded label or alias lookup. Relations resolve by exact case-folded
// label, otherwise to the most similar relation label scoring at least
// `threshold` (ties to the lower id). Returns nullopt when any part fails to
// map; such triples are unverifiable.
std::optional<Triple> map_triple(const KnowledgeGraph& kg,
                                 const SimilarityProvider* sim,
                                 std::string_view head, std::string_view relation,
                                 std::string_view tail,
                                 double threshold = kRelationMatchThreshold);

}  // namespace know3
