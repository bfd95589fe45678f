#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "know3/kg_store.hpp"

namespace know3 {

// ComplEx embeddings: every entity and relation owns a complex vector of
// `dim` components, stored as separate real and imaginary tables.
//
// Values are kept in double precision but trained models are rounded to
// float32 on completion, so a checkpoint round trip is bit-exact.
class ComplExModel {
 public:
  ComplExModel() = default;
  // Zero-initialized tables.
  ComplExModel(size_t num_entities, size_t num_relations, size_t dim,
               std::uint64_t seed = 0);

  // Entries drawn from uniform(-0.5/sqrt(dim), 0.5/sqrt(dim)).
  static ComplExModel random(size_t num_entities, size_t num_relations, size_t dim,
                             std::uint64_t seed);

  size_t dim() const { return dim_; }
  size_t num_entities() const { return num_entities_; }
  size_t num_relations() const { return num_relations_; }
  std::uint64_t seed() const { return seed_; }

  std::span<double> entity_re(EntityId e) { return row(ent_re_, e, num_entities_); }
  std::span<double> entity_im(EntityId e) { return row(ent_im_, e, num_entities_); }
  std::span<double> relation_re(RelationId r) { return row(rel_re_, r, num_relations_); }
  std::span<double> relation_im(RelationId r) { return row(rel_im_, r, num_relations_); }
  std::span<const double> entity_re(EntityId e) const { return row(ent_re_, e, num_entities_); }
  std::span<const double> entity_im(EntityId e) const { return row(ent_im_, e, num_entities_); }
  std::span<const double> relation_re(RelationId r) const { return row(rel_re_, r, num_relations_); }
  std::span<const double> relation_im(RelationId r) const { return row(rel_im_, r, num_relations_); }

  // Whole tables, row-major.
  std::span<double> entity_re_table() { return ent_re_; }
  std::span<double> entity_im_table() { return ent_im_; }
  std::span<double> relation_re_table() { return rel_re_; }
  std::span<double> relation_im_table() { return rel_im_; }
  std::span<const double> entity_re_table() const { return ent_re_; }
  std::span<const double> entity_im_table() const { return ent_im_; }
  std::span<const double> relation_re_table() const { return rel_re_; }
  std::span<const double> relation_im_table() const { return rel_im_; }

  // Re(sum_k h_k * r_k * conj(t_k)). Throws std::out_of_range on bad ids.
  double score(EntityId head, RelationId relation, EntityId tail) const;
  double score(const Triple& t) const { return score(t.head, t.relation, t.tail); }

  bool all_finite() const;
  void round_to_float();
  void set_zero();

  friend bool operator==(const ComplExModel&, const ComplExModel&) = default;

 private:
  template <typename Vec>
  auto row(Vec& table, size_t i, size_t rows) const
      -> std::span<std::remove_reference_t<decltype(table[0])>> {
    if (i >= rows) throw std::out_of_range("embedding row " + std::to_string(i));
    return {table.data() + i * dim_, dim_};
  }

  size_t num_entities_ = 0;
  size_t num_relations_ = 0;
  size_t dim_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> ent_re_, ent_im_, rel_re_, rel_im_;
};

struct TrainConfig {
  size_t dim = 100;
  double learning_rate = 0.05;
  size_t epochs = 200;
  size_t negatives_per_positive = 5;
  double l2_weight = 1e-3;
  size_t batch_size = 16;
  std::uint64_t seed = 0;

  // Throws ConfigError unless every field is positive.
  void validate() const;
};

// A labelled example: +1 for observed triples, -1 for corruptions.
struct TrainingSample {
  Triple triple;
  double label = 1.0;
};

// Sum over the batch of softplus(-label * score) plus
// l2_weight * (|e_h|^2 + |w_r|^2 + |e_t|^2). When `grad` is non-null it must
// have the model's shape; the gradient is added into it.
double batch_loss(const ComplExModel& model, std::span<const TrainingSample> batch,
                  double l2_weight, ComplExModel* grad = nullptr);

struct TrainResult {
  ComplExModel model;
  // Mean per-sample loss of each epoch, accumulated during the pass.
  std::vector<double> epoch_losses;
};

// Mini-batch SGD with AdaGrad step scaling and uniform negative sampling
// (head or tail corrupted with probability 0.5). Single-threaded and
// reproducible given cfg.seed.
// Throws ConfigError on an empty training set or invalid config.
TrainResult train(std::span<const Triple> triples, size_t num_entities,
                  size_t num_relations, const TrainConfig& cfg);
TrainResult train(const KnowledgeGraph& kg, const TrainConfig& cfg);

// Mean reciprocal rank of the true tail among all entities, skipping other
// tails known to be true for the same (head, relation). Ties count against
// the true tail.
double filtered_mrr(const ComplExModel& model, std::span<const Triple> test,
                    const std::set<Triple>& known);

// Argmax of score(head, relation, t) over candidates, ties to the lower id.
// Throws std::invalid_argument on an empty candidate list.
EntityId predict_tail(const ComplExModel& model, EntityId head, RelationId relation,
                      std::span<const EntityId> candidates);
EntityId predict_tail(const ComplExModel& model, EntityId head, RelationId relation);

// Upper bound on same-head reference triples, taken in (relation, tail) order.
inline constexpr size_t kMaxReferenceTriples = 64;

struct RelativeScore {
  double kge_score = 0.0;
  double reference_mean = 0.0;
  double relative = 0.0;
  size_t reference_count = 0;
};

// |score(tri) - mean score of the head's KG triples|. nullopt when the head
// has no outgoing triples (unverifiable).
std::optional<RelativeScore> relative_triple_score(const ComplExModel& model,
                                                   const KnowledgeGraph& kg,
                                                   const Triple& tri);

struct Reliability {
  double score = 0.0;
  size_t verified = 0;
  size_t unverifiable = 0;
  // Parallel to the input; nullopt marks an unverifiable triple.
  std::vector<std::optional<RelativeScore>> per_triple;

  bool has_evidence() const { return verified > 0; }
};

// Sum of relative scores over verifiable triples. nullopt entries are
// unmapped triples and count as unverifiable. The sum is taken over sorted
// terms so the result does not depend on input order.
Reliability answer_reliability(const ComplExModel& model, const KnowledgeGraph& kg,
                               std::span<const std::optional<Triple>> triples);

// Binary checkpoint: "K3CX" magic, version, dims, seed, then the four tables
// as little-endian float32, row-major. When `kg` is given the vocabulary is
// written next to the checkpoint as <path>.entities.tsv / <path>.relations.tsv.
void save_checkpoint(const ComplExModel& model, const std::filesystem::path& path,
                     const KnowledgeGraph* kg = nullptr);

// Throws ConfigError if the file is missing and DataError if it is malformed
// or, when `kg` is given, its shape or vocabulary disagrees with the graph.
ComplExModel load_checkpoint(const std::filesystem::path& path,
                             const KnowledgeGraph* kg = nullptr);

}  // namespace know3
