#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "know3/augmenter.hpp"
#include "know3/controller.hpp"
#include "know3/errors.hpp"
#include "know3/kg_store.hpp"
#include "know3/kge.hpp"
#include "know3/llm_gateway.hpp"
#include "know3/similarity.hpp"

namespace know3 {

enum class QueryVariant { plain, kg };
std::string_view to_string(QueryVariant v);

struct ReferenceDoc {
  std::string text;
  std::string source_model;
  QueryVariant variant = QueryVariant::plain;
  bool relevance = false;
  // Mean relative score of the document's verifiable triples; nullopt when
  // none could be verified (or the document was never scored).
  std::optional<double> factual_score;
  int turn_added = 0;

  nlohmann::ordered_json to_json() const;
};

struct ScoredTriple {
  TextTriple text;
  std::optional<Triple> mapped;
  std::optional<RelativeScore> score;  // nullopt: unverifiable

  nlohmann::ordered_json to_json(const KnowledgeGraph& kg) const;
};

struct IterationState {
  int t = 0;
  // Query that produced the references added at this turn (empty at t = 0)
  // and its entity-augmented form.
  std::string q_t;
  std::string q_t_kg;
  RelatedEntities entities;
  std::vector<ReferenceDoc> candidates;
  size_t added = 0;
  // References the answer was generated from, oldest first.
  std::vector<ReferenceDoc> accepted_refs;

  std::string answer;
  std::vector<ScoredTriple> triples;
  double s_t = 0.0;
  size_t verified = 0;
  size_t unverifiable = 0;
  double theta_t = 0.0;
  bool stop = false;
  StopReason reason = StopReason::max_turns;

  nlohmann::ordered_json to_json(const KnowledgeGraph& kg) const;
};

struct AnswerRecord {
  std::string id;
  std::string question;
  std::string final_answer;
  std::optional<StopReason> stop_reason;  // unset only in partial records
  std::vector<IterationState> trace;
  nlohmann::ordered_json config;

  int final_turn() const { return trace.empty() ? -1 : trace.back().t; }
  nlohmann::ordered_json to_json(const KnowledgeGraph& kg) const;
};

// Carries the trace up to the failing call.
class PipelineError : public BackendError {
 public:
  PipelineError(const BackendError& cause, AnswerRecord partial)
      : BackendError(cause.role(), cause.what()), partial_(std::move(partial)) {}
  const AnswerRecord& partial() const { return partial_; }

 private:
  AnswerRecord partial_;
};

enum class BudgetMode { k_plus_t, k };

struct PipelineConfig {
  int k = 5;
  BudgetMode budget_mode = BudgetMode::k_plus_t;
  ThresholdSchedule schedule;
  AugmentConfig augment;
  double relation_match_threshold = kRelationMatchThreshold;

  // Throws ConfigError.
  void validate() const;
  // Per-turn selection cap for references added at turn t.
  size_t budget(int t) const;
};

struct PipelineContext {
  const KnowledgeGraph& kg;
  const ComplExModel& model;
  const SimilarityProvider& sim;
  const EntityLinker& linker;
  Gateway& gateway;
};

// Relative scores of free-text triples against the graph.
std::vector<ScoredTriple> score_triples(std::span<const TextTriple> triples,
                                        const PipelineContext& ctx, double relation_threshold);

// One document per (knowledge model, query variant) that succeeded, plain
// variants first. Identical (model, query) requests are sent once and
// identical (model, text) documents are kept once.
std::vector<ReferenceDoc> generate_candidates(Gateway& gateway, const std::string& q_t,
                                              const std::string& q_t_kg, int turn);

// Stable ascending sort by factual score with unscored documents last, then
// the first `budget`. Irrelevant documents are dropped.
std::vector<ReferenceDoc> rank_references(std::span<const ReferenceDoc> scored, size_t budget);

// Relevance check, triple scoring and ranking. `candidates` get their
// relevance and factual_score filled in.
std::vector<ReferenceDoc> filter_references(std::vector<ReferenceDoc>& candidates,
                                            const std::string& question,
                                            std::span<const std::string> question_entities,
                                            const PipelineContext& ctx, size_t budget, int turn,
                                            double relation_threshold = kRelationMatchThreshold);

// Runs the answer/verify/retrieve loop for one question. Throws
// PipelineError when a required role fails.
AnswerRecord run_pipeline(const std::string& question, const PipelineContext& ctx,
                          const PipelineConfig& cfg, const std::string& id = {},
                          const nlohmann::ordered_json& config_echo = {});

}  // namespace know3
