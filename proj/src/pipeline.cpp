#include "know3/pipeline.hpp"

#include <algorithm>
#include <set>

namespace know3 {

using ojson = nlohmann::ordered_json;

std::string_view to_string(QueryVariant v) { return v == QueryVariant::plain ? "plain" : "kg"; }

ojson ReferenceDoc::to_json() const {
  ojson j;
  j["source_model"] = source_model;
  j["query_variant"] = to_string(variant);
  j["relevance"] = relevance;
  if (factual_score) {
    j["factual_score"] = *factual_score;
  } else {
    j["factual_score"] = "unverifiable";
  }
  j["turn_added"] = turn_added;
  j["text"] = text;
  return j;
}

ojson ScoredTriple::to_json(const KnowledgeGraph& kg) const {
  ojson j;
  j["head"] = text.head;
  j["relation"] = text.relation;
  j["tail"] = text.tail;
  if (mapped) {
    j["mapped"] = {kg.entity_label(mapped->head), kg.relation_label(mapped->relation),
                   kg.entity_label(mapped->tail)};
  } else {
    j["mapped"] = nullptr;
  }
  if (score) {
    j["kge_score"] = score->kge_score;
    j["reference_mean"] = score->reference_mean;
    j["relative"] = score->relative;
    j["reference_count"] = score->reference_count;
  } else {
    j["relative"] = "unverifiable";
  }
  return j;
}

namespace {

ojson labels(const KnowledgeGraph& kg, const std::vector<EntityId>& ids) {
  ojson out = ojson::array();
  for (EntityId e : ids) out.push_back(kg.entity_label(e));
  return out;
}

}  // namespace

ojson IterationState::to_json(const KnowledgeGraph& kg) const {
  ojson j;
  j["t"] = t;
  j["q_t"] = q_t;
  j["q_t_kg"] = q_t_kg;
  j["entities"] = {{"query_linked", labels(kg, entities.query_linked)},
                   {"local_neighbors", labels(kg, entities.local_neighbors)},
                   {"global_predicted", labels(kg, entities.global_predicted)}};
  j["candidates"] = ojson::array();
  for (const auto& d : candidates) j["candidates"].push_back(d.to_json());
  j["added"] = added;
  j["accepted_refs"] = ojson::array();
  for (const auto& d : accepted_refs) j["accepted_refs"].push_back(d.to_json());
  j["answer"] = answer;
  j["triples"] = ojson::array();
  for (const auto& tr : triples) j["triples"].push_back(tr.to_json(kg));
  j["s_t"] = s_t;
  j["verified"] = verified;
  j["unverifiable"] = unverifiable;
  j["theta_t"] = theta_t;
  j["stop"] = stop;
  j["reason"] = to_string(reason);
  return j;
}

ojson AnswerRecord::to_json(const KnowledgeGraph& kg) const {
  ojson j;
  j["id"] = id;
  j["question"] = question;
  j["final_answer"] = final_answer;
  j["stop_reason"] = stop_reason ? ojson(to_string(*stop_reason)) : ojson(nullptr);
  j["final_turn"] = final_turn();
  j["config"] = config;
  j["trace"] = ojson::array();
  for (const auto& s : trace) j["trace"].push_back(s.to_json(kg));
  return j;
}

void PipelineConfig::validate() const {
  if (k < 0) throw ConfigError("pipeline.k must be >= 0");
  if (augment.topk_relations < 1) throw ConfigError("augment.topk_relations must be >= 1");
  if (!(relation_match_threshold >= -1.0 && relation_match_threshold <= 1.0)) {
    throw ConfigError("pipeline.relation_match_threshold must be in [-1, 1]");
  }
  schedule.validate();
}

size_t PipelineConfig::budget(int t) const {
  const int b = budget_mode == BudgetMode::k_plus_t ? k + t : k;
  return static_cast<size_t>(std::max(0, b));
}

std::vector<ScoredTriple> score_triples(std::span<const TextTriple> triples,
                                        const PipelineContext& ctx, double relation_threshold) {
  std::vector<ScoredTriple> out;
  out.reserve(triples.size());
  for (const TextTriple& t : triples) {
    ScoredTriple s{t, map_triple(ctx.kg, &ctx.sim, t.head, t.relation, t.tail, relation_threshold),
                   std::nullopt};
    if (s.mapped) s.score = relative_triple_score(ctx.model, ctx.kg, *s.mapped);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ReferenceDoc> generate_candidates(Gateway& gateway, const std::string& q_t,
                                              const std::string& q_t_kg, int turn) {
  const auto& models = gateway.knowledge_models();
  if (models.empty()) throw ConfigError("no knowledge models registered");
  std::vector<Gateway::ReferenceJob> jobs;
  std::vector<QueryVariant> variants;
  for (QueryVariant v : {QueryVariant::plain, QueryVariant::kg}) {
    const std::string& q = v == QueryVariant::plain ? q_t : q_t_kg;
    for (const auto& m : models) {
      if (v == QueryVariant::kg && q_t_kg == q_t) continue;
      jobs.push_back({m, q});
      variants.push_back(v);
    }
  }
  auto docs = gateway.generate_references(jobs, turn);
  std::vector<ReferenceDoc> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (size_t i = 0; i < jobs.size(); ++i) {
    if (!docs[i]) continue;
    if (!seen.emplace(jobs[i].model, *docs[i]).second) continue;
    ReferenceDoc d;
    d.text = *docs[i];
    d.source_model = jobs[i].model;
    d.variant = variants[i];
    d.turn_added = turn;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<ReferenceDoc> rank_references(std::span<const ReferenceDoc> scored, size_t budget) {
  std::vector<ReferenceDoc> out;
  for (const auto& d : scored) {
    if (d.relevance) out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), [](const ReferenceDoc& a, const ReferenceDoc& b) {
    if (a.factual_score.has_value() != b.factual_score.has_value()) {
      return a.factual_score.has_value();
    }
    return a.factual_score && *a.factual_score < *b.factual_score;
  });
  if (out.size() > budget) out.resize(budget);
  return out;
}

std::vector<ReferenceDoc> filter_references(std::vector<ReferenceDoc>& candidates,
                                            const std::string& question,
                                            std::span<const std::string> question_entities,
                                            const PipelineContext& ctx, size_t budget, int turn,
                                            double relation_threshold) {
  if (budget == 0) return {};
  for (ReferenceDoc& d : candidates) {
    d.relevance = ctx.gateway.relevance_check(d.text, question, question_entities, turn);
    if (!d.relevance) continue;
    const auto extracted = ctx.gateway.extract_triples(question, d.text, turn);
    const auto scored = score_triples(extracted, ctx, relation_threshold);
    double sum = 0.0;
    size_t n = 0;
    for (const auto& s : scored) {
      if (!s.score) continue;
      sum += s.score->relative;
      ++n;
    }
    if (n > 0) d.factual_score = sum / static_cast<double>(n);
  }
  return rank_references(candidates, budget);
}

namespace {

std::vector<std::string> texts(const std::vector<ReferenceDoc>& refs) {
  std::vector<std::string> out;
  out.reserve(refs.size());
  for (const auto& d : refs) out.push_back(d.text);
  return out;
}

}  // namespace

AnswerRecord run_pipeline(const std::string& question, const PipelineContext& ctx,
                          const PipelineConfig& cfg, const std::string& id,
                          const nlohmann::ordered_json& config_echo) {
  cfg.validate();
  AnswerRecord record;
  record.id = id;
  record.question = question;
  record.config = config_echo;

  std::vector<std::string> question_entities;
  for (EntityId e : ctx.linker.link(question)) question_entities.push_back(ctx.kg.entity_label(e));

  std::vector<ReferenceDoc> refs;
  IterationState next;  // retrieval results for the upcoming turn
  try {
    for (int t = 0;; ++t) {
      IterationState state = std::move(next);
      next = {};
      state.t = t;
      state.accepted_refs = refs;
      const auto ref_texts = texts(refs);

      state.answer = ctx.gateway.generate_answer(question, ref_texts, t);
      const auto extracted = ctx.gateway.extract_triples(question, state.answer, t);
      state.triples = score_triples(extracted, ctx, cfg.relation_match_threshold);

      std::vector<std::optional<Triple>> mapped;
      for (const auto& s : state.triples) mapped.push_back(s.mapped);
      const Reliability rel = answer_reliability(ctx.model, ctx.kg, mapped);
      state.verified = rel.verified;
      state.unverifiable = rel.unverifiable;

      const StopDecision d = decide(cfg.schedule, t, rel);
      state.s_t = d.s_t;
      state.theta_t = d.theta_t;
      state.stop = d.stop;
      state.reason = d.reason;
      record.final_answer = state.answer;
      record.trace.push_back(std::move(state));
      if (d.stop) {
        record.stop_reason = d.reason;
        break;
      }

      const int nt = t + 1;
      next.q_t = ctx.gateway.regenerate_query(question, ref_texts, record.final_answer, nt);
      next.entities = related_entities(next.q_t, ctx.kg, ctx.model, ctx.sim, ctx.linker, cfg.augment);
      next.q_t_kg = augment_query(next.q_t, next.entities, ctx.kg);
      next.candidates = generate_candidates(ctx.gateway, next.q_t, next.q_t_kg, nt);
      auto kept = filter_references(next.candidates, question, question_entities, ctx,
                                    cfg.budget(nt), nt, cfg.relation_match_threshold);
      for (auto& doc : kept) {
        const bool dup = std::any_of(refs.begin(), refs.end(), [&](const ReferenceDoc& r) {
          return r.source_model == doc.source_model && r.text == doc.text;
        });
        if (dup) continue;
        doc.turn_added = nt;
        refs.push_back(std::move(doc));
        ++next.added;
      }
    }
  } catch (const BackendError& e) {
    throw PipelineError(e, std::move(record));
  }
  return record;
}

}  // namespace know3
