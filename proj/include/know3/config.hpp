#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "know3/http_backend.hpp"
#include "know3/pipeline.hpp"

namespace know3 {

struct BackendSpec {
  std::string kind = "fixture";  // fixture | http
  std::filesystem::path fixtures;  // fixture only; defaults to gateway.fixtures
  HttpEndpoint http;
};

// Settings for one run. Relative paths resolve against the directory of the
// config file. Unknown keys are rejected.
struct Config {
  std::filesystem::path base_dir = ".";

  // kg
  std::filesystem::path kg_triples;
  std::optional<std::filesystem::path> kg_aliases;

  // kge
  std::optional<std::filesystem::path> kge_checkpoint;
  TrainConfig train;

  // controller
  std::string qa_model;
  std::string dataset;
  std::optional<double> theta0;
  double c = 128.0;
  int max_turns = 2;

  // augment
  AugmentConfig augment;
  std::string similarity = "lexical";  // lexical | external
  std::optional<HttpEndpoint> embedding;

  // gateway
  GatewayOptions gateway;
  std::optional<std::filesystem::path> prompts_dir;
  std::optional<std::filesystem::path> fixtures;
  std::map<std::string, BackendSpec> roles;
  std::vector<std::pair<std::string, BackendSpec>> knowledge_models;

  // pipeline
  int k = 5;
  BudgetMode budget_mode = BudgetMode::k_plus_t;
  double relation_match_threshold = kRelationMatchThreshold;

  // Throws ConfigError on unreadable files, bad JSON, unknown keys or
  // out-of-range values.
  static Config load(const std::filesystem::path& path);
  static Config parse(std::string_view json_text, const std::filesystem::path& base_dir);

  // theta0 from the config, else from the (qa_model, dataset) table.
  // Throws ConfigError when neither resolves.
  ThresholdSchedule schedule() const;
  PipelineConfig pipeline() const;

  // Effective settings, in a fixed key order.
  nlohmann::ordered_json to_json() const;
};

struct RuntimeOptions {
  std::optional<std::filesystem::path> trace_path;
  bool deterministic = false;
};

// Everything a pipeline run needs, built from a Config.
class Runtime {
 public:
  // Loads the graph, loads or trains the embedding model, and binds backends.
  explicit Runtime(const Config& cfg, RuntimeOptions opts = {});

  const KnowledgeGraph& kg() const { return kg_; }
  const ComplExModel& model() const { return model_; }
  const SimilarityProvider& similarity() const { return *sim_; }
  const EntityLinker& linker() const { return *linker_; }
  Gateway& gateway() { return *gateway_; }
  TraceLog& trace() { return *trace_; }
  const PipelineConfig& pipeline_config() const { return pipeline_; }
  PipelineContext context() { return {kg_, model_, *sim_, *linker_, *gateway_}; }

 private:
  KnowledgeGraph kg_;
  ComplExModel model_;
  std::unique_ptr<SimilarityProvider> sim_;
  std::unique_ptr<EntityLinker> linker_;
  std::unique_ptr<TraceLog> trace_;
  std::unique_ptr<Gateway> gateway_;
  PipelineConfig pipeline_;
};

}  // namespace know3
