#include "know3/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace know3 {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + " must be an object");
  }

  bool has(const char* key) const {
    auto it = j_.find(key);
    return it != j_.end() && !it->is_null();
  }

  const json* get(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  template <class T>
  void read(const char* key, T& out) {
    if (const json* v = get(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception&) {
        throw ConfigError(path(key) + " has the wrong type");
      }
    }
  }

  template <class T>
  void read_opt(const char* key, std::optional<T>& out) {
    if (has(key)) {
      T v{};
      read(key, v);
      out = v;
    } else {
      get(key);
    }
  }

  std::string path(const char* key) const { return name_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key " + name_ + "." + it.key());
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

HttpEndpoint read_endpoint(Section& s) {
  HttpEndpoint ep;
  s.read("base_url", ep.base_url);
  s.read("model", ep.model);
  s.read("api_key_env", ep.api_key_env);
  s.read("timeout_s", ep.timeout_s);
  s.read("max_attempts", ep.max_attempts);
  s.read("backoff_ms", ep.backoff_ms);
  if (ep.base_url.empty()) throw ConfigError(s.path("base_url") + " is required");
  if (ep.model.empty()) throw ConfigError(s.path("model") + " is required");
  if (!(ep.timeout_s > 0)) throw ConfigError(s.path("timeout_s") + " must be > 0");
  if (ep.max_attempts < 1) throw ConfigError(s.path("max_attempts") + " must be >= 1");
  if (ep.backoff_ms < 0) throw ConfigError(s.path("backoff_ms") + " must be >= 0");
  return ep;
}

BackendSpec read_backend(const json& j, const std::string& name, const fs::path& base) {
  Section s(j, name);
  BackendSpec b;
  s.read("backend", b.kind);
  if (b.kind == "fixture") {
    std::string f;
    s.read("fixtures", f);
    if (!f.empty()) b.fixtures = resolve(base, f);
  } else if (b.kind == "http") {
    b.http = read_endpoint(s);
  } else {
    throw ConfigError(s.path("backend") + " must be 'fixture' or 'http'");
  }
  s.finish();
  return b;
}

ojson backend_json(const BackendSpec& b) {
  ojson j;
  j["backend"] = b.kind;
  if (b.kind == "fixture") {
    if (!b.fixtures.empty()) j["fixtures"] = b.fixtures.string();
  } else {
    j["base_url"] = b.http.base_url;
    j["model"] = b.http.model;
    j["api_key_env"] = b.http.api_key_env;
    j["timeout_s"] = b.http.timeout_s;
    j["max_attempts"] = b.http.max_attempts;
    j["backoff_ms"] = b.http.backoff_ms;
  }
  return j;
}

}  // namespace

Config Config::parse(std::string_view json_text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Config c;
  c.base_dir = base_dir;
  Section top(root, "config");

  if (const json* j = top.get("kg")) {
    Section s(*j, "kg");
    std::string triples, aliases;
    s.read("triples", triples);
    s.read("aliases", aliases);
    if (!triples.empty()) c.kg_triples = resolve(base_dir, triples);
    if (!aliases.empty()) c.kg_aliases = resolve(base_dir, aliases);
    s.finish();
  }
  if (c.kg_triples.empty()) throw ConfigError("kg.triples is required");

  if (const json* j = top.get("kge")) {
    Section s(*j, "kge");
    std::string ckpt;
    s.read("checkpoint", ckpt);
    if (!ckpt.empty()) c.kge_checkpoint = resolve(base_dir, ckpt);
    s.read("dim", c.train.dim);
    s.read("learning_rate", c.train.learning_rate);
    s.read("epochs", c.train.epochs);
    s.read("negatives", c.train.negatives_per_positive);
    s.read("l2", c.train.l2_weight);
    s.read("batch_size", c.train.batch_size);
    s.read("seed", c.train.seed);
    s.finish();
  }
  c.train.validate();

  if (const json* j = top.get("controller")) {
    Section s(*j, "controller");
    s.read("qa_model", c.qa_model);
    s.read("dataset", c.dataset);
    s.read_opt("theta0", c.theta0);
    s.read("c", c.c);
    s.read("max_turns", c.max_turns);
    s.finish();
  }

  if (const json* j = top.get("augment")) {
    Section s(*j, "augment");
    s.read("topk_relations", c.augment.topk_relations);
    s.read("max_tails_per_entity", c.augment.max_tails_per_entity);
    s.read("similarity", c.similarity);
    if (const json* e = s.get("embedding")) {
      Section es(*e, "augment.embedding");
      c.embedding = read_endpoint(es);
      es.finish();
    }
    s.finish();
  }
  if (c.similarity != "lexical" && c.similarity != "external") {
    throw ConfigError("augment.similarity must be 'lexical' or 'external'");
  }
  if (c.similarity == "external" && !c.embedding) {
    throw ConfigError("augment.similarity = external needs augment.embedding");
  }

  if (const json* j = top.get("gateway")) {
    Section s(*j, "gateway");
    s.read("max_concurrency", c.gateway.max_concurrency);
    s.read("max_tokens", c.gateway.max_tokens);
    std::string prompts, fixtures;
    s.read("prompts_dir", prompts);
    s.read("fixtures", fixtures);
    if (!prompts.empty()) c.prompts_dir = resolve(base_dir, prompts);
    if (!fixtures.empty()) c.fixtures = resolve(base_dir, fixtures);
    if (const json* roles = s.get("roles")) {
      if (!roles->is_object()) throw ConfigError("gateway.roles must be an object");
      for (auto it = roles->begin(); it != roles->end(); ++it) {
        const LlmRole role = LlmRole::parse(it.key());
        if (role.kind == RoleKind::knowledge_model) {
          throw ConfigError("knowledge models go in gateway.knowledge_models");
        }
        c.roles[it.key()] = read_backend(*it, "gateway.roles." + it.key(), base_dir);
      }
    }
    if (const json* models = s.get("knowledge_models")) {
      if (!models->is_array()) throw ConfigError("gateway.knowledge_models must be a list");
      std::set<std::string> names;
      for (size_t i = 0; i < models->size(); ++i) {
        json spec = (*models)[i];
        const std::string where = "gateway.knowledge_models[" + std::to_string(i) + "]";
        if (!spec.is_object() || !spec.contains("name") || !spec["name"].is_string()) {
          throw ConfigError(where + " needs a string 'name'");
        }
        const std::string name = spec["name"];
        spec.erase("name");
        if (name.empty() || !names.insert(name).second) {
          throw ConfigError(where + ": empty or duplicate name '" + name + "'");
        }
        c.knowledge_models.emplace_back(name, read_backend(spec, where, base_dir));
      }
    }
    s.finish();
  }
  if (c.gateway.max_concurrency < 1) throw ConfigError("gateway.max_concurrency must be >= 1");
  if (c.gateway.max_tokens < 1) throw ConfigError("gateway.max_tokens must be >= 1");

  if (const json* j = top.get("pipeline")) {
    Section s(*j, "pipeline");
    s.read("k", c.k);
    std::string budget = "k_plus_t";
    s.read("budget", budget);
    if (budget == "k_plus_t") {
      c.budget_mode = BudgetMode::k_plus_t;
    } else if (budget == "k") {
      c.budget_mode = BudgetMode::k;
    } else {
      throw ConfigError("pipeline.budget must be 'k_plus_t' or 'k'");
    }
    s.read("relation_match_threshold", c.relation_match_threshold);
    s.finish();
  }
  top.finish();
  return c;
}

Config Config::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  fs::path base = path.parent_path();
  if (base.empty()) base = ".";
  try {
    return parse(ss.str(), base);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ThresholdSchedule Config::schedule() const {
  ThresholdSchedule s;
  s.c = c;
  s.max_turns = max_turns;
  if (theta0) {
    s.theta0 = *theta0;
  } else if (auto t = default_theta0(qa_model, dataset)) {
    s.theta0 = *t;
  } else {
    throw ConfigError("no theta0 for QA model '" + qa_model + "' on dataset '" + dataset +
                      "'; set controller.theta0 or pass --theta0");
  }
  s.validate();
  return s;
}

PipelineConfig Config::pipeline() const {
  PipelineConfig p;
  p.k = k;
  p.budget_mode = budget_mode;
  p.schedule = schedule();
  p.augment = augment;
  p.relation_match_threshold = relation_match_threshold;
  p.validate();
  return p;
}

ojson Config::to_json() const {
  ojson j;
  j["kg"] = {{"triples", kg_triples.string()},
             {"aliases", kg_aliases ? ojson(kg_aliases->string()) : ojson(nullptr)}};
  j["kge"] = {{"checkpoint", kge_checkpoint ? ojson(kge_checkpoint->string()) : ojson(nullptr)},
              {"dim", train.dim},
              {"learning_rate", train.learning_rate},
              {"epochs", train.epochs},
              {"negatives", train.negatives_per_positive},
              {"l2", train.l2_weight},
              {"batch_size", train.batch_size},
              {"seed", train.seed}};
  ojson ctl;
  ctl["qa_model"] = qa_model;
  ctl["dataset"] = dataset;
  ctl["theta0"] = theta0 ? ojson(*theta0) : ojson(nullptr);
  try {
    ctl["theta0_effective"] = schedule().theta0;
  } catch (const ConfigError&) {
    ctl["theta0_effective"] = nullptr;
  }
  ctl["c"] = c;
  ctl["max_turns"] = max_turns;
  j["controller"] = ctl;
  j["augment"] = {{"topk_relations", augment.topk_relations},
                  {"max_tails_per_entity", augment.max_tails_per_entity},
                  {"similarity", similarity}};
  if (embedding) {
    BackendSpec b;
    b.kind = "http";
    b.http = *embedding;
    auto e = backend_json(b);
    e.erase("backend");
    j["augment"]["embedding"] = e;
  }
  ojson gw;
  gw["max_concurrency"] = gateway.max_concurrency;
  gw["max_tokens"] = gateway.max_tokens;
  gw["prompts_dir"] = prompts_dir ? ojson(prompts_dir->string()) : ojson(nullptr);
  gw["fixtures"] = fixtures ? ojson(fixtures->string()) : ojson(nullptr);
  gw["roles"] = ojson::object();
  for (const auto& [name, b] : roles) gw["roles"][name] = backend_json(b);
  gw["knowledge_models"] = ojson::array();
  for (const auto& [name, b] : knowledge_models) {
    ojson m;
    m["name"] = name;
    const ojson spec = backend_json(b);
    for (const auto& [k2, v] : spec.items()) m[k2] = v;
    gw["knowledge_models"].push_back(m);
  }
  j["gateway"] = gw;
  j["pipeline"] = {{"k", k},
                   {"budget", budget_mode == BudgetMode::k_plus_t ? "k_plus_t" : "k"},
                   {"relation_match_threshold", relation_match_threshold}};
  return j;
}

// ---- runtime ----------------------------------------------------------------

namespace {

std::vector<std::string> vocabulary(const KnowledgeGraph& kg) {
  std::vector<std::string> out;
  for (EntityId e = 0; e < kg.num_entities(); ++e) out.push_back(kg.entity_label(e));
  for (RelationId r = 0; r < kg.num_relations(); ++r) out.push_back(kg.relation_label(r));
  return out;
}

}  // namespace

Runtime::Runtime(const Config& cfg, RuntimeOptions opts) {
  pipeline_ = cfg.pipeline();
  kg_ = load_kg(cfg.kg_triples, cfg.kg_aliases);
  if (cfg.kge_checkpoint) {
    model_ = load_checkpoint(*cfg.kge_checkpoint, &kg_);
  } else {
    model_ = train(kg_, cfg.train).model;
  }

  if (cfg.similarity == "external") {
    sim_ = std::make_unique<HttpEmbeddingSimilarity>(*cfg.embedding);
  } else {
    const auto vocab = vocabulary(kg_);
    sim_ = std::make_unique<LexicalSimilarity>(vocab);
  }
  linker_ = std::make_unique<AliasLinker>(kg_);
  trace_ = std::make_unique<TraceLog>(opts.trace_path, opts.deterministic);

  PromptSet prompts = cfg.prompts_dir ? PromptSet::load(*cfg.prompts_dir) : PromptSet::defaults();
  gateway_ = std::make_unique<Gateway>(std::move(prompts), cfg.gateway, trace_.get());

  std::map<fs::path, std::shared_ptr<ChatBackend>> fixture_cache;
  auto make = [&](const BackendSpec& b, const std::string& who) -> std::shared_ptr<ChatBackend> {
    if (b.kind == "http") return std::make_shared<HttpBackend>(b.http);
    fs::path file = b.fixtures;
    if (file.empty()) {
      if (!cfg.fixtures) throw ConfigError(who + " uses fixtures but gateway.fixtures is not set");
      file = *cfg.fixtures;
    }
    auto& slot = fixture_cache[file];
    if (!slot) slot = std::make_shared<FixtureBackend>(FixtureBackend::load(file));
    return slot;
  };

  for (RoleKind kind : {RoleKind::answer, RoleKind::triple_extract, RoleKind::query_gen,
                        RoleKind::relevance}) {
    const std::string name = LlmRole{kind, {}}.str();
    auto it = cfg.roles.find(name);
    BackendSpec spec = it != cfg.roles.end() ? it->second : BackendSpec{};
    gateway_->bind(kind, make(spec, "role " + name));
  }
  if (cfg.knowledge_models.empty()) throw ConfigError("gateway.knowledge_models is empty");
  for (const auto& [name, spec] : cfg.knowledge_models) {
    gateway_->add_knowledge_model(name, make(spec, "knowledge model " + name));
  }
}

}  // namespace know3
