// know3: command-line entry point.
//
//   know3 kg load-check --kg triples.tsv [--aliases aliases.tsv]
//   know3 kge train --kg triples.tsv --out model.k3cx [--epochs N ...]
//   know3 kge score HEAD RELATION TAIL --kg triples.tsv --checkpoint model.k3cx
//   know3 ask "question" --config config.json [--trace out.json]
//   know3 eval --config config.json --dataset questions.jsonl [--report out.jsonl]
//
// Exit codes: 0 ok, 2 config or usage, 3 data, 4 backend.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <set>

#include "know3/config.hpp"
#include "know3/eval.hpp"
#include "know3/kge.hpp"
#include "know3/pipeline.hpp"

namespace fs = std::filesystem;
using namespace know3;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitBackend = 4;

struct Globals {
  std::optional<fs::path> config;
  std::optional<uint64_t> seed;
  std::string format = "text";
  bool deterministic = false;
  int verbosity = 0;  // -1 quiet, 0 default, 1 verbose
};

void info(const Globals& g, const std::string& msg) {
  if (g.verbosity > 0) std::cerr << msg << "\n";
}

std::optional<Config> load_config(const Globals& g) {
  if (!g.config) return std::nullopt;
  return Config::load(*g.config);
}

struct KgPaths {
  std::optional<fs::path> triples;
  std::optional<fs::path> aliases;
  std::optional<fs::path> checkpoint;

  // Flags win over the config file.
  void fill_from(const std::optional<Config>& cfg) {
    if (!cfg) return;
    if (!triples) triples = cfg->kg_triples;
    if (!aliases) aliases = cfg->kg_aliases;
    if (!checkpoint) checkpoint = cfg->kge_checkpoint;
  }

  KnowledgeGraph load() const {
    if (!triples) throw ConfigError("no knowledge graph given (use --kg or --config)");
    return load_kg(*triples, aliases);
  }
};

void add_kg_options(CLI::App* cmd, KgPaths& p) {
  cmd->add_option("--kg", p.triples, "Triples TSV (head, relation, tail)");
  cmd->add_option("--aliases", p.aliases, "Alias TSV (alias, canonical label)");
}

void print_records(const ojson& j) { std::cout << j.dump() << "\n"; }

// ---- kg load-check ----------------------------------------------------------

int cmd_kg_check(const Globals& g, KgPaths paths) {
  paths.fill_from(load_config(g));
  const KnowledgeGraph kg = paths.load();
  size_t aliases = 0;
  size_t isolated = 0;
  for (EntityId e = 0; e < kg.num_entities(); ++e) {
    aliases += kg.entity_aliases(e).size();
    if (kg.degree(e) == 0) ++isolated;
  }
  if (g.format == "records") {
    print_records({{"entities", kg.num_entities()},
                   {"relations", kg.num_relations()},
                   {"triples", kg.num_triples()},
                   {"aliases", aliases},
                   {"isolated_entities", isolated}});
  } else {
    std::printf("entities   %zu\nrelations  %zu\ntriples    %zu\naliases    %zu\n",
                kg.num_entities(), kg.num_relations(), kg.num_triples(), aliases);
    if (isolated > 0) std::printf("isolated   %zu\n", isolated);
  }
  return kExitOk;
}

// ---- kge train --------------------------------------------------------------

struct TrainFlags {
  KgPaths paths;
  fs::path out;
  std::optional<size_t> dim, epochs, negatives, batch_size;
  std::optional<double> lr, l2;
  double holdout = 0.1;
};

int cmd_kge_train(const Globals& g, TrainFlags f) {
  const auto cfg = load_config(g);
  f.paths.fill_from(cfg);
  TrainConfig tc = cfg ? cfg->train : TrainConfig{};
  if (f.dim) tc.dim = *f.dim;
  if (f.epochs) tc.epochs = *f.epochs;
  if (f.negatives) tc.negatives_per_positive = *f.negatives;
  if (f.batch_size) tc.batch_size = *f.batch_size;
  if (f.lr) tc.learning_rate = *f.lr;
  if (f.l2) tc.l2_weight = *f.l2;
  if (g.seed) tc.seed = *g.seed;
  tc.validate();
  if (f.holdout < 0.0 || f.holdout >= 1.0) throw ConfigError("--holdout must be in [0, 1)");

  const KnowledgeGraph kg = f.paths.load();
  std::vector<Triple> all(kg.triples().begin(), kg.triples().end());
  std::mt19937_64 rng(tc.seed);
  std::shuffle(all.begin(), all.end(), rng);
  const size_t n_test = static_cast<size_t>(f.holdout * double(all.size()));
  std::vector<Triple> test(all.begin(), all.begin() + n_test);
  std::vector<Triple> training(all.begin() + n_test, all.end());
  std::sort(training.begin(), training.end());

  const auto start = std::chrono::steady_clock::now();
  TrainResult res = train(training, kg.num_entities(), kg.num_relations(), tc);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  info(g, "trained " + std::to_string(tc.epochs) + " epochs in " + std::to_string(secs) + " s");

  const double loss = res.epoch_losses.empty() ? 0.0 : res.epoch_losses.back();
  std::optional<double> mrr;
  if (!test.empty()) {
    const std::set<Triple> known(kg.triples().begin(), kg.triples().end());
    mrr = filtered_mrr(res.model, test, known);
  }
  save_checkpoint(res.model, f.out, &kg);

  if (g.format == "records") {
    print_records({{"checkpoint", f.out.string()},
                   {"train_triples", training.size()},
                   {"held_out", test.size()},
                   {"final_loss", loss},
                   {"filtered_mrr", mrr ? ojson(*mrr) : ojson(nullptr)}});
  } else {
    std::printf("train triples   %zu\nheld out        %zu\nfinal loss      %.6f\n",
                training.size(), test.size(), loss);
    if (mrr) {
      std::printf("filtered MRR    %.4f\n", *mrr);
    } else {
      std::printf("filtered MRR    n/a (nothing held out)\n");
    }
    std::printf("wrote %s\n", f.out.string().c_str());
  }
  return kExitOk;
}

// ---- kge score --------------------------------------------------------------

struct ScoreFlags {
  KgPaths paths;
  std::string head, relation, tail;
};

int cmd_kge_score(const Globals& g, ScoreFlags f) {
  f.paths.fill_from(load_config(g));
  if (!f.paths.checkpoint) throw ConfigError("no checkpoint given (use --checkpoint or --config)");
  const KnowledgeGraph kg = f.paths.load();
  const ComplExModel model = load_checkpoint(*f.paths.checkpoint, &kg);

  auto unverifiable = [&] {
    if (g.format == "records") {
      print_records({{"verifiable", false}});
    } else {
      std::printf("unverifiable\n");
    }
    return kExitOk;
  };

  const auto head = kg.find_entity(f.head);
  if (!head) return unverifiable();
  const auto rel = kg.find_relation(f.relation);
  if (!rel) throw DataError("unknown relation '" + f.relation + "'");
  const auto tail = kg.find_entity(f.tail);
  if (!tail) throw DataError("unknown tail entity '" + f.tail + "'");

  const auto rs = relative_triple_score(model, kg, {*head, *rel, *tail});
  if (!rs) return unverifiable();
  if (g.format == "records") {
    print_records({{"verifiable", true},
                   {"kge_score", rs->kge_score},
                   {"reference_mean", rs->reference_mean},
                   {"relative", rs->relative},
                   {"references", rs->reference_count}});
  } else {
    std::printf("kge_score       %.9g\nreference_mean  %.9g\nrelative        %.9g\nreferences      %zu\n",
                rs->kge_score, rs->reference_mean, rs->relative, rs->reference_count);
  }
  return kExitOk;
}

// ---- ask / eval shared config handling --------------------------------------

struct RunFlags {
  std::optional<double> theta0;
  std::optional<std::string> qa_model, benchmark;
  std::optional<int> max_turns;
  std::optional<int> k;
  std::optional<fs::path> exchanges;
};

void add_run_options(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--theta0", f.theta0, "Initial threshold; overrides the built-in table");
  cmd->add_option("--qa-model", f.qa_model, "Answer model name for the threshold table");
  cmd->add_option("--benchmark", f.benchmark,
                  "Benchmark name for the threshold table (hotpotqa, 2wiki, popqa)");
  cmd->add_option("--max-turns", f.max_turns, "Maximum retrieval turns");
  cmd->add_option("-k", f.k, "Base reference budget per turn");
  cmd->add_option("--exchanges", f.exchanges, "Append every model exchange to this JSONL file");
}

Config effective_config(const Globals& g, const RunFlags& f) {
  if (!g.config) throw ConfigError("--config is required");
  Config cfg = Config::load(*g.config);
  if (f.theta0) cfg.theta0 = *f.theta0;
  if (f.qa_model) cfg.qa_model = *f.qa_model;
  if (f.benchmark) cfg.dataset = *f.benchmark;
  if (f.max_turns) cfg.max_turns = *f.max_turns;
  if (f.k) cfg.k = *f.k;
  if (g.seed) cfg.train.seed = *g.seed;
  // Surfaces an unresolved threshold before any model is trained.
  cfg.pipeline().validate();
  return cfg;
}

void install_warning_sink(const Globals& g, Runtime& rt) {
  if (g.verbosity < 0) {
    rt.gateway().set_warning_sink([](const std::string&) {});
  } else {
    rt.gateway().set_warning_sink([](const std::string& m) { std::cerr << "warning: " << m << "\n"; });
  }
}

// ---- ask --------------------------------------------------------------------

struct AskFlags {
  RunFlags run;
  std::string question;
  std::string id = "q";
  std::optional<fs::path> trace;
};

int cmd_ask(const Globals& g, const AskFlags& f) {
  const Config cfg = effective_config(g, f.run);
  Runtime rt(cfg, {f.run.exchanges, g.deterministic});
  install_warning_sink(g, rt);
  const AnswerRecord rec =
      run_pipeline(f.question, rt.context(), rt.pipeline_config(), f.id, cfg.to_json());
  const ojson j = rec.to_json(rt.kg());
  if (f.trace) {
    std::ofstream out(*f.trace, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + f.trace->string());
    out << j.dump(2) << "\n";
  }
  if (g.format == "records") {
    print_records(j);
  } else {
    std::printf("%s\n", rec.final_answer.c_str());
    std::printf("stop: %s at turn %d\n", std::string(to_string(*rec.stop_reason)).c_str(),
                rec.final_turn());
  }
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalFlags {
  RunFlags run;
  fs::path dataset;
  std::string dataset_format = "records";
  std::optional<size_t> limit;
  std::optional<fs::path> report;
  size_t workers = 1;
};

int cmd_eval(const Globals& g, const EvalFlags& f) {
  const Config cfg = effective_config(g, f.run);
  const auto items = load_dataset(f.dataset, parse_dataset_format(f.dataset_format));
  if (f.workers == 0) throw ConfigError("--workers must be at least 1");
  Runtime rt(cfg, {f.run.exchanges, g.deterministic});
  install_warning_sink(g, rt);
  const auto ctx = rt.context();
  const PipelineConfig pcfg = rt.pipeline_config();
  const ojson echo = cfg.to_json();
  auto runner = [&](const QAItem& q) { return run_pipeline(q.question, ctx, pcfg, q.id, echo); };
  const EvalReport rep = evaluate(items, runner, {f.limit, f.workers});
  if (f.report) {
    std::ofstream out(*f.report, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + f.report->string());
    out << rep.to_jsonl();
  }
  if (g.format == "records") {
    std::cout << rep.to_jsonl();
  } else {
    std::cout << rep.table(cfg.max_turns);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"know3: knowledge-graph verified retrieval-augmented QA"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--seed", g.seed, "Seed for embedding training");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"text", "records"}));
  app.add_flag("--deterministic", g.deterministic, "Omit timings from exchange logs");
  app.add_flag_callback("-v,--verbose", [&] { g.verbosity = 1; }, "Progress on stderr");
  app.add_flag_callback("-q,--quiet", [&] { g.verbosity = -1; }, "Suppress warnings");

  int rc = kExitOk;
  std::function<int()> action;

  auto* kg_cmd = app.add_subcommand("kg", "Knowledge graph utilities");
  kg_cmd->require_subcommand(1);
  KgPaths check_paths;
  auto* check = kg_cmd->add_subcommand("load-check", "Load a graph and print its size");
  add_kg_options(check, check_paths);
  check->callback([&] { action = [&] { return cmd_kg_check(g, check_paths); }; });

  auto* kge_cmd = app.add_subcommand("kge", "Embedding model utilities");
  kge_cmd->require_subcommand(1);
  TrainFlags tf;
  auto* tr = kge_cmd->add_subcommand("train", "Train a ComplEx model and write a checkpoint");
  add_kg_options(tr, tf.paths);
  tr->add_option("--out", tf.out, "Checkpoint path")->required();
  tr->add_option("--dim", tf.dim, "Embedding dimension");
  tr->add_option("--epochs", tf.epochs, "Training epochs");
  tr->add_option("--lr", tf.lr, "Learning rate");
  tr->add_option("--negatives", tf.negatives, "Negatives per positive");
  tr->add_option("--l2", tf.l2, "L2 weight");
  tr->add_option("--batch-size", tf.batch_size, "Mini-batch size");
  tr->add_option("--holdout", tf.holdout, "Fraction of triples held out for MRR")->capture_default_str();
  tr->callback([&] { action = [&] { return cmd_kge_train(g, tf); }; });

  ScoreFlags sf;
  auto* sc = kge_cmd->add_subcommand("score", "Score one triple against its head's neighbourhood");
  add_kg_options(sc, sf.paths);
  sc->add_option("--checkpoint", sf.paths.checkpoint, "Checkpoint path");
  sc->add_option("head", sf.head)->required();
  sc->add_option("relation", sf.relation)->required();
  sc->add_option("tail", sf.tail)->required();
  sc->callback([&] { action = [&] { return cmd_kge_score(g, sf); }; });

  AskFlags af;
  auto* ask = app.add_subcommand("ask", "Answer one question");
  ask->add_option("question", af.question)->required();
  ask->add_option("--id", af.id, "Record id")->capture_default_str();
  ask->add_option("--trace", af.trace, "Write the full answer record here");
  add_run_options(ask, af.run);
  ask->callback([&] { action = [&] { return cmd_ask(g, af); }; });

  EvalFlags ef;
  auto* ev = app.add_subcommand("eval", "Evaluate over a QA dataset");
  ev->add_option("--dataset", ef.dataset, "Dataset file")->required();
  ev->add_option("--dataset-format", ef.dataset_format, "records, hotpotqa, 2wiki or popqa")->capture_default_str();
  ev->add_option("--limit", ef.limit, "Evaluate only the first N items");
  ev->add_option("--report", ef.report, "Write per-item records and a summary here");
  ev->add_option("--workers", ef.workers, "Items evaluated in parallel")->capture_default_str();
  add_run_options(ev, ef.run);
  ev->callback([&] { action = [&] { return cmd_eval(g, ef); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    rc = action ? action() : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    rc = kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    rc = kExitData;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    rc = kExitBackend;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    rc = 1;
  }
  return rc;
}
