#include <doctest.h>

#include <random>

#include "know3/config.hpp"
#include "know3/eval.hpp"

using namespace know3;

namespace {

std::filesystem::path turns_dir() {
  return std::filesystem::path(KNOW3_SOURCE_DIR) / "data" / "turns";
}

std::vector<std::string> golds(std::initializer_list<const char*> g) {
  return {g.begin(), g.end()};
}

// A finished record that stopped at turn `t` with the given answer.
AnswerRecord record(const QAItem& q, std::string answer, int t,
                    std::vector<std::string> sources = {}) {
  AnswerRecord rec;
  rec.id = q.id;
  rec.question = q.question;
  rec.final_answer = answer;
  rec.stop_reason = StopReason::below_threshold;
  for (int i = 0; i <= t; ++i) {
    IterationState s;
    s.t = i;
    s.answer = answer;
    s.stop = i == t;
    if (s.stop) s.reason = StopReason::below_threshold;
    for (const auto& m : sources) {
      ReferenceDoc d;
      d.text = "doc from " + m;
      d.source_model = m;
      d.relevance = true;
      s.candidates.push_back(d);
      if (i == t) s.accepted_refs.push_back(d);
    }
    rec.trace.push_back(std::move(s));
  }
  return rec;
}

std::string random_phrase(std::mt19937_64& rng) {
  static const char* kWords[] = {"the", "a",     "an",    "Paris", "paris.", "Obama", "Barack",
                                 "red", "blue",  "U.S.",  "us",    ",",      "  ",    "dog",
                                 "Dog", "DOG!",  "of",    "war",   "1920",   "-",     "Zürich"};
  std::uniform_int_distribution<size_t> n(0, 5), w(0, std::size(kWords) - 1);
  std::string out;
  for (size_t i = n(rng); i > 0; --i) {
    if (!out.empty()) out += ' ';
    out += kWords[w(rng)];
  }
  return out;
}

}  // namespace

TEST_CASE("normalize_answer") {
  CHECK(normalize_answer("The Eiffel Tower.") == "eiffel tower");
  CHECK(normalize_answer("") == "");
  CHECK(normalize_answer("  A  dog ") == "dog");
  CHECK(normalize_answer("U.S. Army") == "us army");
  CHECK(normalize_answer("Theatre and an apple") == "theatre and apple");
  CHECK(normalize_answer("Zürich") == "zürich");
}

TEST_CASE("normalize_answer is idempotent") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const std::string s = random_phrase(rng);
    const std::string once = normalize_answer(s);
    CHECK(normalize_answer(once) == once);
  }
}

TEST_CASE("exact match and token F1") {
  CHECK(exact_match("Paris", golds({"paris."})) == 1);
  CHECK(token_f1("Paris", golds({"paris."})) == doctest::Approx(1.0));
  CHECK(exact_match("Obama", golds({"Barack Obama"})) == 0);
  CHECK(token_f1("Obama", golds({"Barack Obama"})) == doctest::Approx(2.0 / 3.0));
  CHECK(exact_match("blue", golds({"red"})) == 0);
  CHECK(token_f1("blue", golds({"red"})) == 0.0);
  // Maximum over golds.
  CHECK(exact_match("Obama", golds({"Barack Obama", "obama"})) == 1);
  CHECK(token_f1("Barack Hussein Obama", golds({"Obama", "Barack Obama"})) ==
        doctest::Approx(0.8));
  // Repeated tokens count as a multiset.
  CHECK(token_f1("dog dog", golds({"dog"})) == doctest::Approx(2.0 / 3.0));
  CHECK(token_f1("the", golds({"a"})) == 1.0);
  CHECK(token_f1("the", golds({"dog"})) == 0.0);
  CHECK_THROWS_AS(exact_match("x", {}), std::invalid_argument);
  CHECK_THROWS_AS(token_f1("x", {}), std::invalid_argument);
}

TEST_CASE("EM=1 implies F1=1 and both stay in range") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const std::string p = random_phrase(rng);
    const std::vector<std::string> g{random_phrase(rng), random_phrase(rng)};
    const int em = exact_match(p, g);
    const double f1 = token_f1(p, g);
    CHECK(f1 >= 0.0);
    CHECK(f1 <= 1.0);
    if (em == 1) CHECK(f1 == 1.0);
  }
}

TEST_CASE("dataset adapters") {
  SUBCASE("records") {
    auto items = parse_dataset(
        R"({"id": "x1", "question": "Q?", "answers": ["a", "b"]}

{"id": 7, "question": "R?", "answers": "c"}
)",
        DatasetFormat::records);
    REQUIRE(items.size() == 2);
    CHECK(items[0].id == "x1");
    CHECK(items[0].answers == golds({"a", "b"}));
    CHECK(items[1].id == "7");
    CHECK(items[1].answers == golds({"c"}));
  }
  SUBCASE("hotpotqa array") {
    auto items = parse_dataset(R"([{"_id": "5a8b", "question": "Q?", "answer": "yes",
                                    "context": [], "supporting_facts": []}])",
                               DatasetFormat::hotpotqa);
    REQUIRE(items.size() == 1);
    CHECK(items[0].id == "5a8b");
    CHECK(items[0].answers == golds({"yes"}));
  }
  SUBCASE("2wiki jsonl") {
    auto items = parse_dataset(R"({"_id": "w1", "question": "Q?", "answer": "Berlin"})",
                               DatasetFormat::twowiki);
    REQUIRE(items.size() == 1);
    CHECK(items[0].answers == golds({"Berlin"}));
  }
  SUBCASE("popqa encoded list and single answer") {
    auto items = parse_dataset(
        R"({"id": 1, "question": "Q?", "possible_answers": "[\"Mozart\", \"W. A. Mozart\"]"}
{"id": 2, "question": "R?", "possible_answers": "Salzburg"}
{"id": 3, "question": "S?", "possible_answers": ["Vienna"]})",
        DatasetFormat::popqa);
    REQUIRE(items.size() == 3);
    CHECK(items[0].answers == golds({"Mozart", "W. A. Mozart"}));
    CHECK(items[1].answers == golds({"Salzburg"}));
    CHECK(items[2].answers == golds({"Vienna"}));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(parse_dataset(R"({"id": "1", "question": "Q?", "answers": []})",
                                  DatasetFormat::records),
                    DataError);
    CHECK_THROWS_AS(parse_dataset(R"({"id": "1", "answers": ["a"]})", DatasetFormat::records),
                    DataError);
    CHECK_THROWS_AS(parse_dataset("{not json", DatasetFormat::records), DataError);
    CHECK_THROWS_AS(parse_dataset_format("squad"), ConfigError);
    CHECK_THROWS_AS(load_dataset(turns_dir() / "missing.jsonl"), ConfigError);
    try {
      parse_dataset("{\"id\": \"1\", \"question\": \"Q\", \"answers\": [\"a\"]}\n{oops\n",
                    DatasetFormat::records);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  CHECK(parse_dataset_format("2wiki") == DatasetFormat::twowiki);
}

TEST_CASE("evaluate aggregates") {
  const std::vector<QAItem> items{{"1", "Q1", {"Paris"}},
                                  {"2", "Q2", {"Barack Obama"}},
                                  {"3", "Q3", {"red"}}};
  const std::map<std::string, std::string> preds{{"1", "paris"}, {"2", "Barack Obama"},
                                                 {"3", "blue"}};
  auto runner = [&](const QAItem& q) {
    return record(q, preds.at(q.id), 1, q.id == "3" ? std::vector<std::string>{"A", "B"}
                                                    : std::vector<std::string>{"A"});
  };

  const EvalReport rep = evaluate(items, runner);
  REQUIRE(rep.size() == 3);
  CHECK(rep.em == doctest::Approx(2.0 / 3.0));
  CHECK(rep.f1 == doctest::Approx(2.0 / 3.0));
  CHECK(rep.turn_fractions() == std::map<int, double>{{1, 1.0}});
  CHECK(rep.failed == 0);
  // A: 3 accepted of 4, B: 1 of 4. Candidates count every turn.
  CHECK(rep.usage.at("A").accepted == 3);
  CHECK(rep.usage.at("A").generated == 6);
  CHECK(rep.usage.at("A").usage == doctest::Approx(0.75));
  CHECK(rep.usage.at("B").usage == doctest::Approx(0.25));

  const EvalReport one = evaluate(items, runner, {1, 1});
  CHECK(one.size() == 1);
  CHECK(one.items[0].id == "1");

  const std::string jsonl = rep.to_jsonl();
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 4);
  CHECK(jsonl.find("\"summary\"") != std::string::npos);
  CHECK(rep.table(2).find("100.0%") != std::string::npos);
}

TEST_CASE("failed items score zero and are counted apart") {
  const std::vector<QAItem> items{{"1", "Q1", {"x"}}, {"2", "Q2", {"y"}}};
  auto runner = [&](const QAItem& q) -> AnswerRecord {
    if (q.id == "2") throw PipelineError(BackendError("answer", "down"), AnswerRecord{});
    return record(q, "x", 0);
  };
  const EvalReport rep = evaluate(items, runner);
  CHECK(rep.em == doctest::Approx(0.5));
  CHECK(rep.failed == 1);
  CHECK(rep.items[1].error.has_value());
  CHECK(rep.items[1].final_turn == -1);
  size_t total = rep.failed;
  for (const auto& [t, n] : rep.turn_counts) total += n;
  CHECK(total == rep.size());

  // Anything other than a pipeline failure is a bug and propagates.
  auto broken = [](const QAItem&) -> AnswerRecord { throw std::logic_error("bug"); };
  CHECK_THROWS_AS(evaluate(items, broken), std::logic_error);
}

TEST_CASE("aggregates do not depend on worker count or item order") {
  std::mt19937_64 rng(3);
  std::vector<QAItem> items;
  for (int i = 0; i < 40; ++i) {
    items.push_back({std::to_string(i), "Q" + std::to_string(i), {random_phrase(rng) + " x"}});
  }
  auto runner = [](const QAItem& q) {
    const int n = std::stoi(q.id);
    return record(q, n % 3 ? q.answers[0] : "x", n % 3, {n % 2 ? "A" : "B"});
  };
  const EvalReport base = evaluate(items, runner);
  auto shuffled = items;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  for (size_t workers : {2u, 8u}) {
    const EvalReport rep = evaluate(shuffled, runner, {std::nullopt, workers});
    CHECK(rep.em == doctest::Approx(base.em).epsilon(1e-12));
    CHECK(rep.f1 == doctest::Approx(base.f1).epsilon(1e-12));
    CHECK(rep.turn_counts == base.turn_counts);
    CHECK(rep.usage.at("A").accepted == base.usage.at("A").accepted);
    for (size_t i = 0; i < rep.size(); ++i) CHECK(rep.items[i].id == shuffled[i].id);
  }
}

TEST_CASE("turn distribution on the fixture dataset") {
  Runtime rt(Config::load(turns_dir() / "config.json"), {std::nullopt, true});
  const auto items = load_dataset(turns_dir() / "questions.jsonl");
  REQUIRE(items.size() == 10);
  auto ctx = rt.context();
  const auto cfg = rt.pipeline_config();
  auto runner = [&](const QAItem& q) { return run_pipeline(q.question, ctx, cfg, q.id); };
  const EvalReport rep = evaluate(items, runner, {std::nullopt, 4});
  CHECK(rep.failed == 0);
  CHECK(rep.turn_counts == std::map<int, size_t>{{0, 2}, {1, 5}, {2, 3}});
  CHECK(rep.em == doctest::Approx(0.7));
  CHECK(rep.f1 >= rep.em);
}
