#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "explicable/datakit.hpp"
#include "explicable/io.hpp"
#include "support.hpp"

using namespace explicable;
namespace fs = std::filesystem;

namespace {

Trace simulate(const Problem& p, bool labels = true) {
  GreedySimHuman human(p);
  EpisodeOptions eo;
  eo.collect_labels = labels;
  eo.trace_id = "sim-" + p.id;
  return run_episode(p, human, nullptr, eo);
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "explicable_test_datakit";
  fs::create_directories(dir);
  return dir / name;
}

LabelerModel rule_model() {
  LabelerModel m;
  m.weights()[m.emission_slot(feature::DeviatesHumanPath, Label::Inexplicable)] = 8.0;
  m.weights()[m.emission_slot(feature::Bias, Label::Inexplicable)] = -4.0;
  return m;
}

}  // namespace

TEST_CASE("generation is deterministic and respects the config") {
  Problem a = generate_problem(42);
  Problem b = generate_problem(42);
  CHECK(a == b);
  CHECK(a.map.room_count() == 4);
  CHECK(a.map.visible_obstacles.size() >= 2);
  CHECK(a.map.visible_obstacles.size() <= 5);
  CHECK(a.map.hidden_obstacles.size() == 2);
  CHECK(a.map.width == 10);
  CHECK_NOTHROW(a.validate());
  CHECK_FALSE(generate_problem(43) == a);

  GeneratorConfig tiny;
  tiny.width = 3;
  tiny.height = 3;
  tiny.n_rooms = 1;
  tiny.min_visible = 0;
  tiny.max_visible = 0;
  tiny.n_hidden = 0;
  Problem t = generate_problem(1, tiny);
  CHECK(t.map.room_count() == 1);
  CHECK_NOTHROW(t.validate());

  GeneratorConfig impossible;
  impossible.width = 2;
  impossible.height = 2;
  impossible.n_rooms = 10;
  CHECK_THROWS_AS(generate_problem(1, impossible), std::invalid_argument);
}

TEST_CASE("problem sets") {
  ProblemSet s = generate_problem_set(7, 16, Split::Train);
  CHECK(s.problems.size() == 16);
  std::set<std::string> ids;
  for (const auto& p : s.problems) ids.insert(p.id);
  CHECK(ids.size() == 16);
  CHECK(s.problems[3].map == generate_problem(10).map);
  CHECK_THROWS_AS(s.find("nope"), std::out_of_range);
}

TEST_CASE("room permutations") {
  Problem p = generate_problem(5);
  Trace t = simulate(p);
  std::vector<int> id{0, 1, 2, 3}, swap{1, 0, 2, 3}, cyc{1, 2, 3, 0};
  CHECK(permute_trace(t, id) == t);
  CHECK(permute_problem(p, id) == p);
  CHECK(permute_trace(permute_trace(t, swap), swap) == t);
  CHECK(permute_problem(permute_problem(p, swap), swap) == p);

  Problem q = permute_problem(p, cyc);
  Trace u = permute_trace(t, cyc);
  CHECK(q.map.room(1).cell == p.map.room(0).cell);
  CHECK(extract_features(u.plan(), q) == extract_features(t.plan(), p));
  verify_trace(u, q);
  for (std::size_t i = 0; i < t.events.size(); ++i) CHECK(u.events[i].label == t.events[i].label);

  CHECK_THROWS_AS(permute_trace(t, {0, 0, 1, 2}), InvalidPermutation);
  CHECK_THROWS_AS(permute_trace(t, {0, 1, 2}), InvalidPermutation);
  CHECK_THROWS_AS(permute_problem(p, {0, 1, 2, 4}), InvalidPermutation);
}

TEST_CASE("augmentation counts and determinism") {
  ProblemSet s = generate_problem_set(100, 34, Split::Train);
  std::vector<JudgedTrace> corpus;
  for (const auto& p : s.problems) corpus.push_back({simulate(p), p});
  CHECK(augment(corpus, 0, 1).size() == 34);
  auto big = augment(corpus, 1000, 1);
  CHECK(big.size() == 34034);
  CHECK(big[0] == to_judged_sequence(corpus[0].trace, corpus[0].problem));
  std::vector<JudgedTrace> few(corpus.begin(), corpus.begin() + 3);
  CHECK(corpus_to_jsonl(augment(few, 20, 9)) == corpus_to_jsonl(augment(few, 20, 9)));
}

TEST_CASE("round trips") {
  ProblemSet s = generate_problem_set(3, 4, Split::Test);
  s.problems[0].notes = "with notes";
  s.problems[1].alpha = 0.25;
  save_problem_set(scratch("set.json"), s);
  CHECK(load_problem_set(scratch("set.json")) == s);

  save_problem(scratch("p.json"), s.problems[1]);
  CHECK(load_problem(scratch("p.json")) == s.problems[1]);
  CHECK(load_problem_set(scratch("p.json")).problems.at(0) == s.problems[1]);

  std::vector<JudgedSequence> seqs;
  for (const auto& p : s.problems) seqs.push_back(to_judged_sequence(simulate(p), p));
  LabelerModel m = train(seqs);
  save_model(scratch("m.json"), m);
  LabelerModel back = load_model(scratch("m.json"));
  CHECK(back == m);
  CHECK(back.weights() == m.weights());

  Trace t = simulate(s.problems[2]);
  t.replans.push_back({3, 1, 17});
  save_trace(scratch("t.jsonl"), t);
  auto traces = load_traces(scratch("t.jsonl"));
  REQUIRE(traces.size() == 1);
  CHECK(traces[0] == t);
  CHECK(traces_from_jsonl(trace_to_jsonl(t) + trace_to_jsonl(t)).size() == 2);

  EvalReport r = evaluate(s, rule_model());
  save_report(scratch("r.json"), r);
  CHECK(load_report(scratch("r.json")) == r);
}

TEST_CASE("parse errors") {
  Problem p = generate_problem(9);
  Json j = to_json(p);
  j.erase("rooms");
  try {
    problem_from_json(j);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("rooms") != std::string::npos);
  }

  j = to_json(p);
  j["version"] = 99;
  try {
    problem_from_json(j);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  std::string text = to_json(p).dump();
  write_file(scratch("cut.json"), text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_problem(scratch("cut.json")), ParseError);

  std::string jsonl = trace_to_jsonl(simulate(p));
  jsonl = jsonl.substr(0, jsonl.rfind('\n', jsonl.size() - 2) + 1);
  try {
    traces_from_jsonl(jsonl);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }

  Json bad_model = to_json(LabelerModel());
  bad_model["weights"].erase(0);
  CHECK_THROWS_AS(model_from_json(bad_model), ParseError);
}

TEST_CASE("evaluation") {
  ProblemSet test = generate_problem_set(77, 4, Split::Test);
  LabelerModel m = rule_model();
  EvalReport r = evaluate(test, m);
  REQUIRE(r.row(PlanType::Explicable) != nullptr);
  REQUIRE(r.row(PlanType::Baseline) != nullptr);
  CHECK(r.row(PlanType::Human) == nullptr);
  CHECK(r.scenarios.size() == 4);
  CHECK(recompute_rows(r) == r.rows);
  for (const auto& row : r.rows) {
    CHECK(row.ratio >= 0.0);
    CHECK(row.ratio <= 1.0);
    CHECK(row.ratio == static_cast<double>(row.explicable) / row.total);
  }
  CHECK(r.row(PlanType::Explicable)->ratio >= r.row(PlanType::Baseline)->ratio);
  CHECK(evaluate(test, m) == r);

  std::vector<Trace> human;
  for (const auto& p : test.problems) human.push_back(simulate(p, false));
  EvalReport with = evaluate(test, m, &human);
  REQUIRE(with.row(PlanType::Human) != nullptr);
  CHECK(with.row(PlanType::Human)->total > 0);

  human.pop_back();
  CHECK_THROWS_AS(evaluate(test, m, &human), MissingTrace);

  std::string text = format_report(with);
  CHECK(text.find("Explicable") != std::string::npos);
  CHECK(text.find("Human") != std::string::npos);
}
