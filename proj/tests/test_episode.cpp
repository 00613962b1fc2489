#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "explicable/datakit.hpp"
#include "explicable/episode.hpp"
#include "explicable/planner.hpp"
#include "support.hpp"

using namespace explicable;
using testing_support::make_problem;
using testing_support::relax_distance;

namespace {

using D = Direction;

std::size_t commands_in(const Trace& t) {
  std::size_t n = 0;
  for (const auto& e : t.events) n += e.action.is_command();
  return n;
}

}  // namespace

TEST_CASE("greedy sim picks the nearest room") {
  Problem p = make_problem(10, 10, {{9, 9}, {0, 5}}, {0, 0});
  GreedyHistory h;
  TeamState s = initial_state(p);
  CHECK(greedy_sim_step(s, human_view(p.map), 3, h) == 1);

  s.visited = RoomSet::all(2);
  GreedyHistory h2;
  CHECK_FALSE(greedy_sim_step(s, human_view(p.map), 3, h2).has_value());
}

TEST_CASE("greedy sim switches after k stalled moves") {
  // A hidden wall down column 3 sends the robot three cells away from
  // room 0 on the human view; the simulated human gives up on it.
  Problem p = make_problem(9, 7, {{3, 6}, {6, 0}}, {3, 2}, {},
                           {{0, 3}, {1, 3}, {2, 3}, {3, 3}, {4, 3}, {5, 3}});
  GreedySimHuman human(p, 3);
  EpisodeOptions eo;
  eo.collect_labels = true;
  Trace t = run_episode(p, human, nullptr, eo);
  CHECK(t.outcome == Outcome::Completed);
  REQUIRE(t.events.size() >= 2);
  CHECK(t.events[0].action == Action::command(0));
  bool switched = false;
  for (std::size_t i = 1; i < t.events.size(); ++i) {
    const auto& e = t.events[i];
    if (e.action.is_command() && !t.events[i - 1].state_after.visited.contains(0) &&
        t.events[i - 1].state_after.current_command == 0) {
      switched = true;
    }
  }
  CHECK(switched);
}

TEST_CASE("greedy sim without hidden obstacles follows the greedy relaxed plan") {
  for (int seed = 0; seed < 5; ++seed) {
    GeneratorConfig cfg;
    cfg.n_hidden = 0;
    Problem p = generate_problem(seed, cfg);
    GreedySimHuman human(p);
    Trace t = run_episode(p, human, nullptr);
    CHECK(t.outcome == Outcome::Completed);
    CHECK(t.plan() == relaxed_plan(initial_state(p), p));
  }
}

TEST_CASE("episode with nothing to do") {
  Problem p = make_problem(3, 3, {{2, 2}}, {0, 0});
  p.goal = RoomSet{};
  GreedySimHuman human(p);
  Trace t = run_episode(p, human, nullptr);
  CHECK(t.outcome == Outcome::Completed);
  CHECK(t.robot_moves() == 0);
}

TEST_CASE("hidden obstacle forces a deviation") {
  Problem p = make_problem(6, 6, {{2, 5}}, {2, 0}, {{4, 2}}, {{2, 2}, {1, 2}, {3, 2}});
  GreedySimHuman human(p);
  EpisodeOptions eo;
  eo.collect_labels = true;
  Trace t = run_episode(p, human, nullptr, eo);
  CHECK(t.outcome == Outcome::Completed);
  FeatureContext ctx(p);
  TeamState before = initial_state(p);
  int deviations = 0, inexplicable = 0;
  for (const auto& e : t.events) {
    if (e.action.is_move()) {
      bool dev = deviates_from_human_path(ctx, before, e.action);
      deviations += dev;
      REQUIRE(e.label.has_value());
      CHECK((*e.label == Label::Inexplicable) == dev);
      inexplicable += *e.label == Label::Inexplicable;
    }
    before = e.state_after;
  }
  CHECK(deviations >= 1);
  CHECK(inexplicable == deviations);
}

TEST_CASE("trace properties over simulated episodes") {
  RuleLabeler rule;
  for (int seed = 0; seed < 12; ++seed) {
    GeneratorConfig cfg;
    cfg.width = 8;
    cfg.height = 8;
    Problem p = generate_problem(seed, cfg);
    GreedySimHuman human(p, 2);
    EpisodeOptions eo;
    eo.collect_labels = true;
    Trace t = run_episode(p, human, &rule, eo);
    CHECK(t.outcome == Outcome::Completed);
    CHECK(is_goal(t.events.back().state_after, p));
    verify_trace(t, p);
    CHECK(t.replans.size() <= commands_in(t));

    TeamState before = initial_state(p);
    int last_tick = 0;
    for (const auto& e : t.events) {
      CHECK(e.tick > last_tick);
      last_tick = e.tick;
      if (e.action.is_move()) {
        REQUIRE(before.current_command.has_value());
        Cell goal = p.map.room(*before.current_command).cell;
        int d0 = relax_distance(p.map, before.robot_pos, goal, View::True);
        int d1 = relax_distance(p.map, e.state_after.robot_pos, goal, View::True);
        CHECK(d1 == d0 - 1);
        CHECK(e.label.has_value());
      }
      before = e.state_after;
    }

    GreedySimHuman again(p, 2);
    CHECK(run_episode(p, again, &rule, eo) == t);
  }
}

TEST_CASE("tick budget aborts") {
  Problem p = make_problem(6, 6, {{5, 5}}, {0, 0});
  GreedySimHuman human(p);
  EpisodeOptions eo;
  eo.tick_budget = 4;
  Trace t = run_episode(p, human, nullptr, eo);
  CHECK(t.outcome == Outcome::Aborted);
}

TEST_CASE("replanner keeps the plan when the command matches") {
  GeneratorConfig cfg;
  cfg.width = 8;
  cfg.height = 8;
  Problem p = generate_problem(17, cfg);
  RuleLabeler rule;
  Replanner rp(p, rule);
  CompositePlan before = rp.current().plan;
  Action first = before.actions.at(0);
  REQUIRE(first.is_command());
  CompositePlan observed{{first}};
  PlanResult r = rp.predict_and_replan(observed);
  CHECK_FALSE(rp.last_call_replanned());
  CHECK(r.plan == before);
  CompositePlan rest = rp.remainder();
  CHECK(rest.actions == std::vector<Action>(before.actions.begin() + 1, before.actions.end()));
}

TEST_CASE("replanner anchors a new plan on a deviating command") {
  GeneratorConfig cfg;
  cfg.width = 8;
  cfg.height = 8;
  Problem p = generate_problem(17, cfg);
  RuleLabeler rule;
  Replanner rp(p, rule);
  int predicted = rp.current().plan.actions.at(0).room;
  int other = predicted == 0 ? 1 : 0;
  CompositePlan observed{{Action::command(other)}};
  PlanResult r = rp.predict_and_replan(observed);
  CHECK(rp.last_call_replanned());
  CHECK(rp.replan_count() == 1);
  CHECK(r.plan.actions.at(0) == Action::command(other));
  CHECK(is_goal(replay(r.plan, p).back(), p));
}

TEST_CASE("one injected command change gives exactly one replan") {
  RuleLabeler rule;
  for (int seed = 30; seed < 36; ++seed) {
    GeneratorConfig cfg;
    cfg.width = 8;
    cfg.height = 8;
    Problem p = generate_problem(seed, cfg);
    auto run = testing_support::follow_with_injection(p, rule, 1);
    CHECK(run.trace.outcome == Outcome::Completed);
    CHECK(run.replans == 1);
    CHECK(run.trace.replans.size() == 1);
    REQUIRE(run.prefix_len >= 1);
    CHECK(run.plan_after.actions.at(run.prefix_len - 1) == Action::command(run.injected_room));
  }
}

TEST_CASE("judged sequence from a trace") {
  Problem p = make_problem(5, 1, {{0, 4}}, {0, 0});
  GreedySimHuman human(p);
  EpisodeOptions eo;
  eo.collect_labels = true;
  Trace t = run_episode(p, human, nullptr, eo);
  JudgedSequence s = to_judged_sequence(t, p);
  CHECK(s.size() == t.events.size());
  CHECK(s.labels[0] == Label::Explicable);

  GreedySimHuman fresh(p);
  Trace unjudged = run_episode(p, fresh, nullptr);
  CHECK_THROWS(to_judged_sequence(unjudged, p));
}
