// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "explicable/datakit.hpp"
#include "explicable/episode.hpp"
#include "explicable/io.hpp"
#include "explicable/labeler.hpp"
#include "explicable/planner.hpp"
#include "support.hpp"

using namespace explicable;
using testing_support::FnLabeler;
using testing_support::relax_distance;

namespace {

struct Result {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, double budget_s, const std::function<Result()>& body) {
  auto t0 = std::chrono::steady_clock::now();
  Result r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (s > budget_s) {
    r.pass = false;
    r.detail += " (over the " + std::to_string(static_cast<int>(budget_s)) + " s budget)";
  }
  failures += !r.pass;
  std::printf("%s  %-14s %8.3fs  %s\n", r.pass ? "PASS" : "FAIL", name, s, r.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Length of the greedy completion, computed from distances alone.
std::size_t greedy_length(const Problem& p, const TeamState& s) {
  std::size_t n = 0;
  Cell at = s.robot_pos;
  RoomSet visited = s.visited;
  if (s.current_command) {
    Cell target = p.map.room(*s.current_command).cell;
    n += static_cast<std::size_t>(relax_distance(p.map, at, target, View::True));
    at = target;
    visited.insert(*s.current_command);
  }
  for (;;) {
    int best = -1, best_d = 0;
    for (int r : p.goal.ids()) {
      if (visited.contains(r)) continue;
      int d = relax_distance(p.map, at, p.map.room(r).cell, View::True);
      if (best < 0 || d < best_d) best = r, best_d = d;
    }
    if (best < 0) return n;
    n += 1 + static_cast<std::size_t>(best_d);
    at = p.map.room(best).cell;
    visited.insert(best);
  }
}

struct RandomCrf {
  LabelerModel model;
  std::vector<JudgedSequence> corpus;
};

RandomCrf random_crf(std::mt19937& rng, int nf, int n_seq, int min_len, int max_len) {
  std::vector<std::string> names;
  for (int f = 0; f < nf; ++f) names.push_back("f" + std::to_string(f));
  RandomCrf rc{LabelerModel(FeatureIndex(names), 3.0), {}};
  std::normal_distribution<double> w(0.0, 1.0);
  for (double& x : rc.model.weights()) x = w(rng);
  std::uniform_real_distribution<double> val(-1.5, 1.5);
  for (int s = 0; s < n_seq; ++s) {
    JudgedSequence seq;
    int len = min_len + static_cast<int>(rng() % static_cast<unsigned>(max_len - min_len + 1));
    for (int t = 0; t < len; ++t) {
      FeatureVector fv;
      for (int f = 0; f < nf; ++f) {
        if (rng() % 3) fv.entries.emplace_back(f, val(rng));
      }
      seq.features.push_back(fv);
      seq.labels.push_back(rng() % 2 ? Label::Explicable : Label::Inexplicable);
    }
    rc.corpus.push_back(seq);
  }
  return rc;
}

Trace simulate(const Problem& p) {
  GreedySimHuman human(p);
  EpisodeOptions eo;
  eo.collect_labels = true;
  eo.trace_id = "sim-" + p.id;
  return run_episode(p, human, nullptr, eo);
}

}  // namespace

int main() {
  criterion("score", 1, [] {
    using L = Label;
    std::vector<L> a(4, L::Explicable), b(2, L::Inexplicable);
    std::vector<L> c = {L::Explicable, L::Inexplicable, L::Explicable, L::Explicable, L::Explicable,
                        L::Inexplicable, L::Explicable, L::Explicable, L::Inexplicable, L::Explicable};
    double fa = explicability_score(a), fb = explicability_score(b), fc = explicability_score(c);
    return Result{fa == 1.0 && fb == 0.0 && fc == 0.7, fmt("%.17g %.17g %.17g", fa, fb, fc)};
  });

  criterion("heuristic", 1, [] {
    std::mt19937 rng(2024);
    GeneratorConfig cfg;
    cfg.width = 7;
    cfg.height = 7;
    double worst = 0.0;
    int triples = 0;
    for (int trial = 0; trial < 150; ++trial) {
      Problem p = generate_problem(3000 + static_cast<std::uint64_t>(trial % 15), cfg);
      // Random valid prefix.
      SearchNode node;
      node.state = initial_state(p);
      int len = static_cast<int>(rng() % 12);
      for (int k = 0; k < len && !is_goal(node.state, p); ++k) {
        auto acts = legal_actions(node.state, p.map, Agent::Robot);
        auto human = legal_actions(node.state, p.map, Agent::Human);
        if (acts.empty() || rng() % 4 == 0) acts.insert(acts.end(), human.begin(), human.end());
        if (acts.empty()) break;
        Action a = acts[rng() % acts.size()];
        node.state = apply_action(node.state, a, p.map);
        node.path.actions.push_back(a);
      }
      node.g = static_cast<double>(node.path.size());
      std::size_t rp = greedy_length(p, node.state);
      std::size_t n = node.path.size() + rp;
      std::vector<Label> labels(n);
      int explicable = 0;
      double bias = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      for (auto& l : labels) {
        bool e = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < bias;
        l = e ? Label::Explicable : Label::Inexplicable;
        explicable += e;
      }
      FnLabeler stub([labels](std::size_t i, const CompositePlan&) { return labels.at(i); });
      double h = explicable_heuristic(node, p, stub);
      double F = n == 0 ? 1.0 : static_cast<double>(explicable) / static_cast<double>(n);
      double expected = rp == 0 ? 0.0
                                : (1.0 - F) * static_cast<double>(n) * static_cast<double>(rp) +
                                      static_cast<double>(rp);
      worst = std::max(worst, std::abs(h - expected));
      ++triples;
    }
    return Result{triples >= 100 && worst <= 1e-12,
                    fmt("%.0f triples, max |error| %.3g", triples, worst)};
  });

  criterion("reduction", 30, [] {
    GeneratorConfig cfg;
    cfg.width = 8;
    cfg.height = 8;
    cfg.n_rooms = 4;
    cfg.min_visible = 2;
    cfg.max_visible = 5;
    cfg.n_hidden = 2;
    FnLabeler all = testing_support::all_explicable();
    int equal = 0;
    std::string mismatches;
    for (int seed = 0; seed < 20; ++seed) {
      Problem p = generate_problem(static_cast<std::uint64_t>(seed), cfg);
      double a = plan_explicable(p, all).cost, b = plan_baseline(p, &all).cost;
      if (a == b) ++equal; else mismatches += " seed " + std::to_string(seed);
    }
    return Result{equal == 20, fmt("%.0f/20 equal costs", equal) + mismatches};
  });

  criterion("oracle", 120, [] {
    GeneratorConfig cfg;
    cfg.width = 5;
    cfg.height = 5;
    cfg.min_visible = 2;
    cfg.max_visible = 4;
    cfg.n_hidden = 2;
    RuleLabeler rule;
    int ok = 0, strictly_worse = 0;
    double worst_gap = -1e300;
    std::string notes;
    for (int seed = 0; seed < 12; ++seed) {
      cfg.n_rooms = seed % 3 == 0 ? 1 : 2;
      Problem p = generate_problem(700 + static_cast<std::uint64_t>(seed), cfg);
      p.alpha = 1.0;
      PlanResult s = plan_explicable(p, rule);
      PlanResult b = plan_baseline(p, &rule);
      double obj_s = plan_objective(s.plan, s.labels, 1.0);
      double obj_b = plan_objective(b.plan, b.labels, 1.0);
      // No plan longer than a known objective value can beat it.
      int max_len = static_cast<int>(std::floor(std::min(obj_s, obj_b) + 1e-9));
      PlanResult o = brute_force_oracle(p, rule, max_len);
      double obj_o = plan_objective(o.plan, o.labels, 1.0);
      double gap = obj_s - obj_o;
      worst_gap = std::max(worst_gap, gap);
      if (gap <= 1e-9) {
        ++ok;
      } else {
        ++strictly_worse;
        notes += fmt(" [seed %.0f: search %.4g vs oracle %.4g]", 700 + seed, obj_s, obj_o);
      }
    }
    return Result{ok == 12, fmt("%.0f/12 no worse than the oracle, max gap %.3g", ok, worst_gap) + notes};
  });

  criterion("crf", 30, [] {
    std::mt19937 rng(99);
    double worst_rel = 0.0;
    for (int m = 0; m < 20; ++m) {
      RandomCrf rc = random_crf(rng, 3, 3, 1, 6);
      std::vector<double> g = gradient(rc.model, rc.corpus);
      const double eps = 1e-5;
      for (std::size_t k = 0; k < g.size(); ++k) {
        LabelerModel plus = rc.model, minus = rc.model;
        plus.weights()[k] += eps;
        minus.weights()[k] -= eps;
        double fd = (objective(plus, rc.corpus) - objective(minus, rc.corpus)) / (2 * eps);
        worst_rel = std::max(worst_rel, std::abs(fd - g[k]) / std::max(1.0, std::abs(fd)));
      }
    }
    double worst_norm = 0.0;
    bool viterbi_ok = true;
    for (int len = 1; len <= 8; ++len) {
      for (int rep = 0; rep < 5; ++rep) {
        RandomCrf rc = random_crf(rng, 4, 1, len, len);
        const auto& f = rc.corpus[0].features;
        double logz = rc.model.log_partition(f);
        std::vector<Label> best = rc.model.decode(f);
        double best_score = rc.model.score(f, best);
        double total = 0.0;
        for (std::uint32_t mask = 0; mask < (1U << len); ++mask) {
          std::vector<Label> y(static_cast<std::size_t>(len));
          for (int t = 0; t < len; ++t) y[static_cast<std::size_t>(t)] = (mask >> t) & 1U ? Label::Inexplicable : Label::Explicable;
          double sc = rc.model.score(f, y);
          total += std::exp(sc - logz);
          if (sc > best_score + 1e-12) viterbi_ok = false;
        }
        worst_norm = std::max(worst_norm, std::abs(total - 1.0));
      }
    }
    bool pass = worst_rel <= 1e-4 && worst_norm <= 1e-10 && viterbi_ok;
    return Result{pass, fmt("grad rel err %.3g, normalization err %.3g, viterbi ", worst_rel, worst_norm) +
                              (viterbi_ok ? "maximal" : "beaten")};
  });

  criterion("learning", 120, [] {
    ProblemSet set = generate_problem_set(5000, 200, Split::Train);
    std::vector<JudgedSequence> train_set, held_out;
    for (std::size_t i = 0; i < set.problems.size(); ++i) {
      const Problem& p = set.problems[i];
      (i < 160 ? train_set : held_out).push_back(to_judged_sequence(simulate(p), p));
    }
    LabelerModel m = train(train_set);
    int right = 0, total = 0;
    for (const auto& s : held_out) {
      auto y = m.decode(s.features);
      for (std::size_t t = 0; t < y.size(); ++t) right += y[t] == s.labels[t], ++total;
    }
    double acc = static_cast<double>(right) / total;
    return Result{acc >= 0.95, fmt("held-out token accuracy %.4f over %.0f tokens", acc, total)};
  });

  criterion("end-to-end", 300, [] {
    ProblemSet train_problems = generate_problem_set(100, 16, Split::Train);
    ProblemSet test = generate_problem_set(200, 4, Split::Test);
    std::vector<JudgedTrace> corpus;
    for (const auto& p : train_problems.problems) corpus.push_back({simulate(p), p});
    LabelerModel m = train(augment(corpus, 50, 1));
    std::vector<Trace> human;
    for (const auto& p : test.problems) human.push_back(simulate(p));
    EvalReport r = evaluate(test, m, &human);
    double ex = r.row(PlanType::Explicable)->ratio, ff = r.row(PlanType::Baseline)->ratio;
    double hu = r.row(PlanType::Human)->ratio;
    int wins = 0;
    std::string per;
    for (const auto& id : r.scenarios) {
      double se = *r.scenario_score(id, PlanType::Explicable);
      double sb = *r.scenario_score(id, PlanType::Baseline);
      wins += se >= sb;
      per += fmt(" (%.3f, %.3f)", sb, se);
    }
    bool pass = ex >= ff && wins >= 3;
    return Result{pass, fmt("explicable %.3f, baseline %.3f, simulated human %.3f;", ex, ff, hu) +
                              fmt(" %.0f/4 scenarios explicable >= baseline; (baseline, explicable):", wins) + per};
  });

  criterion("replanning", 5, [] {
    GeneratorConfig cfg;
    Problem p = generate_problem(4242, cfg);
    RuleLabeler rule;
    auto run = testing_support::follow_with_injection(p, rule, 1);
    bool anchored = run.prefix_len >= 1 && run.prefix_len <= run.plan_after.size() &&
                    run.plan_after.actions[run.prefix_len - 1] == Action::command(run.injected_room);
    bool pass = run.replans == 1 && run.trace.outcome == Outcome::Completed && anchored;
    return Result{pass, fmt("%.0f replan(s), outcome ", static_cast<double>(run.replans)) +
                              std::string(to_string(run.trace.outcome)) +
                              (anchored ? ", new plan anchored on the observed command"
                                        : ", new plan does not start from the observed command")};
  });

  criterion("determinism", 120, [] {
    auto artifacts = [] {
      std::vector<std::string> out;
      ProblemSet set = generate_problem_set(31337, 6, Split::Train);
      out.push_back(to_json(set).dump());
      std::vector<JudgedTrace> corpus;
      for (const auto& p : set.problems) corpus.push_back({simulate(p), p});
      for (const auto& jt : corpus) out.push_back(trace_to_jsonl(jt.trace));
      auto seqs = augment(corpus, 30, 8);
      out.push_back(corpus_to_jsonl(seqs));
      LabelerModel m = train(seqs);
      out.push_back(to_json(m).dump());
      for (const auto& p : set.problems) {
        out.push_back(to_json(plan_explicable(p, m).plan).dump());
        out.push_back(to_json(plan_baseline(p, &m).plan).dump());
      }
      return out;
    };
    auto a = artifacts(), b = artifacts();
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
    return Result{a.size() == b.size() && same == a.size(),
                    fmt("%.0f/%.0f artifacts byte-identical", same, a.size())};
  });

  std::printf("%d failure(s)\n", failures);
  return failures;
}
