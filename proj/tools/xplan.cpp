// xplan: command-line driver for generation, training, planning, episodes,
// evaluation and the live session server.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>

#include "explicable/datakit.hpp"
#include "explicable/episode.hpp"
#include "explicable/io.hpp"
#include "explicable/labeler.hpp"
#include "explicable/planner.hpp"
#include "explicable/session.hpp"

using namespace explicable;

namespace {

constexpr int kValidationExit = 2;

// "rule" selects the deviation-rule judge instead of a trained model file.
std::unique_ptr<Labeler> load_labeler(const std::string& spec) {
  if (spec == "rule") return std::make_unique<RuleLabeler>();
  return std::make_unique<LabelerModel>(load_model(spec));
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file(out, text);
  }
}

std::string render(const Problem& p, const std::optional<Cell>& robot = std::nullopt) {
  std::string s;
  for (int r = 0; r < p.map.height; ++r) {
    for (int c = 0; c < p.map.width; ++c) {
      Cell cell{r, c};
      char ch = '.';
      if (p.map.visible_obstacles.count(cell)) ch = '#';
      if (p.map.hidden_obstacles.count(cell)) ch = 'x';
      if (auto room = p.map.room_at(cell)) ch = static_cast<char>('0' + *room % 10);
      if (cell == robot.value_or(p.map.robot_start)) ch = 'R';
      s += ch;
    }
    s += '\n';
  }
  return s;
}

Json plan_json(const Problem& p, const std::string& mode, const PlanResult& r) {
  Json labels = Json::array();
  for (Label l : r.labels) labels.push_back(std::string(to_string(l)));
  return {{"version", kFormatVersion},
          {"problem", p.id},
          {"mode", mode},
          {"cost", r.cost},
          {"explicability_score", r.explicability_score},
          {"nodes_expanded", r.nodes_expanded},
          {"plan", to_json(r.plan)},
          {"labels", labels}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive explicable planning toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a seeded problem set");
  std::uint64_t gen_seed = 0;
  int gen_count = 1;
  std::string gen_out, gen_split = "train";
  GeneratorConfig gen_config;
  gen->add_option("--seed", gen_seed)->required();
  gen->add_option("--count", gen_count)->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--split", gen_split)->check(CLI::IsMember({"train", "test"}));
  gen->add_option("--width", gen_config.width);
  gen->add_option("--height", gen_config.height);
  gen->add_option("--rooms", gen_config.n_rooms);
  gen->add_option("--min-visible", gen_config.min_visible);
  gen->add_option("--max-visible", gen_config.max_visible);
  gen->add_option("--hidden", gen_config.n_hidden);
  gen->add_option("--alpha", gen_config.alpha);

  // train
  auto* tr = app.add_subcommand("train", "Train the labeler from judged traces");
  std::string tr_corpus, tr_problems, tr_out, tr_dump;
  TrainOptions tr_options;
  int tr_augment = 0;
  std::uint64_t tr_seed = 0;
  tr->add_option("--corpus", tr_corpus, "Trace JSONL file")->required();
  tr->add_option("--problems", tr_problems, "Problem set the traces refer to")->required();
  tr->add_option("--out", tr_out)->required();
  tr->add_option("--sigma", tr_options.l2_sigma)->check(CLI::PositiveNumber);
  tr->add_option("--max-iter", tr_options.max_iter)->check(CLI::NonNegativeNumber);
  tr->add_option("--tol", tr_options.tol);
  tr->add_option("--augment", tr_augment, "Room permutations per trace")->check(CLI::NonNegativeNumber);
  tr->add_option("--seed", tr_seed, "Augmentation seed");
  tr->add_option("--dump-corpus", tr_dump, "Write the augmented corpus as JSONL");

  // plan
  auto* pl = app.add_subcommand("plan", "Plan one problem");
  std::string pl_problem, pl_model = "rule", pl_mode = "explicable", pl_out, pl_id;
  std::size_t pl_budget = SearchOptions{}.expansion_budget;
  pl->add_option("--problem", pl_problem)->required();
  pl->add_option("--id", pl_id, "Problem id when --problem is a set");
  pl->add_option("--model", pl_model, "Model file, or 'rule'");
  pl->add_option("--mode", pl_mode)->check(CLI::IsMember({"explicable", "baseline"}));
  pl->add_option("--budget", pl_budget);
  pl->add_option("--out", pl_out);
  bool pl_show = false;
  pl->add_flag("--show", pl_show, "Print the map and plan as text");

  // run
  auto* run = app.add_subcommand("run", "Run episodes with a simulated or live human");
  std::string run_problem, run_human = "sim", run_model, run_out, run_id, run_trace_dir;
  bool run_collect = false;
  int run_patience = 3;
  std::uint16_t run_port = 8080;
  run->add_option("--problem", run_problem)->required();
  run->add_option("--id", run_id, "Only this problem of a set");
  run->add_option("--human", run_human)->check(CLI::IsMember({"sim", "live"}));
  run->add_flag("--collect-labels", run_collect);
  run->add_option("--model", run_model, "Labeler for the replanner, or 'rule'");
  run->add_option("--patience", run_patience)->check(CLI::PositiveNumber);
  run->add_option("--out", run_out, "Trace JSONL output");
  run->add_option("--port", run_port, "Live mode port");
  run->add_option("--trace-dir", run_trace_dir, "Live mode trace directory");

  // eval
  auto* ev = app.add_subcommand("eval", "Compare explicable and baseline plans on a test set");
  std::string ev_test, ev_model, ev_human, ev_out;
  ev->add_option("--testset", ev_test)->required();
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--human-traces", ev_human);
  ev->add_option("--out", ev_out, "Report JSON");

  // serve
  auto* sv = app.add_subcommand("serve", "Host live episodes");
  std::uint16_t sv_port = 8080;
  std::string sv_problems, sv_trace_dir, sv_address = "127.0.0.1";
  int sv_delay = 1000, sv_timeout = 120;
  sv->add_option("--port", sv_port);
  sv->add_option("--problems", sv_problems)->required();
  sv->add_option("--address", sv_address);
  sv->add_option("--trace-dir", sv_trace_dir);
  sv->add_option("--delay-ms", sv_delay)->check(CLI::NonNegativeNumber);
  sv->add_option("--timeout-s", sv_timeout)->check(CLI::PositiveNumber);

  // oracle
  auto* orc = app.add_subcommand("oracle", "Exhaustive minimum-objective plan (small problems)");
  std::string orc_problem, orc_model = "rule", orc_id;
  int orc_max_len = 12;
  orc->add_option("--problem", orc_problem)->required();
  orc->add_option("--id", orc_id);
  orc->add_option("--model", orc_model, "Model file, or 'rule'");
  orc->add_option("--max-len", orc_max_len)->check(CLI::PositiveNumber);

  // show
  auto* sh = app.add_subcommand("show", "Render problems or replay a trace as text");
  std::string sh_problem, sh_trace;
  sh->add_option("--problem", sh_problem)->required();
  sh->add_option("--trace", sh_trace);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kValidationExit;
  }

  auto pick = [](const ProblemSet& set, const std::string& id) -> const Problem& {
    if (id.empty()) {
      if (set.problems.size() != 1) throw std::invalid_argument("set has several problems; pass --id");
      return set.problems.front();
    }
    return set.find(id);
  };

  try {
    if (*gen) {
      ProblemSet set = generate_problem_set(gen_seed, gen_count, split_from_string(gen_split), gen_config);
      save_problem_set(gen_out, set);
      std::cerr << "wrote " << set.problems.size() << " problems to " << gen_out << "\n";
    } else if (*tr) {
      ProblemSet problems = load_problem_set(tr_problems);
      std::vector<JudgedTrace> corpus;
      for (Trace& t : load_traces(tr_corpus)) {
        const Problem& p = problems.find(t.problem_ref);
        corpus.push_back({std::move(t), p});
      }
      std::vector<JudgedSequence> sequences = augment(corpus, tr_augment, tr_seed);
      if (!tr_dump.empty()) write_file(tr_dump, corpus_to_jsonl(sequences));
      LabelerModel model = train(sequences, tr_options);
      save_model(tr_out, model);
      const TrainingStats& st = model.stats();
      std::cerr << "trained on " << st.sequences << " sequences / " << st.tokens << " tokens: "
                << st.iterations << " iterations, objective " << st.final_objective
                << (st.converged ? ", converged" : ", not converged") << "\n";
      for (const auto& w : st.warnings) std::cerr << "warning: " << w << "\n";
    } else if (*pl) {
      ProblemSet set = load_problem_set(pl_problem);
      const Problem& p = pick(set, pl_id);
      SearchOptions so;
      so.expansion_budget = pl_budget;
      std::unique_ptr<Labeler> labeler = load_labeler(pl_model);
      PlanResult r = pl_mode == "explicable" ? plan_explicable(p, *labeler, so)
                                             : plan_baseline(p, labeler.get(), so);
      emit(pl_out, plan_json(p, pl_mode, r).dump(2) + "\n");
      if (pl_show) {
        std::cerr << render(p) << to_string(r.plan) << "\n";
      }
    } else if (*run) {
      ProblemSet set = load_problem_set(run_problem);
      if (run_human == "live") {
        if (!run_id.empty()) set.problems = {set.find(run_id)};
        session::ServeOptions so;
        so.trace_dir = run_trace_dir;
        session::serve(run_port, std::move(set), so);
        return 0;
      }
      std::unique_ptr<Labeler> labeler;
      if (!run_model.empty()) labeler = load_labeler(run_model);
      std::string out;
      for (const Problem& p : set.problems) {
        if (!run_id.empty() && p.id != run_id) continue;
        GreedySimHuman human(p, run_patience);
        EpisodeOptions eo;
        eo.collect_labels = run_collect;
        eo.trace_id = "sim-" + p.id;
        Trace t = run_episode(p, human, labeler.get(), eo);
        std::cerr << t.trace_id << ": " << to_string(t.outcome) << ", " << t.events.size()
                  << " events, " << t.replans.size() << " replans\n";
        out += trace_to_jsonl(t);
      }
      emit(run_out, out);
    } else if (*ev) {
      ProblemSet test = load_problem_set(ev_test);
      LabelerModel model = load_model(ev_model);
      std::optional<std::vector<Trace>> human;
      if (!ev_human.empty()) human = load_traces(ev_human);
      EvalReport report = evaluate(test, model, human ? &*human : nullptr);
      std::cout << format_report(report);
      if (!ev_out.empty()) save_report(ev_out, report);
    } else if (*sv) {
      session::ServeOptions so;
      so.address = sv_address;
      so.trace_dir = sv_trace_dir;
      so.action_delay = std::chrono::milliseconds(sv_delay);
      so.idle_timeout = std::chrono::seconds(sv_timeout);
      session::serve(sv_port, load_problem_set(sv_problems), so);
    } else if (*orc) {
      ProblemSet set = load_problem_set(orc_problem);
      const Problem& p = pick(set, orc_id);
      std::unique_ptr<Labeler> labeler = load_labeler(orc_model);
      PlanResult r = brute_force_oracle(p, *labeler, orc_max_len);
      Json j = plan_json(p, "oracle", r);
      j["objective"] = plan_objective(r.plan, r.labels, p.alpha);
      std::cout << j.dump(2) << "\n";
    } else if (*sh) {
      ProblemSet set = load_problem_set(sh_problem);
      if (sh_trace.empty()) {
        for (const Problem& p : set.problems) std::cout << p.id << "\n" << render(p) << "\n";
      } else {
        for (const Trace& t : load_traces(sh_trace)) {
          const Problem& p = set.find(t.problem_ref);
          verify_trace(t, p);
          std::cout << t.trace_id << " (" << to_string(t.outcome) << ")\n" << render(p) << "\n";
          for (const TraceEvent& e : t.events) {
            std::cout << e.tick << " " << to_string(e.action);
            if (e.label) std::cout << " " << to_string(*e.label);
            std::cout << "\n";
          }
        }
      }
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationExit;
  } catch (const InvalidMap& e) {
    std::cerr << "invalid map: " << e.what() << "\n";
    return kValidationExit;
  } catch (const InvalidPlan& e) {
    std::cerr << "invalid plan: " << e.what() << "\n";
    return kValidationExit;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationExit;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
