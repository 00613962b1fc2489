#include "explicable/datakit.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace explicable {

namespace {

// Uniform draw in [0, n) from the 64-bit engine; the modulo bias is far
// below anything the generator cares about.
std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw(rng, i)]);
}

}  // namespace

Problem generate_problem(std::uint64_t seed, const GeneratorConfig& config) {
  if (config.width <= 0 || config.height <= 0) {
    throw std::invalid_argument("grid dimensions must be positive");
  }
  if (config.n_rooms < 0 || config.n_rooms > RoomSet::kMaxRooms || config.min_visible < 0 ||
      config.max_visible < config.min_visible || config.n_hidden < 0) {
    throw std::invalid_argument("generator counts out of range");
  }
  const int area = config.width * config.height;
  if (1 + config.n_rooms + config.max_visible + config.n_hidden > area) {
    throw std::invalid_argument("grid too small for the requested rooms and obstacles");
  }

  std::mt19937_64 rng(seed);
  std::vector<Cell> all;
  for (int r = 0; r < config.height; ++r) {
    for (int c = 0; c < config.width; ++c) all.push_back({r, c});
  }

  for (int round = 0; round < 10'000; ++round) {
    std::vector<Cell> cells = all;
    shuffle(cells, rng);
    std::size_t next = 0;
    GridMap map;
    map.width = config.width;
    map.height = config.height;
    map.robot_start = cells[next++];
    for (int i = 0; i < config.n_rooms; ++i) map.rooms.push_back({i, cells[next++]});
    const int n_visible =
        config.min_visible +
        static_cast<int>(draw(rng, static_cast<std::size_t>(config.max_visible - config.min_visible + 1)));
    for (int i = 0; i < n_visible; ++i) map.visible_obstacles.insert(cells[next++]);

    std::set<Cell> reserved(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(next));
    std::vector<Cell> candidates;
    if (config.hidden_on_paths && config.n_hidden > 0) {
      std::vector<Cell> endpoints{map.robot_start};
      for (const Room& r : map.rooms) endpoints.push_back(r.cell);
      std::set<Cell> on_paths;
      for (std::size_t a = 0; a < endpoints.size(); ++a) {
        for (std::size_t b = a + 1; b < endpoints.size(); ++b) {
          std::vector<Direction> path;
          try {
            path = bfs_path(map, endpoints[a], endpoints[b], View::Human);
          } catch (const NoPath&) {
            continue;
          }
          Cell c = endpoints[a];
          for (Direction d : path) {
            c = step(c, d);
            if (!reserved.contains(c)) on_paths.insert(c);
          }
        }
      }
      candidates.assign(on_paths.begin(), on_paths.end());
      shuffle(candidates, rng);
    }
    for (std::size_t i = next; i < cells.size(); ++i) {
      if (std::find(candidates.begin(), candidates.end(), cells[i]) == candidates.end()) {
        candidates.push_back(cells[i]);
      }
    }
    for (int i = 0; i < config.n_hidden; ++i) {
      map.hidden_obstacles.insert(candidates[static_cast<std::size_t>(i)]);
    }

    try {
      map.validate();
    } catch (const InvalidMap&) {
      continue;
    }
    Problem p;
    p.id = "p" + std::to_string(seed);
    p.map = std::move(map);
    p.goal = RoomSet::all(config.n_rooms);
    p.alpha = config.alpha;
    p.notes = "generated seed=" + std::to_string(seed) + " round=" + std::to_string(round);
    return p;
  }
  throw Unsatisfiable("no valid placement after 10000 rounds (seed " + std::to_string(seed) + ")");
}

std::string_view to_string(Split s) { return s == Split::Train ? "TRAIN" : "TEST"; }

Split split_from_string(std::string_view s) {
  if (s == "TRAIN" || s == "train") return Split::Train;
  if (s == "TEST" || s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

const Problem& ProblemSet::find(const std::string& id) const {
  for (const Problem& p : problems) {
    if (p.id == id) return p;
  }
  throw std::out_of_range("no problem with id '" + id + "'");
}

ProblemSet generate_problem_set(std::uint64_t seed, int count, Split split,
                                const GeneratorConfig& config) {
  ProblemSet set;
  set.split = split;
  const std::string prefix = split == Split::Train ? "train-" : "test-";
  for (int i = 0; i < count; ++i) {
    Problem p = generate_problem(seed + static_cast<std::uint64_t>(i), config);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d", i);
    p.id = prefix + buf;
    set.problems.push_back(std::move(p));
  }
  return set;
}

namespace {

void check_permutation(const std::vector<int>& perm) {
  std::vector<char> hit(perm.size(), 0);
  for (int v : perm) {
    if (v < 0 || v >= static_cast<int>(perm.size()) || hit[static_cast<std::size_t>(v)]) {
      throw InvalidPermutation("room permutation is not a bijection");
    }
    hit[static_cast<std::size_t>(v)] = 1;
  }
}

int apply_perm(const std::vector<int>& perm, int room) {
  if (room < 0 || room >= static_cast<int>(perm.size())) {
    throw InvalidPermutation("room " + std::to_string(room) + " outside the permutation");
  }
  return perm[static_cast<std::size_t>(room)];
}

RoomSet permute_set(const std::vector<int>& perm, RoomSet s) {
  RoomSet out;
  for (int id : s.ids()) out.insert(apply_perm(perm, id));
  return out;
}

}  // namespace

Problem permute_problem(const Problem& problem, const std::vector<int>& permutation) {
  check_permutation(permutation);
  if (permutation.size() != problem.map.rooms.size()) {
    throw InvalidPermutation("permutation size does not match the room count");
  }
  Problem out = problem;
  for (const Room& r : problem.map.rooms) {
    int id = apply_perm(permutation, r.id);
    out.map.rooms[static_cast<std::size_t>(id)] = {id, r.cell};
  }
  out.goal = permute_set(permutation, problem.goal);
  return out;
}

Trace permute_trace(const Trace& trace, const std::vector<int>& permutation) {
  check_permutation(permutation);
  Trace out = trace;
  for (TraceEvent& e : out.events) {
    if (e.action.is_command()) e.action.room = apply_perm(permutation, e.action.room);
    e.state_after.visited = permute_set(permutation, e.state_after.visited);
    if (e.state_after.current_command) {
      e.state_after.current_command = apply_perm(permutation, *e.state_after.current_command);
    }
  }
  for (ReplanEvent& r : out.replans) r.observed_room = apply_perm(permutation, r.observed_room);
  return out;
}

std::vector<JudgedSequence> augment(const std::vector<JudgedTrace>& corpus, int n_per_trace,
                                    std::uint64_t seed) {
  if (n_per_trace < 0) throw std::invalid_argument("n_per_trace must be nonnegative");
  std::mt19937_64 rng(seed);
  std::vector<JudgedSequence> out;
  out.reserve(corpus.size() * static_cast<std::size_t>(n_per_trace + 1));
  for (const JudgedTrace& item : corpus) {
    out.push_back(to_judged_sequence(item.trace, item.problem));
    std::vector<int> perm(item.problem.map.rooms.size());
    for (int i = 0; i < n_per_trace; ++i) {
      std::iota(perm.begin(), perm.end(), 0);
      shuffle(perm, rng);
      out.push_back(to_judged_sequence(permute_trace(item.trace, perm),
                                       permute_problem(item.problem, perm)));
    }
  }
  return out;
}

std::string_view to_string(PlanType t) {
  switch (t) {
    case PlanType::Explicable: return "EXPLICABLE";
    case PlanType::Baseline: return "BASELINE";
    case PlanType::Human: return "HUMAN";
  }
  return "?";
}

PlanType plan_type_from_string(std::string_view s) {
  for (PlanType t : {PlanType::Explicable, PlanType::Baseline, PlanType::Human}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown plan type '" + std::string(s) + "'");
}

int ScoredPlan::explicable() const {
  return static_cast<int>(std::count(labels.begin(), labels.end(), Label::Explicable));
}

double ScoredPlan::score() const { return labels.empty() ? 1.0 : explicability_score(labels); }

const EvalRow* EvalReport::row(PlanType t) const {
  for (const EvalRow& r : rows) {
    if (r.type == t) return &r;
  }
  return nullptr;
}

std::optional<double> EvalReport::scenario_score(const std::string& problem_id, PlanType t) const {
  for (const ScoredPlan& p : plans) {
    if (p.problem_id == problem_id && p.type == t) return p.score();
  }
  return std::nullopt;
}

std::vector<EvalRow> recompute_rows(const EvalReport& report) {
  std::vector<EvalRow> rows;
  for (PlanType t : {PlanType::Explicable, PlanType::Baseline, PlanType::Human}) {
    EvalRow row{t, 0.0, 0, 0};
    bool any = false;
    for (const ScoredPlan& p : report.plans) {
      if (p.type != t) continue;
      any = true;
      row.explicable += p.explicable();
      row.total += p.total();
    }
    if (!any) continue;
    row.ratio = row.total == 0 ? 1.0 : static_cast<double>(row.explicable) / row.total;
    rows.push_back(row);
  }
  return rows;
}

EvalReport evaluate(const ProblemSet& test, const LabelerModel& model,
                    const std::vector<Trace>* human_traces, const SearchOptions& search) {
  std::map<std::string, const Trace*> by_problem;
  if (human_traces) {
    for (const Trace& t : *human_traces) by_problem.try_emplace(t.problem_ref, &t);
    for (const Problem& p : test.problems) {
      if (!by_problem.contains(p.id)) {
        throw MissingTrace("no human trace for test problem '" + p.id + "'");
      }
    }
  }

  // Each problem is planned independently; results join in input order.
  std::vector<std::future<std::vector<ScoredPlan>>> jobs;
  for (const Problem& problem : test.problems) {
    jobs.push_back(std::async(std::launch::async, [&problem, &model, &search, &by_problem,
                                                   human_traces] {
      std::vector<ScoredPlan> out;
      PlanResult expl = plan_explicable(problem, model, search);
      out.push_back({problem.id, PlanType::Explicable, expl.plan, expl.labels});
      PlanResult base = plan_baseline(problem, &model, search);
      out.push_back({problem.id, PlanType::Baseline, base.plan, base.labels});
      if (human_traces) {
        CompositePlan human = by_problem.at(problem.id)->plan();
        out.push_back({problem.id, PlanType::Human, human, model.label(human, problem)});
      }
      return out;
    }));
  }

  EvalReport report;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    report.scenarios.push_back(test.problems[i].id);
    for (ScoredPlan& p : jobs[i].get()) report.plans.push_back(std::move(p));
  }
  report.rows = recompute_rows(report);
  return report;
}

std::string format_report(const EvalReport& report) {
  auto row_name = [](PlanType t) -> std::string {
    switch (t) {
      case PlanType::Explicable: return "Interactive Explicable Plan";
      case PlanType::Baseline: return "Baseline (cost-optimal) Plan";
      case PlanType::Human: return "Human Plan";
    }
    return "?";
  };
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << std::left << std::setw(30) << "Plan Type" << "| Interactive Explicability Score\n";
  os << std::string(30, '-') << "+" << std::string(33, '-') << "\n";
  for (const EvalRow& r : report.rows) {
    os << std::setw(30) << row_name(r.type) << "| " << r.ratio << "  (" << r.explicable << "/"
       << r.total << ")\n";
  }
  os << "\n";
  bool has_human = report.row(PlanType::Human) != nullptr;
  os << std::setw(12) << "Scenario" << "| " << std::setw(10) << "Baseline" << "| "
     << std::setw(11) << "Explicable";
  if (has_human) os << "| Human";
  os << "\n";
  int n = 1;
  for (const std::string& id : report.scenarios) {
    os << std::setw(12) << (std::to_string(n++) + " " + id) << "| " << std::setw(10)
       << report.scenario_score(id, PlanType::Baseline).value_or(0.0) << "| " << std::setw(11)
       << report.scenario_score(id, PlanType::Explicable).value_or(0.0);
    if (has_human) os << "| " << report.scenario_score(id, PlanType::Human).value_or(0.0);
    os << "\n";
  }
  return os.str();
}

}  // namespace explicable
