#include "explicable/planner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <queue>
#include <unordered_map>

namespace explicable {

std::vector<Direction> bfs_path(const GridMap& map, Cell from, Cell to, View view) {
  if (map.blocked(from, view) || map.blocked(to, view)) {
    throw NoPath("bfs_path: endpoint blocked or out of bounds");
  }
  if (from == to) return {};
  const auto area = static_cast<std::size_t>(map.width * map.height);
  auto idx = [&](Cell c) { return static_cast<std::size_t>(c.row * map.width + c.col); };
  std::vector<int> parent_dir(area, -1);
  std::vector<char> seen(area, 0);
  std::deque<Cell> frontier{from};
  seen[idx(from)] = 1;
  bool found = false;
  while (!frontier.empty() && !found) {
    Cell c = frontier.front();
    frontier.pop_front();
    for (Direction d : kDirections) {
      Cell n = step(c, d);
      if (map.blocked(n, view) || seen[idx(n)]) continue;
      seen[idx(n)] = 1;
      parent_dir[idx(n)] = static_cast<int>(d);
      if (n == to) {
        found = true;
        break;
      }
      frontier.push_back(n);
    }
  }
  if (!found) throw NoPath("bfs_path: target unreachable");
  std::vector<Direction> path;
  for (Cell c = to; c != from;) {
    auto d = static_cast<Direction>(parent_dir[idx(c)]);
    path.push_back(d);
    switch (d) {
      case Direction::Up: c = step(c, Direction::Down); break;
      case Direction::Down: c = step(c, Direction::Up); break;
      case Direction::Left: c = step(c, Direction::Right); break;
      case Direction::Right: c = step(c, Direction::Left); break;
    }
  }
  std::reverse(path.begin(), path.end());
  return path;
}

PathOracle::PathOracle(const Problem& problem) : problem_(&problem), features_(problem) {}

const std::vector<Direction>& PathOracle::path(Cell from, Cell to) {
  auto key = std::make_pair(from, to);
  auto it = paths_.find(key);
  if (it == paths_.end()) {
    it = paths_.emplace(key, bfs_path(problem_->map, from, to, View::True)).first;
  }
  return it->second;
}

CompositePlan relaxed_plan(const TeamState& state, PathOracle& oracle) {
  const Problem& problem = oracle.problem();
  const GridMap& map = problem.map;
  CompositePlan rp;
  Cell pos = state.robot_pos;
  RoomSet visited = state.visited;

  auto walk = [&](int room) {
    for (Direction d : oracle.path(pos, map.room(room).cell)) rp.actions.push_back(Action::move(d));
    pos = map.room(room).cell;
    visited.insert(room);
  };

  if (state.current_command && !visited.contains(*state.current_command)) {
    walk(*state.current_command);
  }
  while (!problem.goal.is_subset_of(visited)) {
    int best = -1;
    int best_dist = std::numeric_limits<int>::max();
    for (int room : problem.goal.ids()) {
      if (visited.contains(room)) continue;
      int d = oracle.distance_to_room(room, pos);
      if (d < 0) throw NoPath("relaxed_plan: room " + std::to_string(room) + " unreachable");
      if (d < best_dist) {
        best_dist = d;
        best = room;
      }
    }
    rp.actions.push_back(Action::command(best));
    walk(best);
  }
  return rp;
}

CompositePlan relaxed_plan(const TeamState& state, const Problem& problem) {
  PathOracle oracle(problem);
  return relaxed_plan(state, oracle);
}

double explicable_heuristic_value(double score, std::size_t path_len, std::size_t rp_len) {
  const auto rp = static_cast<double>(rp_len);
  return (1.0 - score) * static_cast<double>(path_len + rp_len) * rp + rp;
}

namespace {

std::vector<Label> label_plan(const Labeler& labeler, const CompositePlan& plan,
                              const PathOracle& oracle) {
  return labeler.label(plan, oracle.features());
}

double heuristic_with(const CompositePlan& path, const TeamState& state, PathOracle& oracle,
                      const Labeler& labeler) {
  CompositePlan rp = relaxed_plan(state, oracle);
  if (rp.empty()) return 0.0;
  CompositePlan joined = path;
  joined.actions.insert(joined.actions.end(), rp.actions.begin(), rp.actions.end());
  std::vector<Label> labels = label_plan(labeler, joined, oracle);
  return explicable_heuristic_value(explicability_score(labels), path.size(), rp.size());
}

}  // namespace

double explicable_heuristic(const SearchNode& node, const Problem& problem,
                            const Labeler& labeler) {
  PathOracle oracle(problem);
  return heuristic_with(node.path, node.state, oracle, labeler);
}

double plan_objective(const CompositePlan& plan, std::span<const Label> labels, double alpha) {
  if (plan.empty()) return 0.0;
  const double n = static_cast<double>(plan.size());
  return static_cast<double>(plan.cost()) + alpha * (1.0 - explicability_score(labels)) * n;
}

namespace {

using Heuristic = std::function<double(const CompositePlan& path, const TeamState& state)>;

std::uint64_t state_key(const TeamState& s, const GridMap& map) {
  auto cell = static_cast<std::uint64_t>(s.robot_pos.row * map.width + s.robot_pos.col);
  auto cmd = static_cast<std::uint64_t>(s.current_command ? *s.current_command + 1 : 0);
  return (static_cast<std::uint64_t>(s.visited.bits()) << 32) | (cell << 8) | cmd;
}

PlanResult best_first(const Problem& problem, const CompositePlan& prefix,
                      const SearchOptions& options, const Heuristic& heuristic) {
  struct Record {
    TeamState state;
    int parent;
    Action action;
    int g;
    double h;
  };
  struct Entry {
    double f;
    double h;
    std::size_t seq;
    int index;
  };
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.f != b.f) return a.f > b.f;
    if (a.h != b.h) return a.h > b.h;
    return a.seq > b.seq;
  };

  const GridMap& map = problem.map;
  std::vector<Record> arena;
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);
  std::unordered_map<std::uint64_t, double> best_f;
  std::size_t seq = 0;

  auto path_of = [&](int index) {
    std::vector<Action> tail;
    for (int i = index; arena[static_cast<std::size_t>(i)].parent >= 0;
         i = arena[static_cast<std::size_t>(i)].parent) {
      tail.push_back(arena[static_cast<std::size_t>(i)].action);
    }
    CompositePlan path = prefix;
    path.actions.insert(path.actions.end(), tail.rbegin(), tail.rend());
    return path;
  };

  TeamState start = replay(prefix, problem).back();
  const int g0 = prefix.cost();
  double h0 = heuristic(prefix, start);
  arena.push_back({start, -1, Action{}, g0, h0});
  best_f[state_key(start, map)] = g0 + h0;
  open.push({g0 + h0, h0, seq++, 0});

  std::size_t expanded = 0;
  while (!open.empty()) {
    Entry top = open.top();
    open.pop();
    const Record rec = arena[static_cast<std::size_t>(top.index)];
    if (top.f > best_f[state_key(rec.state, map)]) continue;
    if (is_goal(rec.state, problem)) {
      PlanResult result;
      result.plan = path_of(top.index);
      result.cost = result.plan.cost();
      result.nodes_expanded = expanded;
      return result;
    }
    if (expanded >= options.expansion_budget) {
      throw BudgetExhausted("expansion budget of " + std::to_string(options.expansion_budget) +
                            " nodes exhausted");
    }
    ++expanded;

    CompositePlan path = path_of(top.index);
    std::vector<Action> successors = legal_actions(rec.state, map, Agent::Human);
    for (const Action& a : legal_actions(rec.state, map, Agent::Robot)) successors.push_back(a);
    for (const Action& a : successors) {
      TeamState next = apply_action(rec.state, a, map);
      path.actions.push_back(a);
      double h = heuristic(path, next);
      path.actions.pop_back();
      double f = rec.g + Action::cost() + h;
      auto key = state_key(next, map);
      auto it = best_f.find(key);
      if (it != best_f.end() && it->second <= f) continue;
      best_f[key] = f;
      arena.push_back({next, top.index, a, rec.g + Action::cost(), h});
      open.push({f, h, seq++, static_cast<int>(arena.size() - 1)});
    }
  }
  throw NoPlan("no plan reaches the goal");
}

void score_result(PlanResult& result, const Labeler* labeler, const PathOracle& oracle) {
  if (!labeler) {
    result.labels.clear();
    result.explicability_score = result.plan.empty() ? 1.0 : 0.0;
    return;
  }
  result.labels = label_plan(*labeler, result.plan, oracle);
  result.explicability_score =
      result.labels.empty() ? 1.0 : explicability_score(result.labels);
}

}  // namespace

PlanResult plan_explicable(const Problem& problem, const Labeler& labeler,
                           const SearchOptions& options, const CompositePlan& prefix) {
  PathOracle oracle(problem);
  auto h = [&](const CompositePlan& path, const TeamState& state) {
    return heuristic_with(path, state, oracle, labeler);
  };
  PlanResult result = best_first(problem, prefix, options, h);
  score_result(result, &labeler, oracle);
  return result;
}

PlanResult plan_baseline(const Problem& problem, const Labeler* labeler,
                         const SearchOptions& options, const CompositePlan& prefix) {
  PathOracle oracle(problem);
  auto h = [&](const CompositePlan&, const TeamState& state) {
    return static_cast<double>(relaxed_plan(state, oracle).size());
  };
  PlanResult result = best_first(problem, prefix, options, h);
  score_result(result, labeler, oracle);
  return result;
}

PlanResult brute_force_oracle(const Problem& problem, const Labeler& labeler, int max_len) {
  constexpr double kTieEps = 1e-12;
  PathOracle oracle(problem);
  const GridMap& map = problem.map;

  // Admissible remaining-cost bound: one command per unvisited goal room
  // not yet commanded, plus the farthest such room's distance.
  auto lower_bound = [&](const TeamState& s) {
    int commands = 0;
    int far = 0;
    for (int room : problem.goal.ids()) {
      if (s.visited.contains(room)) continue;
      if (s.current_command != room) ++commands;
      far = std::max(far, oracle.distance_to_room(room, s.robot_pos));
    }
    return commands + far;
  };

  double best_obj = std::numeric_limits<double>::infinity();
  std::optional<CompositePlan> best_plan;
  std::vector<Label> best_labels;

  // Seed the pruning bound with the greedy completion from the start.
  const TeamState start = initial_state(problem);
  {
    CompositePlan greedy = relaxed_plan(start, oracle);
    if (static_cast<int>(greedy.size()) <= max_len) {
      best_obj = plan_objective(greedy, label_plan(labeler, greedy, oracle), problem.alpha);
    }
  }

  CompositePlan plan;
  std::size_t visited_plans = 0;
  std::function<void(const TeamState&)> dfs = [&](const TeamState& s) {
    if (is_goal(s, problem)) {
      ++visited_plans;
      std::vector<Label> labels = label_plan(labeler, plan, oracle);
      double obj = plan_objective(plan, labels, problem.alpha);
      if (obj < best_obj - kTieEps || (!best_plan && obj <= best_obj + kTieEps)) {
        best_obj = obj;
        best_plan = plan;
        best_labels = std::move(labels);
      }
      return;
    }
    const int depth = static_cast<int>(plan.size());
    if (depth >= max_len) return;
    if (depth + lower_bound(s) > max_len) return;
    if (static_cast<double>(depth + lower_bound(s)) > best_obj + 1e-9) return;
    std::vector<Action> actions = legal_actions(s, map, Agent::Human);
    for (const Action& a : legal_actions(s, map, Agent::Robot)) actions.push_back(a);
    for (const Action& a : actions) {
      TeamState next = apply_action(s, a, map);
      plan.actions.push_back(a);
      dfs(next);
      plan.actions.pop_back();
    }
  };
  dfs(start);

  if (!best_plan) {
    throw Infeasible("no valid plan within " + std::to_string(max_len) + " actions");
  }
  PlanResult result;
  result.plan = *best_plan;
  result.cost = result.plan.cost();
  result.labels = std::move(best_labels);
  result.explicability_score = result.labels.empty() ? 1.0 : explicability_score(result.labels);
  result.nodes_expanded = visited_plans;
  return result;
}

}  // namespace explicable
