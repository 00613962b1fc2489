#pragma once

// Composite-plan search. plan_explicable() orders nodes by f = g + h where h
// blends the labeler's explicability score of (path + relaxed plan) with the
// relaxed plan length; plan_baseline() drops the explicability term.

#include <cstddef>
#include <map>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "explicable/gridworld.hpp"
#include "explicable/labeler.hpp"

namespace explicable {

class NoPath : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class NoPlan : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class Infeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest 4-connected path. Neighbors expand Up, Down, Left, Right and the
/// first-found shortest path wins. Throws NoPath.
std::vector<Direction> bfs_path(const GridMap& map, Cell from, Cell to, View view);

/// Caches true-map BFS paths and room distance fields for one problem.
class PathOracle {
 public:
  explicit PathOracle(const Problem& problem);

  const Problem& problem() const { return *problem_; }
  const std::vector<Direction>& path(Cell from, Cell to);
  /// True-map distance to a room, -1 when unreachable.
  int distance_to_room(int room, Cell from) const { return features_.distance(View::True, room, from); }
  const FeatureContext& features() const { return features_; }

 private:
  const Problem* problem_;
  FeatureContext features_;
  std::map<std::pair<Cell, Cell>, std::vector<Direction>> paths_;
};

/// Greedy completion: finish the active command, then repeatedly command the
/// nearest unvisited goal room (ties to the lowest id) and walk its BFS path.
/// Throws NoPath.
CompositePlan relaxed_plan(const TeamState& state, const Problem& problem);
CompositePlan relaxed_plan(const TeamState& state, PathOracle& oracle);

struct SearchNode {
  TeamState state;
  CompositePlan path;
  double g = 0.0;
  double h = 0.0;
  double f = 0.0;
};

/// (1 - score) * (path_len + rp_len) * rp_len + rp_len
double explicable_heuristic_value(double score, std::size_t path_len, std::size_t rp_len);

double explicable_heuristic(const SearchNode& node, const Problem& problem, const Labeler& labeler);

struct PlanResult {
  CompositePlan plan;
  double cost = 0.0;
  double explicability_score = 1.0;  // 1.0 for an empty plan
  std::size_t nodes_expanded = 0;
  std::vector<Label> labels;
};

/// cost + alpha * (1 - score) * |plan|
double plan_objective(const CompositePlan& plan, std::span<const Label> labels, double alpha);

struct SearchOptions {
  std::size_t expansion_budget = 200'000;
};

/// Searches from the state reached by `prefix`; the returned plan starts
/// with `prefix`. Throws NoPlan, BudgetExhausted, NoPath.
PlanResult plan_explicable(const Problem& problem, const Labeler& labeler,
                           const SearchOptions& options = {}, const CompositePlan& prefix = {});

/// Same search with h = |relaxed plan|. `labeler` (optional) only scores
/// the result.
PlanResult plan_baseline(const Problem& problem, const Labeler* labeler = nullptr,
                         const SearchOptions& options = {}, const CompositePlan& prefix = {});

/// Exhaustive argmin of plan_objective over valid plans of length <= max_len.
/// Ties go to the lexicographically smallest action sequence. Throws Infeasible.
PlanResult brute_force_oracle(const Problem& problem, const Labeler& labeler, int max_len);

}  // namespace explicable
