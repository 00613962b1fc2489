#pragma once

// Problem generation, room-symbol permutation, corpus augmentation and the
// explicability-ratio evaluation harness.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "explicable/episode.hpp"
#include "explicable/gridworld.hpp"
#include "explicable/labeler.hpp"
#include "explicable/planner.hpp"

namespace explicable {

class Unsatisfiable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class InvalidPermutation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class MissingTrace : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GeneratorConfig {
  int width = 10;
  int height = 10;
  int n_rooms = 4;
  int min_visible = 2;
  int max_visible = 5;
  int n_hidden = 2;
  /// Place hidden obstacles on the human-view shortest paths between the
  /// start and the rooms, where they change what the robot must do.
  bool hidden_on_paths = true;
  double alpha = 1.0;
};

/// Deterministic in `seed`. Throws Unsatisfiable after 10,000 rejected
/// placements, std::invalid_argument for impossible configs.
Problem generate_problem(std::uint64_t seed, const GeneratorConfig& config = {});

enum class Split { Train, Test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct ProblemSet {
  Split split = Split::Train;
  std::vector<Problem> problems;

  const Problem& find(const std::string& id) const;
  bool operator==(const ProblemSet&) const = default;
};

/// `count` problems with ids "<split>-NN"; problem i uses seed `seed + i`.
ProblemSet generate_problem_set(std::uint64_t seed, int count, Split split,
                                const GeneratorConfig& config = {});

/// permutation[old_id] = new_id. Throws InvalidPermutation.
Problem permute_problem(const Problem& problem, const std::vector<int>& permutation);
Trace permute_trace(const Trace& trace, const std::vector<int>& permutation);

struct JudgedTrace {
  Trace trace;
  Problem problem;
};

/// Originals plus `n_per_trace` random room permutations of each trace
/// (drawn with replacement), as training sequences.
std::vector<JudgedSequence> augment(const std::vector<JudgedTrace>& corpus, int n_per_trace,
                                    std::uint64_t seed);

enum class PlanType { Explicable, Baseline, Human };
std::string_view to_string(PlanType t);
PlanType plan_type_from_string(std::string_view s);

struct ScoredPlan {
  std::string problem_id;
  PlanType type = PlanType::Explicable;
  CompositePlan plan;
  std::vector<Label> labels;

  int explicable() const;
  int total() const { return static_cast<int>(labels.size()); }
  double score() const;
  bool operator==(const ScoredPlan&) const = default;
};

struct EvalRow {
  PlanType type = PlanType::Explicable;
  double ratio = 0.0;
  int explicable = 0;
  int total = 0;
  bool operator==(const EvalRow&) const = default;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::string> scenarios;
  /// Every labeled plan, kept so ratios can be recomputed.
  std::vector<ScoredPlan> plans;

  const EvalRow* row(PlanType t) const;
  std::optional<double> scenario_score(const std::string& problem_id, PlanType t) const;
  bool operator==(const EvalReport&) const = default;
};

/// Plans each test problem both ways, labels the plans with `model` and
/// aggregates explicable-action ratios. When `human_traces` is given, every
/// test problem needs at least one trace (the first is scored).
EvalReport evaluate(const ProblemSet& test, const LabelerModel& model,
                    const std::vector<Trace>* human_traces = nullptr,
                    const SearchOptions& search = {});

/// Rows recomputed from the stored per-action labels.
std::vector<EvalRow> recompute_rows(const EvalReport& report);

/// Aligned text tables: aggregate ratios, then per-scenario scores.
std::string format_report(const EvalReport& report);

}  // namespace explicable
