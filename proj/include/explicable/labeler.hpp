#pragma once

// Linear-chain CRF over composite-plan action sequences with a binary
// label alphabet, plus the explicability score computed from its labels.

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "explicable/gridworld.hpp"

namespace explicable {

enum class Label : std::uint8_t { Explicable = 0, Inexplicable = 1 };
inline constexpr int kNumLabels = 2;

std::string_view to_string(Label l);
Label label_from_string(std::string_view s);

class EmptySequence : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fraction of actions carrying a (non-empty) explicable label.
double explicability_score(std::span<const Label> labels);

// ---------------------------------------------------------------------------
// Features

class FeatureIndex {
 public:
  FeatureIndex() = default;
  explicit FeatureIndex(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  /// -1 when absent.
  int find(std::string_view name) const;

  bool operator==(const FeatureIndex& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

/// Sparse (feature id, value) pairs for one action, sorted by id.
struct FeatureVector {
  std::vector<std::pair<int, double>> entries;
  bool operator==(const FeatureVector&) const = default;
};

/// The fixed observation template. Every feature is free of room ids and
/// coordinates, so relabeling rooms cannot change a plan's features.
namespace feature {
enum : int {
  Bias = 0,
  AgentHuman,
  AgentRobot,
  DirUp,
  DirDown,
  DirLeft,
  DirRight,
  HumanDeltaCloser,
  HumanDeltaSame,
  HumanDeltaFarther,
  HumanDeltaUndefined,
  TrueDeltaCloser,
  TrueDeltaSame,
  TrueDeltaFarther,
  TrueDeltaUndefined,
  DeviatesHumanPath,
  AdjacentHidden,
  CommandChange,
  SegmentFirst,
  SegmentMid,
  SegmentLast,
  Count
};
}  // namespace feature

const FeatureIndex& standard_feature_index();

/// BFS distance fields to each room on both views; built once per problem.
class FeatureContext {
 public:
  static constexpr int kUnreachable = -1;

  explicit FeatureContext(const Problem& problem);

  const Problem& problem() const { return *problem_; }
  int distance(View view, int room, Cell from) const;
  bool adjacent_to_hidden(Cell c) const;

 private:
  const Problem* problem_;
  // [view][room][cell]
  std::array<std::vector<std::vector<int>>, 2> dist_;
};

/// Anything that can label a composite plan. The planner only needs this.
class Labeler {
 public:
  virtual ~Labeler() = default;
  virtual std::vector<Label> label(const CompositePlan& plan, const Problem& problem) const = 0;
  /// Same, reusing precomputed distance fields when the labeler can.
  virtual std::vector<Label> label(const CompositePlan& plan, const FeatureContext& ctx) const {
    return label(plan, ctx.problem());
  }
};

std::vector<FeatureVector> extract_features(const CompositePlan& plan, const FeatureContext& ctx);
std::vector<FeatureVector> extract_features(const CompositePlan& plan, const Problem& problem);

/// True when a robot move fails to bring the robot one step closer to its
/// commanded room on the human-view map.
bool deviates_from_human_path(const FeatureContext& ctx, const TeamState& before,
                              const Action& move);

/// The synthetic judge: a robot move is inexplicable iff it deviates from
/// the human-view shortest path; commands are always explicable.
class RuleLabeler : public Labeler {
 public:
  std::vector<Label> label(const CompositePlan& plan, const Problem& problem) const override;
  std::vector<Label> label(const CompositePlan& plan, const FeatureContext& ctx) const override;
};

struct JudgedSequence {
  std::vector<FeatureVector> features;
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }
  bool operator==(const JudgedSequence&) const = default;
};

// ---------------------------------------------------------------------------
// Model

struct TrainOptions {
  double l2_sigma = 10.0;
  int max_iter = 200;
  double tol = 1e-5;
};

struct TrainingStats {
  int iterations = 0;
  double final_objective = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  int sequences = 0;
  int tokens = 0;
  std::vector<std::string> warnings;

  bool operator==(const TrainingStats&) const = default;
};

class LabelerModel : public Labeler {
 public:
  LabelerModel();  // standard feature index, zero weights
  explicit LabelerModel(FeatureIndex index, double l2_sigma = 10.0);

  const FeatureIndex& feature_index() const { return index_; }
  int num_features() const { return index_.size(); }
  /// Layout: emission (f, y) at f * kNumLabels + y, then transitions
  /// (prev, cur) at num_features() * kNumLabels + prev * kNumLabels + cur.
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t emission_slot(int feature, Label y) const {
    return static_cast<std::size_t>(feature * kNumLabels + static_cast<int>(y));
  }
  std::size_t transition_slot(Label prev, Label cur) const {
    return static_cast<std::size_t>(num_features() * kNumLabels + static_cast<int>(prev) * kNumLabels +
                                    static_cast<int>(cur));
  }

  double l2_sigma() const { return l2_sigma_; }
  void set_l2_sigma(double s) { l2_sigma_ = s; }
  TrainingStats& stats() { return stats_; }
  const TrainingStats& stats() const { return stats_; }

  /// Unnormalized log score of a label sequence.
  double score(std::span<const FeatureVector> features, std::span<const Label> labels) const;
  double log_partition(std::span<const FeatureVector> features) const;
  /// Viterbi; exact ties resolve to Explicable.
  std::vector<Label> decode(std::span<const FeatureVector> features) const;

  /// Viterbi over the plan's features, then every human command is forced
  /// to Explicable.
  std::vector<Label> label(const CompositePlan& plan, const Problem& problem) const override;
  std::vector<Label> label(const CompositePlan& plan, const FeatureContext& ctx) const override;

  bool operator==(const LabelerModel& o) const {
    return index_ == o.index_ && weights_ == o.weights_ && l2_sigma_ == o.l2_sigma_ &&
           stats_ == o.stats_;
  }

 private:
  FeatureIndex index_;
  std::vector<double> weights_;
  double l2_sigma_ = 10.0;
  TrainingStats stats_;
};

/// Exact log p(labels | features).
double sequence_log_likelihood(const LabelerModel& model, const JudgedSequence& seq);

/// Regularized training objective: sum of log-likelihoods minus |w|^2 / (2 sigma^2).
double objective(const LabelerModel& model, std::span<const JudgedSequence> corpus);

/// Gradient of objective(): empirical minus expected counts minus w / sigma^2.
std::vector<double> gradient(const LabelerModel& model, std::span<const JudgedSequence> corpus);

/// Maximizes objective() with L-BFGS and a backtracking (monotone) line search.
LabelerModel train(std::span<const JudgedSequence> corpus, const TrainOptions& options = {},
                   const FeatureIndex& index = standard_feature_index());

}  // namespace explicable
