#pragma once

// Interactive episodes: the human issues room commands, the robot walks the
// true-map BFS path to the commanded room, and each robot action can be
// judged. Episodes produce Traces, the unit of the training corpus.

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "explicable/gridworld.hpp"
#include "explicable/labeler.hpp"
#include "explicable/planner.hpp"

namespace explicable {

enum class Outcome { Completed, Aborted };
enum class TraceSource { HumanLive, Simulated };

std::string_view to_string(Outcome o);
std::string_view to_string(TraceSource s);

struct TraceEvent {
  int tick = 0;
  Agent agent = Agent::Human;
  Action action;
  std::optional<Label> label;
  TeamState state_after;

  bool operator==(const TraceEvent&) const = default;
};

struct ReplanEvent {
  int tick = 0;
  int observed_room = -1;
  std::size_t plan_length = 0;

  bool operator==(const ReplanEvent&) const = default;
};

struct Trace {
  std::string trace_id;
  std::string problem_ref;
  std::vector<TraceEvent> events;
  Outcome outcome = Outcome::Aborted;
  TraceSource source = TraceSource::Simulated;
  std::vector<ReplanEvent> replans;

  CompositePlan plan() const;
  std::size_t robot_moves() const;

  bool operator==(const Trace&) const = default;
};

/// Replays the trace against the problem and checks every recorded
/// state_after and tick. Throws InvalidPlan on mismatch.
void verify_trace(const Trace& trace, const Problem& problem);

/// Training sequence from a judged trace; human commands get Explicable,
/// unjudged robot moves are rejected.
JudgedSequence to_judged_sequence(const Trace& trace, const Problem& problem);

// ---------------------------------------------------------------------------
// Human policies

/// Source of commands and judgments during an episode.
class HumanPolicy {
 public:
  virtual ~HumanPolicy() = default;
  /// New command to issue before the robot's next step, if any.
  virtual std::optional<int> poll(const TeamState& state) = 0;
  /// Called after every robot move.
  virtual void observe_move(const TeamState& before, const Action& move, const TeamState& after) {
    (void)before, (void)move, (void)after;
  }
  /// Judgment for a robot move; nullopt means the human did not answer.
  virtual std::optional<Label> judge(const TeamState& before, const Action& move,
                                     const TeamState& after) = 0;
};

struct GreedyHistory {
  std::optional<int> commanded;
  int best_distance = 0;
  int stalled_moves = 0;
};

/// Simulated human decision: command the nearest unvisited room (human-view
/// BFS, ties to the lowest id) when idle; switch to the nearest other room
/// when the robot has not got closer on the human view for k moves.
std::optional<int> greedy_sim_step(const TeamState& state, const GridMap& human_map, int k,
                                   GreedyHistory& history);

/// Simulated human that commands with greedy_sim_step() and judges a move
/// inexplicable iff it leaves the human-view shortest path.
class GreedySimHuman : public HumanPolicy {
 public:
  GreedySimHuman(const Problem& problem, int patience = 3);

  std::optional<int> poll(const TeamState& state) override;
  void observe_move(const TeamState& before, const Action& move, const TeamState& after) override;
  std::optional<Label> judge(const TeamState& before, const Action& move,
                             const TeamState& after) override;

  const GreedyHistory& history() const { return history_; }

 private:
  GridMap human_map_;
  int patience_;
  FeatureContext ctx_;
  GreedyHistory history_;
};

/// Replays a fixed command script; judges with the same rule as GreedySimHuman.
class ScriptedHuman : public HumanPolicy {
 public:
  struct Step {
    enum class When { AtTick, WhenIdle } when = When::WhenIdle;
    int tick = 0;
    int room = -1;
  };

  ScriptedHuman(const Problem& problem, std::vector<Step> script);

  std::optional<int> poll(const TeamState& state) override;
  std::optional<Label> judge(const TeamState& before, const Action& move,
                             const TeamState& after) override;

 private:
  FeatureContext ctx_;
  std::vector<Step> script_;
  std::size_t next_ = 0;
};

// ---------------------------------------------------------------------------
// Replanning

/// Keeps the predicted explicable composite plan and replans when an observed
/// human command departs from it.
class Replanner {
 public:
  Replanner(const Problem& problem, const Labeler& labeler, SearchOptions options = {});

  const PlanResult& current() const { return current_; }
  /// Actions of the current plan not yet matched by observations.
  CompositePlan remainder() const;
  std::size_t replan_count() const { return replans_; }

  /// `observed_prefix` ends with the newly observed human command. Returns
  /// the remainder unchanged when the command matches the prediction;
  /// otherwise replans from the observed prefix.
  PlanResult predict_and_replan(const CompositePlan& observed_prefix);
  bool last_call_replanned() const { return last_replanned_; }

 private:
  void adopt(PlanResult plan, std::size_t cursor);

  const Problem* problem_;
  const Labeler* labeler_;
  SearchOptions options_;
  PlanResult current_;
  std::vector<TeamState> predicted_states_;
  std::size_t cursor_ = 0;
  std::size_t replans_ = 0;
  bool last_replanned_ = false;
};

// ---------------------------------------------------------------------------
// Episodes

struct EpisodeOptions {
  bool collect_labels = false;
  int tick_budget = 0;  // 0 selects 10 * grid area
  std::chrono::milliseconds action_delay{0};
  TraceSource source = TraceSource::Simulated;
  std::string trace_id;
  SearchOptions search;
};

/// Step-wise episode engine, shared by the headless runner and live sessions.
class Episode {
 public:
  Episode(const Problem& problem, const Labeler* model, EpisodeOptions options);

  const TeamState& state() const { return state_; }
  const Problem& problem() const { return *problem_; }
  bool done() const { return is_goal(state_, *problem_); }
  const std::vector<TraceEvent>& events() const { return trace_.events; }
  std::size_t replan_count() const { return trace_.replans.size(); }
  const Replanner* replanner() const { return replanner_.get(); }

  /// Applies a human command. Throws IllegalAction.
  const TraceEvent& command(int room);
  /// Next BFS step toward the active command, if one is set.
  std::optional<Action> next_robot_action();
  /// Applies the next robot step. Throws IllegalAction when idle.
  const TraceEvent& robot_step();
  void set_label(std::size_t event_index, Label label);

  Trace finish(Outcome outcome);

 private:
  const Problem* problem_;
  EpisodeOptions options_;
  TeamState state_;
  Trace trace_;
  std::unique_ptr<Replanner> replanner_;
  CompositePlan observed_;
  std::vector<Direction> route_;
  std::size_t route_pos_ = 0;
  std::optional<int> route_room_;
};

/// Runs a headless episode to completion or abort. Live sessions drive
/// Episode directly.
Trace run_episode(const Problem& problem, HumanPolicy& human, const Labeler* model,
                  const EpisodeOptions& options = {});

}  // namespace explicable
