#include "explicable/episode.hpp"

#include <deque>
#include <limits>
#include <thread>

namespace explicable {

std::string_view to_string(Outcome o) { return o == Outcome::Completed ? "COMPLETED" : "ABORTED"; }

std::string_view to_string(TraceSource s) {
  return s == TraceSource::HumanLive ? "HUMAN_LIVE" : "SIMULATED";
}

CompositePlan Trace::plan() const {
  CompositePlan plan;
  plan.actions.reserve(events.size());
  for (const TraceEvent& e : events) plan.actions.push_back(e.action);
  return plan;
}

std::size_t Trace::robot_moves() const {
  std::size_t n = 0;
  for (const TraceEvent& e : events) n += e.agent == Agent::Robot ? 1 : 0;
  return n;
}

void verify_trace(const Trace& trace, const Problem& problem) {
  TeamState state = initial_state(problem);
  int last_tick = state.tick;
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const TraceEvent& e = trace.events[i];
    if (e.agent != e.action.agent) {
      throw InvalidPlan("event " + std::to_string(i) + ": agent does not match action");
    }
    try {
      state = apply_action(state, e.action, problem.map);
    } catch (const IllegalAction& err) {
      throw InvalidPlan("event " + std::to_string(i) + ": " + err.what());
    }
    if (e.tick <= last_tick) {
      throw InvalidPlan("event " + std::to_string(i) + ": ticks must increase strictly");
    }
    last_tick = e.tick;
    if (!(state == e.state_after) || e.tick != state.tick) {
      throw InvalidPlan("event " + std::to_string(i) + ": recorded state does not replay");
    }
  }
}

JudgedSequence to_judged_sequence(const Trace& trace, const Problem& problem) {
  JudgedSequence seq;
  seq.features = extract_features(trace.plan(), problem);
  seq.labels.reserve(trace.events.size());
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const TraceEvent& e = trace.events[i];
    if (e.agent == Agent::Human) {
      seq.labels.push_back(Label::Explicable);
    } else if (e.label) {
      seq.labels.push_back(*e.label);
    } else {
      throw std::invalid_argument("trace " + trace.trace_id + ": robot event " + std::to_string(i) +
                                  " has no judgment");
    }
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Human policies

namespace {

std::vector<int> distances_from(const GridMap& map, Cell source, View view) {
  std::vector<int> dist(static_cast<std::size_t>(map.width * map.height), -1);
  auto idx = [&](Cell c) { return static_cast<std::size_t>(c.row * map.width + c.col); };
  std::deque<Cell> frontier{source};
  dist[idx(source)] = 0;
  while (!frontier.empty()) {
    Cell c = frontier.front();
    frontier.pop_front();
    for (Direction d : kDirections) {
      Cell n = step(c, d);
      if (map.blocked(n, view) || dist[idx(n)] >= 0) continue;
      dist[idx(n)] = dist[idx(c)] + 1;
      frontier.push_back(n);
    }
  }
  return dist;
}

// Nearest unvisited room by human-view distance, lowest id on ties.
std::optional<int> nearest_room(const TeamState& state, const GridMap& human_map,
                                std::optional<int> exclude) {
  std::vector<int> dist = distances_from(human_map, state.robot_pos, View::Human);
  std::optional<int> best;
  int best_dist = std::numeric_limits<int>::max();
  for (const Room& r : human_map.rooms) {
    if (state.visited.contains(r.id) || exclude == r.id) continue;
    int d = dist[static_cast<std::size_t>(r.cell.row * human_map.width + r.cell.col)];
    if (d < 0) continue;
    if (d < best_dist) {
      best_dist = d;
      best = r.id;
    }
  }
  return best;
}

int human_distance(const GridMap& human_map, Cell from, int room) {
  std::vector<int> dist = distances_from(human_map, from, View::Human);
  Cell c = human_map.room(room).cell;
  return dist[static_cast<std::size_t>(c.row * human_map.width + c.col)];
}

}  // namespace

std::optional<int> greedy_sim_step(const TeamState& state, const GridMap& human_map, int k,
                                   GreedyHistory& history) {
  if (k < 1) throw std::invalid_argument("patience must be at least 1");
  std::optional<int> choice;
  if (!state.current_command) {
    choice = nearest_room(state, human_map, std::nullopt);
  } else if (history.stalled_moves >= k) {
    choice = nearest_room(state, human_map, state.current_command);
    if (!choice) history.stalled_moves = 0;
  }
  if (!choice) return std::nullopt;
  history.commanded = choice;
  history.best_distance = human_distance(human_map, state.robot_pos, *choice);
  history.stalled_moves = 0;
  return choice;
}

GreedySimHuman::GreedySimHuman(const Problem& problem, int patience)
    : human_map_(human_view(problem.map)), patience_(patience), ctx_(problem) {
  if (patience < 1) throw std::invalid_argument("patience must be at least 1");
}

std::optional<int> GreedySimHuman::poll(const TeamState& state) {
  return greedy_sim_step(state, human_map_, patience_, history_);
}

void GreedySimHuman::observe_move(const TeamState& before, const Action& move,
                                  const TeamState& after) {
  (void)move;
  if (!after.current_command || after.current_command != history_.commanded) return;
  int room = *after.current_command;
  int d0 = ctx_.distance(View::Human, room, before.robot_pos);
  int d1 = ctx_.distance(View::Human, room, after.robot_pos);
  if (d1 < d0) {
    history_.stalled_moves = 0;
  } else {
    ++history_.stalled_moves;
  }
  history_.best_distance = std::min(history_.best_distance, d1);
}

std::optional<Label> GreedySimHuman::judge(const TeamState& before, const Action& move,
                                           const TeamState& after) {
  (void)after;
  return deviates_from_human_path(ctx_, before, move) ? Label::Inexplicable : Label::Explicable;
}

ScriptedHuman::ScriptedHuman(const Problem& problem, std::vector<Step> script)
    : ctx_(problem), script_(std::move(script)) {}

std::optional<int> ScriptedHuman::poll(const TeamState& state) {
  while (next_ < script_.size()) {
    const Step& s = script_[next_];
    bool due = s.when == Step::When::AtTick ? state.tick >= s.tick : !state.current_command;
    if (!due) return std::nullopt;
    ++next_;
    if (state.visited.contains(s.room) || state.current_command == s.room) continue;
    return s.room;
  }
  return std::nullopt;
}

std::optional<Label> ScriptedHuman::judge(const TeamState& before, const Action& move,
                                          const TeamState& after) {
  (void)after;
  return deviates_from_human_path(ctx_, before, move) ? Label::Inexplicable : Label::Explicable;
}

// ---------------------------------------------------------------------------
// Replanning

Replanner::Replanner(const Problem& problem, const Labeler& labeler, SearchOptions options)
    : problem_(&problem), labeler_(&labeler), options_(options) {
  adopt(plan_explicable(problem, labeler, options_), 0);
}

void Replanner::adopt(PlanResult plan, std::size_t cursor) {
  current_ = std::move(plan);
  predicted_states_ = replay(current_.plan, *problem_);
  cursor_ = cursor;
}

CompositePlan Replanner::remainder() const {
  CompositePlan rest;
  rest.actions.assign(current_.plan.actions.begin() + static_cast<std::ptrdiff_t>(cursor_),
                      current_.plan.actions.end());
  return rest;
}

PlanResult Replanner::predict_and_replan(const CompositePlan& observed_prefix) {
  if (observed_prefix.empty() || !observed_prefix.actions.back().is_command()) {
    throw std::invalid_argument("observed prefix must end with a human command");
  }
  const Action& observed = observed_prefix.actions.back();
  CompositePlan before_cmd = observed_prefix;
  before_cmd.actions.pop_back();
  const TeamState observed_before = replay(before_cmd, *problem_).back();

  std::optional<std::size_t> next_human;
  for (std::size_t j = cursor_; j < current_.plan.size(); ++j) {
    if (current_.plan.actions[j].is_command()) {
      next_human = j;
      break;
    }
  }
  bool matches = next_human && current_.plan.actions[*next_human] == observed &&
                 predicted_states_[*next_human].visited == observed_before.visited;
  if (matches) {
    cursor_ = *next_human + 1;
    last_replanned_ = false;
    return current_;
  }
  adopt(plan_explicable(*problem_, *labeler_, options_, observed_prefix), observed_prefix.size());
  ++replans_;
  last_replanned_ = true;
  return current_;
}

// ---------------------------------------------------------------------------
// Episodes

Episode::Episode(const Problem& problem, const Labeler* model, EpisodeOptions options)
    : problem_(&problem), options_(std::move(options)), state_(initial_state(problem)) {
  trace_.problem_ref = problem.id;
  trace_.source = options_.source;
  trace_.trace_id = options_.trace_id.empty() ? problem.id + "-episode" : options_.trace_id;
  if (model) replanner_ = std::make_unique<Replanner>(problem, *model, options_.search);
}

const TraceEvent& Episode::command(int room) {
  Action a = Action::command(room);
  TeamState next = apply_action(state_, a, problem_->map);
  state_ = next;
  trace_.events.push_back({next.tick, Agent::Human, a, std::nullopt, next});
  observed_.actions.push_back(a);
  route_room_.reset();
  if (replanner_) {
    replanner_->predict_and_replan(observed_);
    if (replanner_->last_call_replanned()) {
      trace_.replans.push_back({next.tick, room, replanner_->current().plan.size()});
    }
  }
  return trace_.events.back();
}

std::optional<Action> Episode::next_robot_action() {
  if (!state_.current_command) return std::nullopt;
  if (route_room_ != state_.current_command || route_pos_ >= route_.size()) {
    route_ = bfs_path(problem_->map, state_.robot_pos,
                      problem_->map.room(*state_.current_command).cell, View::True);
    route_pos_ = 0;
    route_room_ = state_.current_command;
  }
  return Action::move(route_[route_pos_]);
}

const TraceEvent& Episode::robot_step() {
  std::optional<Action> a = next_robot_action();
  if (!a) throw IllegalAction("robot has no command to follow");
  TeamState next = apply_action(state_, *a, problem_->map);
  state_ = next;
  ++route_pos_;
  trace_.events.push_back({next.tick, Agent::Robot, *a, std::nullopt, next});
  observed_.actions.push_back(*a);
  return trace_.events.back();
}

void Episode::set_label(std::size_t event_index, Label label) {
  TraceEvent& e = trace_.events.at(event_index);
  if (e.agent != Agent::Robot) throw std::invalid_argument("only robot actions are judged");
  e.label = label;
}

Trace Episode::finish(Outcome outcome) {
  trace_.outcome = outcome;
  return trace_;
}

Trace run_episode(const Problem& problem, HumanPolicy& human, const Labeler* model,
                  const EpisodeOptions& options) {
  Episode episode(problem, model, options);
  const int budget = options.tick_budget > 0 ? options.tick_budget
                                             : 10 * problem.map.width * problem.map.height;
  int rounds = 0;
  while (!episode.done()) {
    if (rounds++ >= budget) return episode.finish(Outcome::Aborted);
    if (std::optional<int> room = human.poll(episode.state())) {
      try {
        episode.command(*room);
      } catch (const IllegalAction&) {
        // Ignored, as a click on a disabled room would be.
      }
    }
    if (std::optional<Action> move = episode.next_robot_action()) {
      if (options.action_delay.count() > 0) std::this_thread::sleep_for(options.action_delay);
      TeamState before = episode.state();
      const TraceEvent& e = episode.robot_step();
      TeamState after = e.state_after;
      human.observe_move(before, *move, after);
      if (options.collect_labels) {
        std::optional<Label> verdict = human.judge(before, *move, after);
        if (!verdict) return episode.finish(Outcome::Aborted);
        episode.set_label(episode.events().size() - 1, *verdict);
      }
    }
  }
  return episode.finish(Outcome::Completed);
}

}  // namespace explicable
