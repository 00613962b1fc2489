#include "explicable/gridworld.hpp"

#include <algorithm>
#include <bit>
#include <deque>
#include <sstream>

namespace explicable {

Cell step(Cell c, Direction d) {
  switch (d) {
    case Direction::Up: return {c.row - 1, c.col};
    case Direction::Down: return {c.row + 1, c.col};
    case Direction::Left: return {c.row, c.col - 1};
    case Direction::Right: return {c.row, c.col + 1};
  }
  return c;
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::Up: return "Up";
    case Direction::Down: return "Down";
    case Direction::Left: return "Left";
    case Direction::Right: return "Right";
  }
  return "?";
}

Direction direction_from_string(std::string_view s) {
  for (Direction d : kDirections) {
    if (to_string(d) == s) return d;
  }
  throw std::invalid_argument("unknown direction '" + std::string(s) + "'");
}

std::string_view to_string(Agent a) { return a == Agent::Human ? "HUMAN" : "ROBOT"; }

bool GridMap::blocked(Cell c, View view) const {
  if (!in_bounds(c)) return true;
  if (visible_obstacles.contains(c)) return true;
  return view == View::True && hidden_obstacles.contains(c);
}

const Room& GridMap::room(int id) const {
  if (id < 0 || id >= room_count()) {
    throw std::out_of_range("no room with id " + std::to_string(id));
  }
  return rooms[static_cast<std::size_t>(id)];
}

std::optional<int> GridMap::room_at(Cell c) const {
  for (const Room& r : rooms) {
    if (r.cell == c) return r.id;
  }
  return std::nullopt;
}

namespace {

std::string cell_str(Cell c) {
  return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

}  // namespace

void GridMap::validate() const {
  if (width <= 0 || height <= 0) throw InvalidMap("grid dimensions must be positive");
  for (Cell c : visible_obstacles) {
    if (!in_bounds(c)) throw InvalidMap("visible obstacle out of bounds at " + cell_str(c));
  }
  for (Cell c : hidden_obstacles) {
    if (!in_bounds(c)) throw InvalidMap("hidden obstacle out of bounds at " + cell_str(c));
    if (visible_obstacles.contains(c)) {
      throw InvalidMap("cell " + cell_str(c) + " is both a visible and a hidden obstacle");
    }
  }
  if (room_count() > RoomSet::kMaxRooms) throw InvalidMap("too many rooms");
  if (blocked(robot_start, View::True)) {
    throw InvalidMap("robot_start " + cell_str(robot_start) + " is blocked or out of bounds");
  }
  std::set<Cell> room_cells;
  for (std::size_t i = 0; i < rooms.size(); ++i) {
    const Room& r = rooms[i];
    if (r.id != static_cast<int>(i)) {
      throw InvalidMap("room ids must be contiguous 0..R-1 (found " + std::to_string(r.id) +
                       " at position " + std::to_string(i) + ")");
    }
    if (blocked(r.cell, View::True)) {
      throw InvalidMap("room " + std::to_string(r.id) + " is blocked or out of bounds");
    }
    if (!room_cells.insert(r.cell).second) {
      throw InvalidMap("two rooms share cell " + cell_str(r.cell));
    }
  }
  // Reachability on the true map.
  std::vector<char> seen(static_cast<std::size_t>(width * height), 0);
  auto idx = [&](Cell c) { return static_cast<std::size_t>(c.row * width + c.col); };
  std::deque<Cell> frontier{robot_start};
  seen[idx(robot_start)] = 1;
  while (!frontier.empty()) {
    Cell c = frontier.front();
    frontier.pop_front();
    for (Direction d : kDirections) {
      Cell n = step(c, d);
      if (blocked(n, View::True) || seen[idx(n)]) continue;
      seen[idx(n)] = 1;
      frontier.push_back(n);
    }
  }
  for (const Room& r : rooms) {
    if (!seen[idx(r.cell)]) {
      throw InvalidMap("room " + std::to_string(r.id) + " is unreachable from robot_start");
    }
  }
}

GridMap human_view(const GridMap& map) {
  GridMap out = map;
  out.hidden_obstacles.clear();
  return out;
}

RoomSet RoomSet::all(int n) {
  RoomSet s;
  s.bits_ = n >= kMaxRooms ? ~0U : ((1U << n) - 1U);
  return s;
}

int RoomSet::size() const { return std::popcount(bits_); }

std::vector<int> RoomSet::ids() const {
  std::vector<int> out;
  for (int i = 0; i < kMaxRooms; ++i) {
    if (contains(i)) out.push_back(i);
  }
  return out;
}

void Problem::validate() const {
  map.validate();
  if (!goal.is_subset_of(RoomSet::all(map.room_count()))) {
    throw InvalidMap("goal names a room that does not exist");
  }
  if (!(alpha >= 0.0)) throw InvalidMap("alpha must be nonnegative");
}

TeamState initial_state(const Problem& problem) {
  TeamState s;
  s.robot_pos = problem.map.robot_start;
  return s;
}

std::strong_ordering Action::operator<=>(const Action& o) const {
  if (agent != o.agent) return agent <=> o.agent;
  if (is_command()) return room <=> o.room;
  return dir <=> o.dir;
}

std::string to_string(const Action& a) {
  if (a.is_command()) return "Command(" + std::to_string(a.room) + ")";
  return "Move(" + std::string(to_string(a.dir)) + ")";
}

std::string to_string(const CompositePlan& plan) {
  std::ostringstream os;
  for (std::size_t i = 0; i < plan.actions.size(); ++i) {
    if (i) os << ' ';
    os << to_string(plan.actions[i]);
  }
  return os.str();
}

TeamState apply_action(const TeamState& state, const Action& action, const GridMap& map) {
  TeamState next = state;
  if (action.is_command()) {
    if (action.room < 0 || action.room >= map.room_count()) {
      throw IllegalAction("command names unknown room " + std::to_string(action.room));
    }
    if (state.visited.contains(action.room)) {
      throw IllegalAction("room " + std::to_string(action.room) + " already visited");
    }
    if (state.current_command == action.room) {
      throw IllegalAction("room " + std::to_string(action.room) + " is already commanded");
    }
    next.current_command = action.room;
    // A robot already standing on the commanded room has arrived.
    if (map.room(action.room).cell == state.robot_pos) {
      next.visited.insert(action.room);
      next.current_command.reset();
    }
  } else {
    if (!state.current_command) throw IllegalAction("robot has no command to follow");
    Cell target = step(state.robot_pos, action.dir);
    if (map.blocked(target, View::True)) {
      throw IllegalAction("move " + std::string(to_string(action.dir)) + " from " +
                          cell_str(state.robot_pos) + " is blocked");
    }
    next.robot_pos = target;
    if (map.room(*state.current_command).cell == target) {
      next.visited.insert(*state.current_command);
      next.current_command.reset();
    }
  }
  ++next.tick;
  return next;
}

std::vector<Action> legal_actions(const TeamState& state, const GridMap& map, Agent agent) {
  std::vector<Action> out;
  if (agent == Agent::Human) {
    for (const Room& r : map.rooms) {
      if (state.visited.contains(r.id) || state.current_command == r.id) continue;
      out.push_back(Action::command(r.id));
    }
  } else if (state.current_command) {
    for (Direction d : kDirections) {
      if (!map.blocked(step(state.robot_pos, d), View::True)) out.push_back(Action::move(d));
    }
  }
  return out;
}

bool is_goal(const TeamState& state, const Problem& problem) {
  return problem.goal.is_subset_of(state.visited);
}

std::vector<TeamState> replay(const CompositePlan& plan, const Problem& problem,
                              const TeamState& start) {
  std::vector<TeamState> states;
  states.reserve(plan.size() + 1);
  states.push_back(start);
  for (std::size_t i = 0; i < plan.actions.size(); ++i) {
    try {
      states.push_back(apply_action(states.back(), plan.actions[i], problem.map));
    } catch (const IllegalAction& e) {
      throw InvalidPlan("action " + std::to_string(i) + " (" + to_string(plan.actions[i]) +
                        "): " + e.what());
    }
  }
  return states;
}

std::vector<TeamState> replay(const CompositePlan& plan, const Problem& problem) {
  return replay(plan, problem, initial_state(problem));
}

}  // namespace explicable
