#pragma once

// First-response grid domain: a robot on a 4-connected grid visits marked
// rooms in the order a human commands them. The robot sees the true map
// (visible + hidden obstacles); the human only knows the visible ones.

#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace explicable {

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

enum class Direction : std::uint8_t { Up, Down, Left, Right };
inline constexpr Direction kDirections[] = {Direction::Up, Direction::Down, Direction::Left,
                                            Direction::Right};

Cell step(Cell c, Direction d);
std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

enum class Agent : std::uint8_t { Human, Robot };
std::string_view to_string(Agent a);

enum class View : std::uint8_t { True, Human };

class InvalidMap : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IllegalAction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidPlan : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Room {
  int id = 0;
  Cell cell;
  bool operator==(const Room&) const = default;
};

struct GridMap {
  int width = 10;
  int height = 10;
  std::set<Cell> visible_obstacles;
  std::set<Cell> hidden_obstacles;
  std::vector<Room> rooms;  // rooms[i].id == i
  Cell robot_start;

  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width;
  }
  bool blocked(Cell c, View view) const;
  const Room& room(int id) const;
  int room_count() const { return static_cast<int>(rooms.size()); }
  std::optional<int> room_at(Cell c) const;

  // Throws InvalidMap when any structural invariant is violated.
  void validate() const;

  bool operator==(const GridMap&) const = default;
};

/// Copy of `map` as the human knows it: hidden obstacles are free cells.
GridMap human_view(const GridMap& map);

/// Bitset of room ids. Maps are limited to 32 rooms.
class RoomSet {
 public:
  static constexpr int kMaxRooms = 32;

  RoomSet() = default;
  static RoomSet all(int n);

  bool contains(int id) const { return (bits_ >> id) & 1U; }
  void insert(int id) { bits_ |= (1U << id); }
  void erase(int id) { bits_ &= ~(1U << id); }
  int size() const;
  bool empty() const { return bits_ == 0; }
  bool is_subset_of(RoomSet other) const { return (bits_ & ~other.bits_) == 0; }
  std::uint32_t bits() const { return bits_; }
  std::vector<int> ids() const;

  auto operator<=>(const RoomSet&) const = default;

 private:
  std::uint32_t bits_ = 0;
};

struct Problem {
  std::string id;
  GridMap map;
  RoomSet goal;
  double alpha = 1.0;
  std::string notes;

  void validate() const;
  bool operator==(const Problem&) const = default;
};

struct TeamState {
  Cell robot_pos;
  RoomSet visited;
  std::optional<int> current_command;
  int tick = 0;

  bool operator==(const TeamState&) const = default;
};

TeamState initial_state(const Problem& problem);

struct Action {
  Agent agent = Agent::Human;
  int room = -1;                        // Human commands
  Direction dir = Direction::Up;        // Robot moves

  static Action command(int room) { return Action{Agent::Human, room, Direction::Up}; }
  static Action move(Direction d) { return Action{Agent::Robot, -1, d}; }

  bool is_command() const { return agent == Agent::Human; }
  bool is_move() const { return agent == Agent::Robot; }
  static constexpr int cost() { return 1; }

  bool operator==(const Action& o) const {
    return agent == o.agent && (is_command() ? room == o.room : dir == o.dir);
  }
  // Commands order before moves; commands by room id, moves by direction.
  std::strong_ordering operator<=>(const Action& o) const;
};

std::string to_string(const Action& a);

struct CompositePlan {
  std::vector<Action> actions;

  std::size_t size() const { return actions.size(); }
  bool empty() const { return actions.empty(); }
  int cost() const { return static_cast<int>(actions.size()) * Action::cost(); }
  bool operator==(const CompositePlan&) const = default;
};

std::string to_string(const CompositePlan& plan);

/// Deterministic transition. Throws IllegalAction.
TeamState apply_action(const TeamState& state, const Action& action, const GridMap& map);

std::vector<Action> legal_actions(const TeamState& state, const GridMap& map, Agent agent);

bool is_goal(const TeamState& state, const Problem& problem);

/// States visited while replaying `plan` from `start`, including `start`.
/// Throws InvalidPlan if any action is illegal at its point.
std::vector<TeamState> replay(const CompositePlan& plan, const Problem& problem,
                              const TeamState& start);
std::vector<TeamState> replay(const CompositePlan& plan, const Problem& problem);

}  // namespace explicable
