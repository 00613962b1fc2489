#pragma once

#include <functional>
#include <initializer_list>
#include <queue>
#include <vector>

#include "explicable/episode.hpp"
#include "explicable/gridworld.hpp"
#include "explicable/labeler.hpp"

namespace testing_support {

using namespace explicable;

inline Problem make_problem(int w, int h, std::initializer_list<Cell> rooms, Cell start,
                            std::initializer_list<Cell> visible = {},
                            std::initializer_list<Cell> hidden = {}) {
  Problem p;
  p.id = "t";
  p.map.width = w;
  p.map.height = h;
  p.map.visible_obstacles = visible;
  p.map.hidden_obstacles = hidden;
  int id = 0;
  for (Cell c : rooms) p.map.rooms.push_back({id++, c});
  p.map.robot_start = start;
  p.goal = RoomSet::all(p.map.room_count());
  p.validate();
  return p;
}

/// Labels every action with the result of `fn(index, plan)`.
class FnLabeler : public Labeler {
 public:
  using Fn = std::function<Label(std::size_t, const CompositePlan&)>;
  explicit FnLabeler(Fn fn) : fn_(std::move(fn)) {}
  std::vector<Label> label(const CompositePlan& plan, const Problem&) const override {
    std::vector<Label> out;
    for (std::size_t i = 0; i < plan.size(); ++i) out.push_back(fn_(i, plan));
    return out;
  }

 private:
  Fn fn_;
};

inline FnLabeler all_explicable() {
  return FnLabeler([](std::size_t, const CompositePlan&) { return Label::Explicable; });
}

/// Independent distance field (Bellman-Ford style relaxation, no queue order).
inline int relax_distance(const GridMap& map, Cell from, Cell to, View view) {
  const int inf = 1 << 20;
  std::vector<int> d(static_cast<std::size_t>(map.width * map.height), inf);
  auto at = [&](Cell c) -> int& { return d[static_cast<std::size_t>(c.row * map.width + c.col)]; };
  at(from) = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int r = 0; r < map.height; ++r) {
      for (int c = 0; c < map.width; ++c) {
        Cell cell{r, c};
        if (map.blocked(cell, view)) continue;
        for (Direction dir : kDirections) {
          Cell n = step(cell, dir);
          if (!map.in_bounds(n) || map.blocked(n, view)) continue;
          if (at(n) + 1 < at(cell)) {
            at(cell) = at(n) + 1;
            changed = true;
          }
        }
      }
    }
  }
  return at(to) >= inf ? -1 : at(to);
}

struct FollowRun {
  Trace trace;
  std::size_t replans = 0;
  int injected_room = -1;
  std::size_t prefix_len = 0;  // observed actions up to the injected command
  CompositePlan plan_after;    // explicable plan adopted at the injection
};

/// Drives an episode whose human follows the replanner's predicted commands,
/// issuing each one after as many robot moves as the plan puts before it (or
/// when the robot goes idle), except that after `inject_after` visits it
/// commands a different room once.
inline FollowRun follow_with_injection(const Problem& p, const Labeler& labeler, int inject_after) {
  EpisodeOptions eo;
  eo.trace_id = "follow-" + p.id;
  Episode ep(p, &labeler, eo);
  FollowRun out;
  bool injected = false;
  std::size_t moves_since_command = 0;
  for (int guard = 0; guard < 10 * p.map.width * p.map.height && !ep.done(); ++guard) {
    std::size_t planned_moves = 0;
    int predicted = -1;
    for (const Action& a : ep.replanner()->remainder().actions) {
      if (a.is_command()) {
        predicted = a.room;
        break;
      }
      ++planned_moves;
    }
    bool idle = !ep.state().current_command;
    bool due = predicted >= 0 && (idle || moves_since_command >= planned_moves);
    if (!injected && idle && ep.state().visited.size() == inject_after) {
      int room = -1;
      for (int r : p.goal.ids()) {
        if (!ep.state().visited.contains(r) && r != predicted) {
          room = r;
          break;
        }
      }
      injected = true;
      if (room >= 0) {
        out.injected_room = room;
        ep.command(room);
        out.prefix_len = ep.events().size();
        out.plan_after = ep.replanner()->current().plan;
        moves_since_command = 0;
        continue;
      }
    }
    if (due) {
      ep.command(predicted);
      moves_since_command = 0;
    } else if (!idle) {
      ep.robot_step();
      ++moves_since_command;
    } else {
      break;
    }
  }
  out.replans = ep.replan_count();
  out.trace = ep.finish(ep.done() ? Outcome::Completed : Outcome::Aborted);
  return out;
}

}  // namespace testing_support
