#pragma once

// Exhaustive breadth-first search over full Sokoban states: no heuristic, no
// pruning. Used as the independent optimality/solvability oracle for the A*
// solver. Only shares apply_move (the rules) with the code under test.

#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_map>

#include "sokorl/soko/grid.hpp"

namespace sokorl_test {

inline uint64_t pack(const sokorl::soko::SokoGrid& g) {
  uint64_t s = g.agent;
  int shift = 7;
  for (uint8_t b : g.boxes) {
    s |= static_cast<uint64_t>(b) << shift;
    shift += 7;
  }
  return s;
}

// Optimal move count to a solved state, or nullopt if unreachable. Explores at
// most max_states distinct states (throws if exceeded, so tests fail loudly
// rather than silently passing on a truncated search).
inline std::optional<int> bfs_optimal_moves(const sokorl::soko::SokoGrid& start,
                                            size_t max_states = 5'000'000) {
  using namespace sokorl::soko;
  if (start.solved()) return 0;
  std::unordered_map<uint64_t, int> dist;
  std::deque<SokoGrid> queue;
  dist[pack(start)] = 0;
  queue.push_back(start);
  while (!queue.empty()) {
    SokoGrid cur = std::move(queue.front());
    queue.pop_front();
    const int d = dist[pack(cur)];
    for (int m = 0; m < kNumMoves; ++m) {
      MoveResult r = apply_move(cur, static_cast<Move>(m));
      if (!r.moved) continue;
      const uint64_t key = pack(r.grid);
      if (dist.count(key)) continue;
      if (r.solved) return d + 1;
      dist[key] = d + 1;
      if (dist.size() > max_states) throw std::runtime_error("BFS oracle state cap exceeded");
      queue.push_back(std::move(r.grid));
    }
  }
  return std::nullopt;
}

}  // namespace sokorl_test
