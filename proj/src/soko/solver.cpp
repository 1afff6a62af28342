#include "sokorl/soko/solver.hpp"

#include <algorithm>
#include <cstdlib>
#include <queue>
#include <unordered_map>

namespace sokorl::soko {

namespace {

// Search state packed into 64 bits: 7 bits for the agent cell plus 7 per box
// (boxes sorted ascending). Up to 8 boxes fit; levels use at most 4.
uint64_t pack_state(uint8_t agent, const std::vector<uint8_t>& boxes) {
  uint64_t s = agent;
  int shift = 7;
  for (uint8_t b : boxes) {
    s |= static_cast<uint64_t>(b) << shift;
    shift += 7;
  }
  return s;
}

void unpack_state(uint64_t s, size_t nboxes, uint8_t& agent, std::vector<uint8_t>& boxes) {
  agent = static_cast<uint8_t>(s & 0x7f);
  boxes.resize(nboxes);
  int shift = 7;
  for (size_t i = 0; i < nboxes; ++i) {
    boxes[i] = static_cast<uint8_t>((s >> shift) & 0x7f);
    shift += 7;
  }
}

struct NodeInfo {
  int g = 0;
  uint64_t parent = 0;
  Move via = Move::North;
  bool has_parent = false;
};

}  // namespace

bool corner_deadlocked(const SokoGrid& grid, int box_idx) {
  if (grid.targets[box_idx]) return false;
  const int x = cell_x(box_idx), y = cell_y(box_idx);
  auto wall = [&](int dx, int dy) {
    const int nx = x + dx, ny = y + dy;
    return !in_bounds(nx, ny) || grid.wall_at(nx, ny);
  };
  const bool n = wall(0, 1), e = wall(1, 0), s = wall(0, -1), w = wall(-1, 0);
  return (n && e) || (e && s) || (s && w) || (w && n);
}

bool any_corner_deadlock(const SokoGrid& grid) {
  for (uint8_t b : grid.boxes)
    if (corner_deadlocked(grid, b)) return true;
  return false;
}

std::optional<std::vector<Move>> solve(const SokoGrid& grid, int node_budget) {
  if (grid.solved()) return std::vector<Move>{};
  if (any_corner_deadlock(grid)) return std::nullopt;

  // Distance from each cell to its nearest target (Manhattan, ignoring walls —
  // a lower bound is all the heuristic needs).
  std::array<int, kCells> near_target{};
  std::vector<int> tcells;
  for (int i = 0; i < kCells; ++i)
    if (grid.targets[i]) tcells.push_back(i);
  for (int i = 0; i < kCells; ++i) {
    int best = 1 << 20;
    for (int t : tcells)
      best = std::min(best, std::abs(cell_x(i) - cell_x(t)) + std::abs(cell_y(i) - cell_y(t)));
    near_target[static_cast<size_t>(i)] = best;
  }
  auto heuristic = [&](const std::vector<uint8_t>& boxes) {
    int h = 0;
    for (uint8_t b : boxes) h += near_target[b];
    return h;
  };

  const size_t nboxes = grid.boxes.size();
  const uint64_t start = pack_state(grid.agent, grid.boxes);
  std::unordered_map<uint64_t, NodeInfo> info;
  info.reserve(1 << 16);
  info[start] = NodeInfo{};

  using QEntry = std::pair<int, uint64_t>;  // (f, state)
  std::priority_queue<QEntry, std::vector<QEntry>, std::greater<>> open;
  open.emplace(heuristic(grid.boxes), start);

  SokoGrid work = grid;
  std::vector<uint8_t> boxes;
  int expanded = 0;
  while (!open.empty()) {
    auto [f, cur] = open.top();
    open.pop();
    uint8_t agent;
    unpack_state(cur, nboxes, agent, boxes);
    const NodeInfo cur_info = info[cur];
    if (f > cur_info.g + heuristic(boxes)) continue;  // stale queue entry
    if (++expanded > node_budget) return std::nullopt;

    work.agent = agent;
    work.boxes = boxes;
    for (int d = 0; d < kNumMoves; ++d) {
      const Move mv = static_cast<Move>(d);
      MoveResult r = apply_move(work, mv);
      if (!r.moved) continue;
      if (r.pushed) {
        // Find the pushed box's landing cell: it is the one not in the old set.
        bool dead = false;
        for (uint8_t b : r.grid.boxes)
          if (!std::binary_search(boxes.begin(), boxes.end(), b) &&
              corner_deadlocked(r.grid, b))
            dead = true;
        if (dead) continue;
      }
      const uint64_t nxt = pack_state(r.grid.agent, r.grid.boxes);
      const int ng = cur_info.g + 1;
      auto it = info.find(nxt);
      if (it != info.end() && it->second.g <= ng) continue;
      info[nxt] = NodeInfo{ng, cur, mv, true};
      // Returning on generation keeps optimality here: every unsolved state has
      // h >= 1, so any other frontier path costs at least g(cur)+1 = ng.
      if (r.solved) {
        std::vector<Move> plan;
        uint64_t s = nxt;
        while (info[s].has_parent) {
          plan.push_back(info[s].via);
          s = info[s].parent;
        }
        std::reverse(plan.begin(), plan.end());
        return plan;
      }
      open.emplace(ng + heuristic(r.grid.boxes), nxt);
    }
  }
  return std::nullopt;
}

}  // namespace sokorl::soko
