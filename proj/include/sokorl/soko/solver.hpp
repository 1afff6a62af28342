#pragma once

#include <optional>
#include <vector>

#include "sokorl/soko/grid.hpp"

namespace sokorl::soko {

// True when the box cell is wedged between two orthogonally adjacent walls and
// is not a target: such a box can never be moved again, so the position cannot
// be solved.
bool corner_deadlocked(const SokoGrid& grid, int box_idx);
bool any_corner_deadlock(const SokoGrid& grid);

// Best-first search on agent moves: f = moves so far + sum over boxes of the
// Manhattan distance to the nearest target. The heuristic never overestimates
// (each move shifts at most one box by one cell), so returned plans have
// minimal move count. Returns nullopt when the node budget is exhausted or the
// position is provably dead.
std::optional<std::vector<Move>> solve(const SokoGrid& grid, int node_budget = 2'000'000);

}  // namespace sokorl::soko
