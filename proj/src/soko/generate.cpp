#include "sokorl/soko/generate.hpp"

#include <algorithm>

#include "sokorl/errors.hpp"
#include "sokorl/rng.hpp"
#include "sokorl/soko/solver.hpp"

namespace sokorl::soko {

int LevelSpec::region() const {
  static constexpr int kSize[] = {5, 7, 7, 8, 10};
  return kSize[difficulty - 1];
}

int LevelSpec::boxes() const {
  static constexpr int kBoxes[] = {1, 1, 2, 3, 4};
  return kBoxes[difficulty - 1];
}

LevelSpec LevelSpec::of(int difficulty) {
  if (difficulty < 1 || difficulty > 5)
    throw ConfigError("difficulty must be 1..5, got " + std::to_string(difficulty));
  return LevelSpec{difficulty};
}

namespace {

// One reverse-play attempt; returns an invalid grid (empty boxes) on failure.
SokoGrid attempt(const LevelSpec& spec, Rng& rng) {
  const int g = spec.region();
  const int k = spec.boxes();
  const int ox = static_cast<int>(rng.below(static_cast<uint64_t>(kN - g + 1)));
  const int oy = static_cast<int>(rng.below(static_cast<uint64_t>(kN - g + 1)));

  SokoGrid grid;
  grid.walls.fill(true);
  std::vector<int> interior;
  for (int y = oy + 1; y < oy + g - 1; ++y)
    for (int x = ox + 1; x < ox + g - 1; ++x) {
      grid.walls[static_cast<size_t>(cell_index(x, y))] = false;
      interior.push_back(cell_index(x, y));
    }

  // Sprinkle a few inner walls; solvability is re-established by construction
  // below and double-checked by the solver.
  const int max_inner = static_cast<int>(interior.size()) / 5;
  const int inner = max_inner > 0 ? static_cast<int>(rng.below(static_cast<uint64_t>(max_inner + 1))) : 0;
  std::vector<int> free_cells = interior;
  for (int i = 0; i < inner; ++i) {
    const size_t pick = rng.below(free_cells.size());
    grid.walls[static_cast<size_t>(free_cells[pick])] = true;
    free_cells.erase(free_cells.begin() + static_cast<long>(pick));
  }
  if (static_cast<int>(free_cells.size()) < k + 1) return SokoGrid{};

  // Solved seed position: targets with boxes on them, agent elsewhere.
  std::vector<int> picks = free_cells;
  for (int i = 0; i < k; ++i) {
    const size_t pick = rng.below(picks.size());
    const int cell = picks[pick];
    picks.erase(picks.begin() + static_cast<long>(pick));
    grid.targets[static_cast<size_t>(cell)] = true;
    grid.boxes.push_back(static_cast<uint8_t>(cell));
  }
  std::sort(grid.boxes.begin(), grid.boxes.end());
  grid.agent = static_cast<uint8_t>(picks[rng.below(picks.size())]);

  // Reverse play: walks plus pulls. A pull steps the agent from p to p-d and
  // drags the box from p+d onto p; reversed, it is a legal push, so the final
  // position is solvable by construction.
  const int steps = g * g + 12 * k + 8;
  auto free_cell = [&](int x, int y) {
    return in_bounds(x, y) && !grid.wall_at(x, y) && !grid.box_at(x, y);
  };
  for (int s = 0; s < steps; ++s) {
    const int d = static_cast<int>(rng.below(4));
    const int ax = cell_x(grid.agent), ay = cell_y(grid.agent);
    const int bx = ax + kDx[d], by = ay + kDy[d];    // box to drag
    const int tx = ax - kDx[d], ty = ay - kDy[d];    // agent destination
    const bool can_pull = in_bounds(bx, by) && grid.box_at(bx, by) && free_cell(tx, ty);
    if (can_pull && rng.bernoulli(0.6)) {
      auto& bs = grid.boxes;
      bs.erase(std::find(bs.begin(), bs.end(), static_cast<uint8_t>(cell_index(bx, by))));
      bs.insert(std::upper_bound(bs.begin(), bs.end(), static_cast<uint8_t>(grid.agent)),
                static_cast<uint8_t>(grid.agent));
      grid.agent = static_cast<uint8_t>(cell_index(tx, ty));
    } else if (free_cell(bx, by)) {
      grid.agent = static_cast<uint8_t>(cell_index(bx, by));
    }
  }
  return grid;
}

}  // namespace

SokoGrid generate_level(const LevelSpec& spec, uint64_t seed) {
  if (spec.difficulty < 1 || spec.difficulty > 5) throw ConfigError("difficulty must be 1..5");
  constexpr int kAttempts = 400;
  for (int a = 0; a < kAttempts; ++a) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(spec.difficulty), static_cast<uint64_t>(a)));
    SokoGrid grid = attempt(spec, rng);
    if (grid.boxes.empty() || grid.solved()) continue;
    grid.validate();
    auto plan = solve(grid);
    if (!plan || plan->empty()) continue;
    return grid;
  }
  throw GenerationExhausted("no solvable level after " + std::to_string(kAttempts) +
                            " attempts (difficulty " + std::to_string(spec.difficulty) + ")");
}

}  // namespace sokorl::soko
