#pragma once

#include <cstdint>

#include "sokorl/soko/grid.hpp"

namespace sokorl::soko {

struct LevelSpec {
  int difficulty = 1;

  // Region side length (including the region's own border walls) and box count.
  int region() const;
  int boxes() const;

  static LevelSpec of(int difficulty);
};

// Procedural generation by reverse play: boxes start on targets and are pulled
// away by random walks, which makes every emitted level solvable by
// construction; a solver pass verifies it anyway. Pure function of
// (spec, seed). Throws GenerationExhausted when the retry budget runs out.
SokoGrid generate_level(const LevelSpec& spec, uint64_t seed);

}  // namespace sokorl::soko
