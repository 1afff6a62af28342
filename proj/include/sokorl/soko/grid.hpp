#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sokorl/soko/types.hpp"

namespace sokorl::soko {

// Symbolic Sokoban position on the 10x10 canvas. Boxes are kept as a sorted
// list of cell indices so equal positions compare equal.
struct SokoGrid {
  int width = kN;
  int height = kN;
  std::array<bool, kCells> walls{};
  std::array<bool, kCells> targets{};
  std::vector<uint8_t> boxes;  // sorted cell indices
  uint8_t agent = 0;

  bool wall_at(int x, int y) const { return walls[static_cast<size_t>(cell_index(x, y))]; }
  bool target_at(int x, int y) const { return targets[static_cast<size_t>(cell_index(x, y))]; }
  bool box_at(int idx) const;
  bool box_at(int x, int y) const { return box_at(cell_index(x, y)); }
  bool solved() const;

  bool operator==(const SokoGrid& o) const {
    return walls == o.walls && targets == o.targets && boxes == o.boxes && agent == o.agent;
  }

  // Throws InconsistentLabel when an invariant is broken.
  void validate() const;
};

struct MoveResult {
  SokoGrid grid;
  float reward = 0.0f;
  bool solved = false;
  bool pushed = false;    // a box actually moved
  bool moved = false;     // the agent actually moved
};

// Standard Sokoban semantics. Illegal moves are no-ops with zero reward.
// Rewards: +1 box pushed onto a target, -1 pushed off, +10 when the move makes
// the position solved (additive with the push reward).
MoveResult apply_move(const SokoGrid& grid, Move move);

// Shared planner-facing encoding: 10x10x4 binary grid, channel order wall,
// target, agent, box. A box-on-target cell sets both box and target bits.
struct AbstractState {
  // channel-major: ch[c][cell]
  std::array<std::array<uint8_t, kCells>, 4> ch{};

  static constexpr int kWall = 0, kTarget = 1, kAgent = 2, kBox = 3;

  bool operator==(const AbstractState& o) const { return ch == o.ch; }
  uint64_t fingerprint() const;  // FNV-1a over all channel bytes
  int agent_cell() const;        // -1 when no agent bit is set
};

AbstractState to_abstract(const SokoGrid& grid);

// Inverse conversion; throws UnsolvableState when the channels do not describe
// a legal Sokoban position (used by the oracle planner on perceived states).
SokoGrid to_grid(const AbstractState& s);

// Text format, one char per cell: '#' wall, '.' target, '$' box, '*' box on
// target, '@' agent, '+' agent on target, ' ' empty. The first line is the
// northernmost row (y = 9).
std::string to_text(const SokoGrid& grid);
SokoGrid parse_grid(const std::string& text);

// Levels file: grids separated by one blank line.
std::vector<SokoGrid> parse_levels(const std::string& text);
std::string to_levels_text(const std::vector<SokoGrid>& grids);

}  // namespace sokorl::soko
