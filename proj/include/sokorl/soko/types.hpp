#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace sokorl::soko {

// Canvas is always 10x10 cells; playable regions are embedded and padded with
// walls. Coordinates are (x, y) = (column, row) with North = +y, East = +x.
inline constexpr int kN = 10;
inline constexpr int kCells = kN * kN;

enum class Move : uint8_t { North = 0, East = 1, South = 2, West = 3 };

// Planner/controller interface: the four moves plus Stay, in this index order.
enum class Instruction : uint8_t { North = 0, East = 1, South = 2, West = 3, Stay = 4 };

inline constexpr int kNumMoves = 4;
inline constexpr int kNumInstructions = 5;

inline constexpr std::array<int, 4> kDx = {0, 1, 0, -1};
inline constexpr std::array<int, 4> kDy = {1, 0, -1, 0};

inline int move_dx(Move m) { return kDx[static_cast<int>(m)]; }
inline int move_dy(Move m) { return kDy[static_cast<int>(m)]; }

inline Instruction to_instruction(Move m) { return static_cast<Instruction>(m); }
inline bool is_move(Instruction a) { return a != Instruction::Stay; }
inline Move to_move(Instruction a) { return static_cast<Move>(a); }

inline const char* name(Move m) {
  static constexpr const char* kNames[] = {"N", "E", "S", "W"};
  return kNames[static_cast<int>(m)];
}
inline const char* name(Instruction a) {
  static constexpr const char* kNames[] = {"N", "E", "S", "W", "Stay"};
  return kNames[static_cast<int>(a)];
}

inline bool in_bounds(int x, int y) { return x >= 0 && x < kN && y >= 0 && y < kN; }
inline int cell_index(int x, int y) { return y * kN + x; }
inline int cell_x(int idx) { return idx % kN; }
inline int cell_y(int idx) { return idx / kN; }

}  // namespace sokorl::soko
