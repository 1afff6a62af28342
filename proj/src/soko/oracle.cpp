#include "sokorl/soko/oracle.hpp"

#include "sokorl/errors.hpp"
#include "sokorl/soko/solver.hpp"

namespace sokorl::soko {

namespace {

std::string state_key(const AbstractState& s) {
  static_assert(sizeof(s.ch) == 4 * kCells);
  return std::string(reinterpret_cast<const char*>(s.ch.data()), sizeof(s.ch));
}

}  // namespace

Instruction OraclePlanner::plan(const AbstractState& s) {
  std::string key = state_key(s);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  SokoGrid g = to_grid(s);
  if (g.solved()) {
    cache_.emplace(std::move(key), Instruction::Stay);
    return Instruction::Stay;
  }
  auto moves = solve(g, budget_);
  if (!moves) throw UnsolvableState("oracle planner: no plan within the node budget");

  SokoGrid cur = g;
  for (Move m : *moves) {
    cache_.emplace(state_key(to_abstract(cur)), to_instruction(m));
    cur = apply_move(cur, m).grid;
  }
  cache_.emplace(state_key(to_abstract(cur)), Instruction::Stay);
  return to_instruction(moves->front());
}

}  // namespace sokorl::soko
