#pragma once

#include <string>
#include <unordered_map>

#include "sokorl/soko/grid.hpp"

namespace sokorl::soko {

// Instruction source backed by the symbolic solver. Called on the current
// abstract state every outer step, so controller drift and failed
// instructions are absorbed by replanning from wherever the system actually
// is. Solves are cached keyed on the abstract state; after each fresh solve
// the whole planned line is primed into the cache (a suffix of an optimal
// plan is optimal), so following the plan costs one search per episode.
class OraclePlanner {
 public:
  explicit OraclePlanner(int node_budget = 2'000'000) : budget_(node_budget) {}

  // Returns Stay on solved states; throws UnsolvableState when the state is
  // malformed, provably dead, or no plan fits the node budget.
  Instruction plan(const AbstractState& s);

  size_t cache_size() const { return cache_.size(); }

 private:
  int budget_;
  std::unordered_map<std::string, Instruction> cache_;
};

}  // namespace sokorl::soko
