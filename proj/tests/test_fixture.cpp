#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "sokorl/errors.hpp"
#include "sokorl/phys/env.hpp"
#include "sokorl/phys/scripted.hpp"
#include "sokorl/rng.hpp"
#include "sokorl/soko/generate.hpp"
#include "sokorl/soko/grid.hpp"
#include "sokorl/soko/oracle.hpp"

namespace {

using namespace sokorl;
using namespace sokorl::phys;
using soko::cell_index;
using soko::Instruction;
using soko::SokoGrid;

SokoGrid room(int x0, int y0, int x1, int y1) {
  SokoGrid g;
  g.walls.fill(true);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) g.walls[static_cast<size_t>(cell_index(x, y))] = false;
  return g;
}

void put_box(SokoGrid& g, int x, int y) {
  g.boxes.insert(std::upper_bound(g.boxes.begin(), g.boxes.end(),
                                  static_cast<uint8_t>(cell_index(x, y))),
                 static_cast<uint8_t>(cell_index(x, y)));
}

// Runs one instruction with the scripted fixture; returns steps used, or -1
// when the per-instruction budget ran out before the completion label fired.
int run_instruction(const PhysicsEnv& env, WorldState& s, Instruction instr) {
  ScriptedController ctrl(env);
  InstructionContext ctx = env.begin_instruction(s, instr);
  ctrl.begin(s, ctx);
  for (int t = 1; t <= env.config().t_instr; ++t) {
    env.step(s, ctrl.act(s), 0);
    if (ctrl.done(s)) return t;
  }
  return -1;
}

struct EpisodeTrace {
  bool solved = false;
  int steps = 0;
  int instructions = 0;
  int failed_instructions = 0;
  bool planner_stuck = false;
  bool chain_consistent = true;   // completion states replay as legal moves
  double physical_reward = 0.0;   // task rewards only
  double symbolic_reward = 0.0;   // apply_move replays of completed moves
};

// Oracle planner + scripted controller under the evaluation protocol: failed
// instructions do not end the episode, the planner just replans from wherever
// the system drifted to.
EpisodeTrace run_episode(const PhysicsEnv& env, soko::OraclePlanner& oracle, uint64_t seed,
                         int timeout) {
  EpisodeTrace ep;
  auto [s, obs] = env.reset(seed);
  ScriptedController ctrl(env);
  SokoGrid shadow = env.grid();

  while (ep.steps < timeout && !env.solved(s)) {
    Instruction instr;
    try {
      instr = oracle.plan(env.project_abstract(s));
    } catch (const UnsolvableState&) {
      ep.planner_stuck = true;
      break;
    }
    if (instr == Instruction::Stay) break;  // planner sees a solved state

    InstructionContext ctx = env.begin_instruction(s, instr);
    ctrl.begin(s, ctx);
    ++ep.instructions;
    bool done = false, terminal = false;
    int t = 0;
    while (!done && !terminal && t < env.config().t_instr && ep.steps < timeout) {
      StepResult r = env.step(s, ctrl.act(s), timeout);
      ep.physical_reward += r.task_reward;
      ++ep.steps;
      ++t;
      done = env.completion_label(s, ctx);
      terminal = r.terminal;
    }
    const bool solved_now = env.solved(s);
    if (done || solved_now) {
      soko::MoveResult mr = soko::apply_move(shadow, soko::to_move(instr));
      shadow = mr.grid;
      ep.symbolic_reward += mr.reward;
      if (!(env.project_abstract(s) == soko::to_abstract(shadow))) ep.chain_consistent = false;
    } else {
      ++ep.failed_instructions;
    }
  }
  ep.solved = env.solved(s);
  return ep;
}

TEST_SUITE_BEGIN("fixture");

TEST_CASE("oracle planner: first optimal move, solved stay, dead state") {
  SUBCASE("one-push level points at the unique solving direction") {
    SokoGrid g = room(1, 1, 5, 5);
    g.agent = static_cast<uint8_t>(cell_index(2, 3));
    put_box(g, 3, 3);
    g.targets[static_cast<size_t>(cell_index(4, 3))] = true;
    soko::OraclePlanner oracle;
    CHECK(oracle.plan(soko::to_abstract(g)) == Instruction::East);
    // the planned line is primed: the post-push state is already cached
    CHECK(oracle.cache_size() >= 2);
  }

  SUBCASE("solved state maps to Stay") {
    SokoGrid g = room(1, 1, 5, 5);
    g.agent = static_cast<uint8_t>(cell_index(2, 3));
    put_box(g, 3, 3);
    g.targets[static_cast<size_t>(cell_index(3, 3))] = true;
    soko::OraclePlanner oracle;
    CHECK(oracle.plan(soko::to_abstract(g)) == Instruction::Stay);
  }

  SUBCASE("box wedged in a non-target corner raises the unsolvable error") {
    SokoGrid g = room(1, 1, 5, 5);
    g.agent = static_cast<uint8_t>(cell_index(3, 3));
    put_box(g, 1, 1);
    g.targets[static_cast<size_t>(cell_index(4, 4))] = true;
    soko::OraclePlanner oracle;
    CHECK_THROWS_AS(oracle.plan(soko::to_abstract(g)), UnsolvableState);
  }

  SUBCASE("malformed channels raise the unsolvable error") {
    SokoGrid g = room(1, 1, 5, 5);
    g.agent = static_cast<uint8_t>(cell_index(3, 3));
    put_box(g, 2, 2);
    g.targets[static_cast<size_t>(cell_index(4, 4))] = true;
    soko::AbstractState s = soko::to_abstract(g);
    s.ch[soko::AbstractState::kBox][cell_index(1, 1)] = 1;  // box/target mismatch
    soko::OraclePlanner oracle;
    CHECK_THROWS_AS(oracle.plan(s), UnsolvableState);
  }
}

TEST_CASE("scripted controller completes every instruction kind") {
  SokoGrid g = room(1, 1, 8, 8);
  g.agent = static_cast<uint8_t>(cell_index(3, 4));
  put_box(g, 4, 4);
  g.targets[static_cast<size_t>(cell_index(6, 4))] = true;
  g.walls[static_cast<size_t>(cell_index(3, 5))] = true;  // blocks North
  PhysicsEnv env(g, BodyKind::Unicycle);

  SUBCASE("stay holds position") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      CAPTURE(seed);
      auto [s, o] = env.reset(seed);
      CHECK(run_instruction(env, s, Instruction::Stay) == 1);
    }
  }

  SUBCASE("blocked move returns to the origin center") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      CAPTURE(seed);
      auto [s, o] = env.reset(seed);
      int t = run_instruction(env, s, Instruction::North);
      CHECK(t >= 1);
      CHECK(std::hypot(s.x - 3.5, s.y - 4.5) <= env.config().d_tol);
    }
  }

  SUBCASE("free move reaches the neighbor center") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      CAPTURE(seed);
      auto [s, o] = env.reset(seed);
      int t = run_instruction(env, s, Instruction::West);
      REQUIRE(t >= 1);
      CHECK(t < env.config().t_instr);
      CHECK(std::hypot(s.x - 2.5, s.y - 4.5) <= env.config().d_tol);
    }
  }

  SUBCASE("push moves the box one cell and parks behind it") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      CAPTURE(seed);
      auto [s, o] = env.reset(seed);
      int t = run_instruction(env, s, Instruction::East);
      REQUIRE(t >= 1);
      CHECK(t < env.config().t_instr);
      CHECK(std::hypot(s.x - 4.5, s.y - 4.5) <= env.config().d_tol);
      CHECK(std::hypot(s.boxes[0].x - 5.5, s.boxes[0].y - 4.5) <= env.config().d_tol);
    }
  }
}

TEST_CASE("scripted pushes chain across cells without losing alignment") {
  SokoGrid g = room(1, 1, 8, 8);
  g.agent = static_cast<uint8_t>(cell_index(2, 4));
  put_box(g, 3, 4);
  g.targets[static_cast<size_t>(cell_index(7, 4))] = true;
  PhysicsEnv env(g, BodyKind::Unicycle);
  auto [s, o] = env.reset(11);
  for (int k = 0; k < 4; ++k) {
    int t = run_instruction(env, s, Instruction::East);
    CAPTURE(k);
    REQUIRE(t >= 1);
  }
  CHECK(env.solved(s));
}

TEST_CASE("tank body completes the same maneuvers") {
  SokoGrid g = room(1, 1, 8, 8);
  g.agent = static_cast<uint8_t>(cell_index(3, 4));
  put_box(g, 4, 4);
  g.targets[static_cast<size_t>(cell_index(5, 4))] = true;
  PhysicsEnv env(g, BodyKind::Tank);
  auto [s, o] = env.reset(5);
  CHECK(run_instruction(env, s, Instruction::West) > 0);
  CHECK(run_instruction(env, s, Instruction::East) > 0);
  int t = run_instruction(env, s, Instruction::East);  // the push
  CHECK(t > 0);
  CHECK(env.solved(s));
}

TEST_CASE("oracle + scripted episodes: solve rate, legality, reward identity") {
  int solved = 0, total = 0;
  for (int difficulty : {1, 4}) {
    const int episodes = difficulty == 1 ? 8 : 4;
    for (int i = 0; i < episodes; ++i) {
      CAPTURE(difficulty);
      CAPTURE(i);
      SokoGrid g = soko::generate_level(soko::LevelSpec::of(difficulty),
                                        Rng::mix(777, static_cast<uint64_t>(i)));
      PhysicsEnv env(g, BodyKind::Unicycle);
      soko::OraclePlanner oracle;
      EpisodeTrace ep = run_episode(env, oracle, static_cast<uint64_t>(i), 4800);
      CHECK(ep.failed_instructions == 0);
      CHECK(ep.chain_consistent);
      CHECK_FALSE(ep.planner_stuck);
      CHECK(ep.physical_reward == ep.symbolic_reward);
      CHECK(ep.solved);
      solved += ep.solved ? 1 : 0;
      ++total;
    }
  }
  CHECK(solved == total);
}

TEST_SUITE_END();

}  // namespace
