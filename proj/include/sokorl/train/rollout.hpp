#pragma once

#include <vector>

#include "sokorl/nets/completion.hpp"
#include "sokorl/nets/controller.hpp"
#include "sokorl/nets/perception.hpp"
#include "sokorl/nets/planner.hpp"
#include "sokorl/phys/scripted.hpp"
#include "sokorl/train/transitions.hpp"

namespace sokorl::train {

enum class InstrSource { Random, Planner };
enum class BetaSource { Label, Predictor };
enum class CtrlKind { Scripted, Policy };

// Non-owning module bundle. Only the members a RolloutConfig selects are read.
struct RolloutModules {
  const nets::ControllerPolicy* policy = nullptr;
  const nets::CompletionPredictor* predictor = nullptr;
  const nets::PerceptionNet* perception = nullptr;  // belief snapshots only
  const nets::PlannerNet* planner = nullptr;
};

struct RolloutConfig {
  InstrSource instr_source = InstrSource::Random;
  BetaSource beta_source = BetaSource::Label;
  CtrlKind controller = CtrlKind::Scripted;
  bool sample_actions = true;  // stochastic policy / sampled planner and beta
  int max_instructions = 40;   // outer budget; exhaustion truncates (no terminal)
  int segment_len = 16;
  bool store_labels = false;  // per-step abstract-state labels
  bool store_belief = false;  // perception belief snapshots at segment starts
  // Advance and snapshot the predictor stream even when beta comes from the
  // labels, so the same rollouts can train the completion predictor.
  bool track_predictor = false;
};

struct EpisodeStats {
  int physical_steps = 0;
  int instructions = 0;  // issued
  int completed = 0;     // inner loop exited via beta
  bool solved = false;
  bool timed_out = false;  // ended by instruction timeout (training terminal)
  bool truncated = false;  // ended by the outer budget
  double task_reward = 0.0;
  double ctrl_reward = 0.0;
  // reward-conservation identity parts:
  double stored_abstract_r = 0.0;
  double dropped_task_reward = 0.0;
  int stored_abstract_steps = 0;
};

struct EpisodeResult {
  std::vector<PhySegment> segments;
  std::vector<AbstractTransition> abstract;
  EpisodeStats stats;
};

// Uniform draw over Stay plus the moves that would actually change the
// position (blocked moves and blocked pushes excluded).
soko::Instruction random_feasible_instruction(const soko::SokoGrid& grid, Rng& rng);

// One training episode with time abstraction: per instruction, the inner loop
// runs the controller until it signals completion, the per-instruction budget
// lapses, or the environment terminates; an instruction timeout terminates the
// whole episode, its abstract transition is dropped, and the preceding one is
// marked induced_early_termination.
EpisodeResult run_episode(const phys::PhysicsEnv& env, const RolloutModules& m,
                          const RolloutConfig& cfg, uint64_t seed);

}  // namespace sokorl::train
