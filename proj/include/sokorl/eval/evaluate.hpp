#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sokorl/nets/completion.hpp"
#include "sokorl/nets/controller.hpp"
#include "sokorl/nets/perception.hpp"
#include "sokorl/nets/planner.hpp"
#include "sokorl/phys/env.hpp"

namespace sokorl::eval {

// The three stack axes: who issues instructions, what abstract state the
// planner sees, and what executes them. Privileged simulator reads
// (project_abstract, completion labels) happen only for the combinations that
// request them; the fully learned stack touches nothing but observations, and
// every evaluation episode reports its privileged-read count so tests can pin
// that to zero.
enum class PlannerSource { Oracle, Learned };
enum class AbstractSource { Truth, Perception };
enum class CtrlSource { Learned, Scripted };

struct EvalStack {
  PlannerSource planner = PlannerSource::Oracle;
  AbstractSource abstract_src = AbstractSource::Truth;
  CtrlSource controller = CtrlSource::Learned;
};

std::string stack_name(const EvalStack& s);

// Non-owning module bundle; only the members a stack selects are read.
struct EvalModules {
  const nets::ControllerPolicy* policy = nullptr;
  const nets::CompletionPredictor* predictor = nullptr;
  const nets::PerceptionNet* perception = nullptr;
  const nets::PlannerNet* planner = nullptr;
};

struct EpisodeSpec {
  EvalStack stack;
  int timeout_steps = 4800;
  int oracle_budget = 2'000'000;
  bool keep_actions = false;  // record the action stream for trajectory logs
};

struct EpisodeRecord {
  int index = 0;
  int difficulty = 0;
  uint64_t level_seed = 0;
  uint64_t reset_seed = 0;
  bool solved = false;
  int steps = 0;
  int instructions = 0;
  int privileged_reads = 0;  // project_abstract / completion-label calls
  double reward = 0.0;
  std::vector<std::array<double, 2>> actions;
};

// Accuracy tallies for the perception estimate along an episode, scored on
// the decoded abstract state the planner would consume. A cell counts as
// observed once any ray sample point (0.1 spacing up to the hit distance) has
// landed in it. Scoring reads ground truth; it exists for measurement and is
// excluded from the privileged-read count.
struct PerceptionProbe {
  long long steps = 0;
  double cell_acc_sum = 0.0;   // per-step accuracy over ever-observed cells
  double agent_acc_sum = 0.0;  // per-step agent-cell hit indicator
};

// One greedy evaluation episode: deterministic controller mean, argmax
// planner, thresholded completion predictor with a forced positive once an
// instruction has run T_instr steps without one (the episode then replans
// rather than terminating). Ends on solve or the step timeout. An oracle
// planner that proves the projected state unsolvable (or exhausts its budget)
// fails the episode on the spot.
EpisodeRecord eval_episode(const phys::PhysicsEnv& env, const EvalModules& m,
                           const EpisodeSpec& spec, uint64_t reset_seed,
                           PerceptionProbe* probe = nullptr);

struct EvalRow {
  int difficulty = 0;
  int episodes = 0;
  int solved = 0;
  double success = 0.0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double mean_steps = 0.0;
};

struct EvalReport {
  std::string stack;
  phys::BodyKind body = phys::BodyKind::Unicycle;
  uint64_t seed = 0;
  std::vector<EvalRow> rows;
  std::vector<std::pair<std::string, std::string>> checkpoints;  // path, content hash
  std::string table() const;  // human-readable rendering of the rows
};

struct EvalConfig {
  EvalStack stack;
  phys::BodyKind body = phys::BodyKind::Unicycle;
  int difficulty_min = 1;
  int difficulty_max = 1;
  int episodes = 100;  // per difficulty; 0 gives an empty report
  int timeout_steps = 4800;
  uint64_t seed = 1;
  int workers = 1;
  int oracle_budget = 2'000'000;
  std::string trajectory_path;  // JSONL episode log, empty disables
};

// Runs episodes on freshly generated levels (one per episode seed), in
// parallel workers when asked; results are a pure function of the config, so
// the report and trajectory log are identical for any worker count.
EvalReport evaluate(const EvalModules& m, const EvalConfig& cfg);

// FNV-1a over the file bytes, for checkpoint fingerprints in reports.
// Throws CheckpointError naming the path when unreadable.
std::string file_fingerprint(const std::string& path);

struct ReplayCheck {
  int episodes = 0;
  int mismatches = 0;
  std::string first_mismatch;  // empty when everything replayed exactly
};

// Re-executes every episode in a trajectory JSONL file from its recorded
// seeds and action stream and demands bit-exact agreement on solved flag,
// step count, and total reward.
ReplayCheck replay_trajectories(const std::string& path);

// Controller milestone measurement: fresh levels, random feasible
// instructions, greedy policy, ground-truth completion labels ending each
// instruction (a lapsed budget moves on to the next instruction instead of
// ending the episode). The predictor, when given, is scored per step against
// the labels without influencing control.
struct ControllerEval {
  long long instructions = 0;
  long long completed = 0;  // label observed within the instruction budget
  double completion_rate = 0.0;
  long long pos_steps = 0, neg_steps = 0, pos_hits = 0, neg_hits = 0;
  double balanced_accuracy = 0.0;  // (TPR + TNR) / 2, 0 when the predictor is absent
};

struct ControllerEvalConfig {
  int difficulty = 1;
  int episodes = 100;
  int instructions_per_episode = 20;
  phys::BodyKind body = phys::BodyKind::Unicycle;
  uint64_t seed = 1;
  int workers = 1;
};

ControllerEval eval_controller(const nets::ControllerPolicy& policy,
                               const nets::CompletionPredictor* predictor,
                               const ControllerEvalConfig& cfg);

// Perception milestone measurement: greedy full-stack episodes accumulated
// into one probe (see PerceptionProbe for the metric definition).
struct PerceptionEval {
  double cell_accuracy = 0.0;
  double agent_accuracy = 0.0;
  long long steps = 0;
};

struct PerceptionEvalConfig {
  int difficulty = 1;
  int episodes = 50;
  int timeout_steps = 4800;
  phys::BodyKind body = phys::BodyKind::Unicycle;
  uint64_t seed = 1;
  int workers = 1;
};

PerceptionEval eval_perception(const EvalModules& m, const PerceptionEvalConfig& cfg);

}  // namespace sokorl::eval
