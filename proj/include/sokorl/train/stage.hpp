#pragma once

#include <cstdint>
#include <mutex>
#include <string>

#include "sokorl/diff/params.hpp"
#include "sokorl/phys/env.hpp"

namespace sokorl::train {

// Bottom-up curriculum: each stage trains one module against already-trained
// (or privileged) substitutes for the others.
//
//   controller  random feasible instructions, completion labels as beta,
//               policy + critic learned; the completion predictor is fitted
//               on the same replay unless train_completion=false.
//   planner     instructions from the planner being learned, executed by the
//               frozen controller with predictor beta (or by the scripted
//               fixture with label beta when scripted_controller=true).
//   perception  planner instructions (computed from privileged state, which
//               only exists at training time), frozen controller, predictor
//               beta; belief snapshots and per-step state labels are stored
//               and the perception net + completion predictor train jointly.
enum class StageKind { Controller, Planner, Perception };

// Everything a training run needs, parsed from a key=value file (one pair per
// line, '#' starts a comment). Unknown keys are errors. Keys mirror the field
// names below; enums take lowercase words (stage=planner, body=tank).
struct TrainConfig {
  StageKind stage = StageKind::Controller;
  phys::BodyKind body = phys::BodyKind::Unicycle;
  uint64_t seed = 1;

  int levels = 64;            // generated training levels, cycled by episode seed
  int difficulty_min = 1;
  int difficulty_max = 1;

  int max_updates = 1000;     // optimizer steps; the run always stops here
  double max_seconds = 0.0;   // wall-clock cap, 0 disables
  int actors = 0;             // rollout threads; 0 = deterministic round-robin
  int rollouts_per_update = 1;  // episodes per update in round-robin mode

  int min_replay = 2000;        // buffer weight before the first update
  size_t replay_segments = 200000;  // physical buffer capacity, in steps
  size_t replay_abstract = 50000;
  int batch_segments = 8;
  int batch_abstract = 32;
  int segment_len = 16;
  int max_instructions = 40;

  int target_refresh = 200;   // updates between target-network syncs
  int checkpoint_every = 0;   // updates between checkpoints, 0 = end only
  int log_every = 20;         // updates between metrics lines
  int publish_every = 10;     // updates between snapshot publishes (threaded)

  float lr = 2e-4f;
  float grad_clip = 10.0f;
  float eta = 0.5f;
  float kl_coeff = 0.01f;
  float gamma_ctrl = 0.99f;
  float gamma_abs = 0.97f;
  int burn_in = 4;
  int mpo_samples = 16;
  int bootstrap_samples = 8;
  float logstd_lo = -1.5f;    // policy spread floor; keeps exploration alive

  bool train_completion = true;
  bool scripted_controller = false;  // planner stage only

  std::string out_dir = "run";
  std::string controller_ckpt;  // prerequisite checkpoints, stage-dependent
  std::string sensors_ckpt;
  std::string planner_ckpt;

  static TrainConfig from_file(const std::string& path);
  void validate() const;  // throws ConfigError on contradictions
};

struct StageResult {
  int updates = 0;
  long long env_steps = 0;
  long long episodes = 0;
  double wall_seconds = 0.0;
};

// Learner-to-actor parameter hand-off: the learner publishes its values into
// the master copy, actors refresh their own sets from it. One mutex makes
// both directions linearizable; versions are monotone so actors can skip
// refreshes when nothing changed.
class SnapshotStore {
 public:
  explicit SnapshotStore(diff::ParameterSetT<float>& master) : master_(master) {}

  void publish(const diff::ParameterSetT<float>& src) {
    std::lock_guard<std::mutex> lock(mu_);
    master_.copy_values_from(src);
    ++version_;
  }

  uint64_t refresh(diff::ParameterSetT<float>& dst, uint64_t have) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (version_ != have) dst.copy_values_from(master_);
    return version_;
  }

  uint64_t version() const {
    std::lock_guard<std::mutex> lock(mu_);
    return version_;
  }

 private:
  mutable std::mutex mu_;
  diff::ParameterSetT<float>& master_;
  uint64_t version_ = 1;
};

// Runs one stage to completion: generates levels, collects episodes, updates
// the stage's module, writes metrics.jsonl and checkpoints under out_dir.
// Round-robin mode (actors=0) is bit-reproducible for a fixed config.
StageResult train_stage(const TrainConfig& cfg);

}  // namespace sokorl::train
