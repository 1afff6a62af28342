#pragma once

#include <array>
#include <vector>

#include "sokorl/nets/features.hpp"
#include "sokorl/phys/env.hpp"
#include "sokorl/soko/grid.hpp"

namespace sokorl::train {

using Tensor = nets::Tensor;

// One physical step: everything the controller, completion, and perception
// updates need. The observation is stored raw (featurized at update time);
// the world state feeds the privileged critic.
struct PhyStep {
  phys::Observation obs;  // o_t, the input acted on
  phys::WorldState world;
  phys::InstructionContext ctx;
  bool beta_prev = false;         // predictor/policy input at this step
  std::array<float, 2> action{};  // executed a_t = tanh(u)
  std::array<float, 2> u{};       // pre-squash sample
  float r_ctrl = 0.0f;
  float r_task = 0.0f;
  bool env_terminal = false;    // solved after this step
  bool completion_label = false;  // instruction complete at o_t (pre-step)
  bool beta = false;            // the β actually emitted at this step
};

// Contiguous slice of one episode with the recurrent states that were live at
// its first step, so updates can resume the streams without replaying the
// whole episode. Belief tensors are only populated when perception is being
// trained (they are two orders of magnitude larger than the LSTM states).
struct PhySegment {
  std::vector<PhyStep> steps;
  std::vector<soko::AbstractState> labels;  // S*_t per step; empty unless requested
  phys::Observation final_obs;              // o_{t+L}
  phys::WorldState final_world;
  phys::InstructionContext final_ctx;  // instruction live at final obs
  bool final_beta_prev = false;

  Tensor policy_h, policy_c;
  Tensor pred_h, pred_c;
  Tensor belief_h, belief_c;  // empty unless perception training
};

// One abstract-time transition (instruction granularity).
struct AbstractTransition {
  soko::AbstractState s;
  soko::Instruction a = soko::Instruction::Stay;
  float r = 0.0f;  // accumulated task reward − 0.01
  soko::AbstractState s_next;
  bool terminal = false;
  bool induced_early_termination = false;
};

}  // namespace sokorl::train
