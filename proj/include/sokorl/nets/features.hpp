#pragma once

#include "sokorl/diff/tensor.hpp"
#include "sokorl/phys/env.hpp"
#include "sokorl/soko/grid.hpp"

namespace sokorl::nets {

using Tensor = diff::TensorT<float>;

// Feature layout shared by all networks. Scales keep inputs roughly in [-1,1].
inline constexpr int kRayChannels = 4;  // depth, wall-hit, box-hit, target-dist
inline constexpr int kVecDim = 11;      // proprioception (7) + pose (4)
inline constexpr int kInstrDim = soko::kNumInstructions;
inline constexpr int kMaxBoxSlots = 8;
inline constexpr int kInstrCtxDim = 4 + 2 + 2 + 2;  // kind one-hot, dest rel, box rel, box-dest rel
inline constexpr int kCriticStateDim = kVecDim + 3 + 3 * kMaxBoxSlots + kInstrDim + 1 + kInstrCtxDim;

// dst is [kRayChannels, K] row-major.
void write_ray_image(float* dst, const phys::Observation& o, const phys::EnvConfig& cfg);

// dst is kVecDim floats: v_fwd, v_lat, omega, last actions, contact flags,
// then x, y (grid-scaled) and cos/sin heading.
void write_vec(float* dst, const phys::Observation& o);

// Policy/predictor conditioning: vec + one-hot instruction + beta_prev.
inline constexpr int kCondDim = kVecDim + kInstrDim + 1;
void write_cond(float* dst, const phys::Observation& o, soko::Instruction instr, bool beta_prev);

// Privileged critic state: pose, world velocity, box slots (x, y, present),
// instruction, beta_prev, plus instruction-context geometry (destination and
// pushed-box displacements). The context is required for a well-posed Q: once
// the robot has left its origin cell, pose + instruction alone no longer
// identify the destination. The candidate action is appended in-graph.
void write_critic_state(float* dst, const phys::WorldState& s, const phys::InstructionContext& ctx,
                        bool beta_prev);

// [1, 4, 10, 10] float copy of the binary channels (wall, target, agent, box).
Tensor abstract_tensor(const soko::AbstractState& s);
void write_abstract(float* dst, const soko::AbstractState& s);

// Per-(cell, ray) geometric features for perception attention: cos/sin of the
// angle between the cell bearing and the ray direction, cell range, ray depth,
// and their difference. dst is [kCells * K, kAttGeoDim] row-major; cell index
// runs y*10+x, matching AbstractState.
inline constexpr int kAttGeoDim = 5;
void write_attention_geo(float* dst, const phys::Observation& o, const phys::EnvConfig& cfg);

// Per-cell hint channels for the belief core: agent-cell indicator and cos/sin
// heading, [1, 3, 10, 10].
void write_cell_hints(float* dst, const phys::Observation& o);
inline constexpr int kCellHintChannels = 3;

}  // namespace sokorl::nets
