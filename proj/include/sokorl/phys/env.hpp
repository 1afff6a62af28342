#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "sokorl/soko/grid.hpp"

namespace sokorl::phys {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

struct EnvConfig {
  double dt = 0.05;               // 20 control steps per second
  double cell = 1.0;              // cell (i,j) occupies [i,i+1) x [j,j+1)
  double robot_radius = 0.3;
  double box_half = 0.35;
  double peg_radius = 0.08;       // at every interior grid intersection
  double damping = 2.0;           // 1/s, applied to linear and angular velocity
  double max_force = 10.0;
  double max_turn_torque = 4.0;
  double d_tol = 0.1;             // completion tolerance to cell centers
  int t_instr = 120;              // per-instruction step budget
  int eval_timeout = 4800;        // 240 s

  int rays = 64;
  double fov = 2.0943951023931953;  // 120 degrees
  double max_ray_depth = 6.0;
  double backward_eps = 0.01;       // forward speed below -eps is "backward"
  double backward_penalty = -0.05;
  double completion_bonus = 4.0;
  double fail_penalty = -5.0;
};

enum class BodyKind : uint8_t { Unicycle = 0, Tank = 1 };

struct WorldState {
  double x = 0.0, y = 0.0, psi = 0.0;
  double vx = 0.0, vy = 0.0;  // world frame
  double omega = 0.0;
  std::array<double, 2> last_action{0.0, 0.0};
  std::vector<Vec2> boxes;
  int steps = 0;
  bool contact_box = false;
  bool contact_wall = false;
};

// Raw sensor bundle: K rays (depth to first obstacle, obstacle class, distance
// to the first visible target-pad edge) plus proprioception and pose.
struct Observation {
  std::vector<float> depth;       // clamped at max_ray_depth
  std::vector<uint8_t> hit;       // 0 none, 1 wall/peg, 2 box
  std::vector<float> target_dist; // sentinel max_ray_depth when none visible
  float v_fwd = 0.f, v_lat = 0.f, omega = 0.f;
  float last_a0 = 0.f, last_a1 = 0.f;
  float contact_box = 0.f, contact_wall = 0.f;
  double x = 0.0, y = 0.0, psi = 0.0;
};

struct StepResult {
  Observation obs;
  double task_reward = 0.0;
  bool terminal = false;
  bool solved = false;
};

// Ground-truth bookkeeping for one issued instruction, derived from the world
// state at issue time.
struct InstructionContext {
  soko::Instruction instr = soko::Instruction::Stay;
  enum class Kind : uint8_t { Stay, Blocked, Free, Push } kind = Kind::Stay;
  int origin_cell = -1;
  int dest_cell = -1;   // equals origin for Stay/Blocked
  int box_index = -1;   // WorldState.boxes index for Push
  int box_dest_cell = -1;
};

struct CtrlReward {
  double reward = 0.0;
  bool instr_done = false;
  bool instr_failed = false;
};

// Continuous embedding of one SokoGrid. The instance owns the static layout
// (walls, targets, pegs) and is immutable after construction, so one env can
// serve any number of threads as long as each thread owns its WorldState.
class PhysicsEnv {
 public:
  PhysicsEnv(const soko::SokoGrid& grid, BodyKind body, EnvConfig cfg = {});

  const EnvConfig& config() const { return cfg_; }
  BodyKind body() const { return body_; }
  const soko::SokoGrid& grid() const { return grid_; }

  // Robot at its cell center with a seeded random heading, boxes at centers.
  std::pair<WorldState, Observation> reset(uint64_t seed) const;

  // Semi-implicit Euler + per-axis collision resolution with quasi-static box
  // pushing. Components of `action` outside [-1,1] are clamped. `episode_limit`
  // trips the terminal flag on the step counter (0 disables).
  StepResult step(WorldState& state, std::array<double, 2> action, int episode_limit) const;

  soko::AbstractState project_abstract(const WorldState& state) const;
  bool solved(const WorldState& state) const;

  Observation observe(const WorldState& state) const;

  InstructionContext begin_instruction(const WorldState& state, soko::Instruction instr) const;
  bool completion_label(const WorldState& state, const InstructionContext& ctx) const;
  CtrlReward controller_reward(const WorldState& prev, const WorldState& next,
                               const InstructionContext& ctx, int steps_elapsed) const;

  static Vec2 cell_center(int cell_idx);

 private:
  void integrate(WorldState& s, const std::array<double, 2>& action) const;
  void resolve_axis(WorldState& s, int axis, double dir, double prev_coord) const;
  bool box_can_move(const WorldState& s, size_t box, Vec2 delta) const;
  int box_on_target_count(const WorldState& s) const;

  soko::SokoGrid grid_;
  BodyKind body_;
  EnvConfig cfg_;
  std::vector<Vec2> pegs_;  // interior intersections adjacent to open cells
};

}  // namespace sokorl::phys
