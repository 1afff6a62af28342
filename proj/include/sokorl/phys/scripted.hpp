#pragma once

#include <array>

#include "sokorl/phys/env.hpp"

namespace sokorl::phys {

// Proportional-law instruction follower reading privileged world state. Test
// fixture only: it decouples environment and planner work from controller
// training and serves as the upper-reference controller in evaluation suites.
// Pushes run as a three-phase maneuver: line up behind the box, shove it to
// its destination center, then back off onto the robot's own destination.
class ScriptedController {
 public:
  explicit ScriptedController(const PhysicsEnv& env) : env_(&env) {}

  void begin(const WorldState& s, const InstructionContext& ctx);
  std::array<double, 2> act(const WorldState& s);

  // True completion label (the fixture is privileged, so its completion
  // prediction is simply the ground truth).
  bool done(const WorldState& s) const { return env_->completion_label(s, ctx_); }

  const InstructionContext& context() const { return ctx_; }

 private:
  std::array<double, 2> drive_to(const WorldState& s, double tx, double ty,
                                 bool allow_reverse) const;
  std::array<double, 2> body_map(double thrust, double turn) const;

  const PhysicsEnv* env_;
  InstructionContext ctx_{};
  int phase_ = 0;
};

}  // namespace sokorl::phys
