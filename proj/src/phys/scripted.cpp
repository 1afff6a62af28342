#include "sokorl/phys/scripted.hpp"

#include <algorithm>
#include <cmath>

namespace sokorl::phys {

namespace {
double clamp1(double v) { return std::clamp(v, -1.0, 1.0); }
double wrap(double a) { return std::remainder(a, 2 * M_PI); }
// critically damped heading servo (torque command from heading error)
double turn_cmd(double e, double omega) { return 3.0 * e - 1.2 * omega; }
}  // namespace

void ScriptedController::begin(const WorldState& /*s*/, const InstructionContext& ctx) {
  ctx_ = ctx;
  phase_ = 0;
}

std::array<double, 2> ScriptedController::body_map(double thrust, double turn) const {
  thrust = clamp1(thrust);
  turn = clamp1(turn);
  if (env_->body() == BodyKind::Unicycle) return {thrust, turn};
  return {clamp1(thrust - turn), clamp1(thrust + turn)};
}

// Navigation by axis-aligned line following: rotate toward the dominant error
// axis, then drive along it while steering onto the target's lattice line.
// Point pursuit is a trap for unicycles (the bearing turns as fast as the
// robot orbits); a fixed axis reference cannot orbit.
std::array<double, 2> ScriptedController::drive_to(const WorldState& s, double tx, double ty,
                                                   bool allow_reverse) const {
  const double ex = tx - s.x, ey = ty - s.y;
  const double v_fwd = s.vx * std::cos(s.psi) + s.vy * std::sin(s.psi);
  if (std::abs(ex) < 0.04 && std::abs(ey) < 0.04) return body_map(-0.8 * v_fwd, -s.omega);

  const bool x_major = std::abs(ex) >= std::abs(ey);
  const double phi_axis = x_major ? (ex > 0 ? 0.0 : M_PI) : (ey > 0 ? M_PI_2 : -M_PI_2);
  const double along = x_major ? std::abs(ex) : std::abs(ey);
  // lateral offset of the target line, positive to the left of the axis
  const double lat = x_major ? (phi_axis == 0.0 ? ey : -ey) : (ey > 0 ? -ex : ex);

  double shift = 0.0, drive_sign = 1.0;
  if (allow_reverse && std::abs(wrap(phi_axis - s.psi)) > M_PI / 2) {
    shift = M_PI;  // tail-first: nose stays put, thrust reverses
    drive_sign = -1.0;
  }
  const double e_axis = wrap(phi_axis + shift - s.psi);
  if (std::abs(e_axis) > 0.35) return body_map(-0.8 * v_fwd, turn_cmd(e_axis, s.omega));

  // Steering deviation has the same sign nose-relative in both drive
  // directions: backing up with the nose left of the axis also moves left.
  const double delta = std::clamp(1.2 * lat, -0.35, 0.35);
  const double e_steer = wrap(phi_axis + shift + delta - s.psi);
  const double gate = std::clamp(1.25 - 5.0 * std::abs(e_axis), 0.15, 1.0);
  const double thrust = drive_sign * std::min(2.2 * along, 1.0) * gate - 0.6 * v_fwd;
  return body_map(thrust, turn_cmd(e_steer, s.omega));
}

std::array<double, 2> ScriptedController::act(const WorldState& s) {
  using Kind = InstructionContext::Kind;
  const Vec2 origin = PhysicsEnv::cell_center(ctx_.origin_cell);
  switch (ctx_.kind) {
    case Kind::Stay:
    case Kind::Blocked:
      return drive_to(s, origin.x, origin.y, true);
    case Kind::Free: {
      const Vec2 dest = PhysicsEnv::cell_center(ctx_.dest_cell);
      return drive_to(s, dest.x, dest.y, true);
    }
    case Kind::Push:
      break;
  }

  const soko::Move mv = soko::to_move(ctx_.instr);
  const double dx = soko::move_dx(mv), dy = soko::move_dy(mv);
  const Vec2 box = s.boxes[static_cast<size_t>(ctx_.box_index)];
  const Vec2 box_dest = PhysicsEnv::cell_center(ctx_.box_dest_cell);
  const double remaining = (box_dest.x - box.x) * dx + (box_dest.y - box.y) * dy;
  if (phase_ < 3 && remaining <= 0.02) phase_ = 3;

  const double v_fwd = s.vx * std::cos(s.psi) + s.vy * std::sin(s.psi);
  const double phi_push = std::atan2(dy, dx);

  // Phases latch forward; re-evaluating entry gates every step lets the brake
  // and rotate branches cancel each other at a gate boundary.
  if (phase_ == 0) {
    // Any pose behind the box on the push axis will do: the creep phase
    // closes the along-axis gap and steers out residual lateral offset, so
    // demanding a point here just wastes budget (and chatters when the
    // previous push already left us in the band).
    const double along = (s.x - box.x) * dx + (s.y - box.y) * dy;
    const double lat0 = (s.x - box.x) * -dy + (s.y - box.y) * dx;
    if (along > -0.55 || along < -1.30 || std::abs(lat0) > 0.12) {
      const double px = box.x - 0.8 * dx, py = box.y - 0.8 * dy;
      return drive_to(s, px, py, true);
    }
    phase_ = 1;
  }
  if (phase_ == 1) {
    const double e = wrap(phi_push - s.psi);
    if (std::abs(e) > 0.25) return body_map(-0.8 * v_fwd, turn_cmd(e, s.omega));
    phase_ = 2;
  }
  if (phase_ == 2) {
    // Creep forward, steering toward the box's lateral line so the contact
    // stays face-on. Thrust tapers with the box's remaining travel and is
    // gated by nose alignment so a crooked entry cannot shove the box while
    // the heading is still settling.
    const double e_nose = wrap(phi_push - s.psi);
    const double lat = (box.x - s.x) * -dy + (box.y - s.y) * dx;
    const double delta = std::clamp(1.2 * lat, -0.3, 0.3);
    const double e = wrap(phi_push + delta - s.psi);
    const double gate = std::clamp(1.25 - 5.0 * std::abs(e_nose), 0.15, 1.0);
    const double thrust = std::clamp(3.0 * remaining, 0.12, 0.8) * gate - 0.5 * v_fwd;
    return body_map(thrust, turn_cmd(e, s.omega));
  }
  const Vec2 dest = PhysicsEnv::cell_center(ctx_.dest_cell);
  return drive_to(s, dest.x, dest.y, true);
}

}  // namespace sokorl::phys
