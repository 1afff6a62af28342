#include "sokorl/phys/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sokorl/errors.hpp"
#include "sokorl/rng.hpp"

namespace sokorl::phys {

namespace {

constexpr double kSlack = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

int cell_of(double coord) {
  return static_cast<int>(clampd(std::floor(coord), 0.0, soko::kN - 1.0));
}

}  // namespace

Vec2 PhysicsEnv::cell_center(int cell_idx) {
  return {soko::cell_x(cell_idx) + 0.5, soko::cell_y(cell_idx) + 0.5};
}

PhysicsEnv::PhysicsEnv(const soko::SokoGrid& grid, BodyKind body, EnvConfig cfg)
    : grid_(grid), body_(body), cfg_(cfg) {
  grid_.validate();
  if (!(cfg_.d_tol < cfg_.cell / 2 - cfg_.box_half))
    throw ConfigError("d_tol must be below cell/2 - box_half");
  if (std::abs(cfg_.dt * cfg_.eval_timeout - 240.0) > 1e-9)
    throw ConfigError("dt * eval_timeout must equal 240 s");
  // Terminal speed is max_force/damping; one step of it must stay below the
  // robot radius or collision resolution could tunnel.
  if (cfg_.max_force / cfg_.damping * cfg_.dt >= cfg_.robot_radius)
    throw ConfigError("speed per step exceeds the robot radius");
  // Pegs buried in wall geometry can never be reached or seen.
  for (int iy = 1; iy < soko::kN; ++iy)
    for (int ix = 1; ix < soko::kN; ++ix) {
      const bool open = !grid_.wall_at(ix - 1, iy - 1) || !grid_.wall_at(ix, iy - 1) ||
                        !grid_.wall_at(ix - 1, iy) || !grid_.wall_at(ix, iy);
      if (open) pegs_.push_back({static_cast<double>(ix), static_cast<double>(iy)});
    }
}

std::pair<WorldState, Observation> PhysicsEnv::reset(uint64_t seed) const {
  Rng rng(Rng::mix(seed, 0x9e77));
  WorldState s;
  const Vec2 ac = cell_center(grid_.agent);
  s.x = ac.x;
  s.y = ac.y;
  s.psi = rng.uniform(-M_PI, M_PI);
  s.boxes.reserve(grid_.boxes.size());
  for (uint8_t b : grid_.boxes) s.boxes.push_back(cell_center(b));
  return {s, observe(s)};
}

void PhysicsEnv::integrate(WorldState& s, const std::array<double, 2>& action) const {
  double force, torque;
  if (body_ == BodyKind::Unicycle) {
    force = action[0] * cfg_.max_force;
    torque = action[1] * cfg_.max_turn_torque;
  } else {
    // Tank: per-track forces; thrust is their mean, torque their difference.
    force = 0.5 * (action[0] + action[1]) * cfg_.max_force;
    torque = 0.5 * (action[1] - action[0]) * cfg_.max_turn_torque;
  }
  const double keep = 1.0 - cfg_.damping * cfg_.dt;
  s.omega = s.omega * keep + torque * cfg_.dt;
  s.psi = std::remainder(s.psi + s.omega * cfg_.dt, 2.0 * M_PI);
  const double ax = force * std::cos(s.psi);
  const double ay = force * std::sin(s.psi);
  s.vx = s.vx * keep + ax * cfg_.dt;
  s.vy = s.vy * keep + ay * cfg_.dt;
}

bool PhysicsEnv::box_can_move(const WorldState& s, size_t box, Vec2 delta) const {
  const double h = cfg_.box_half;
  const double nx = s.boxes[box].x + delta.x;
  const double ny = s.boxes[box].y + delta.y;
  const double x0 = nx - h, x1 = nx + h, y0 = ny - h, y1 = ny + h;
  if (x0 < 0.0 || y0 < 0.0 || x1 > soko::kN || y1 > soko::kN) return false;
  for (int cy = cell_of(y0); cy <= cell_of(y1 - kSlack); ++cy)
    for (int cx = cell_of(x0); cx <= cell_of(x1 - kSlack); ++cx)
      if (grid_.wall_at(cx, cy)) return false;
  for (const Vec2& p : pegs_) {
    const double dx = p.x - clampd(p.x, x0, x1);
    const double dy = p.y - clampd(p.y, y0, y1);
    if (dx * dx + dy * dy < cfg_.peg_radius * cfg_.peg_radius - kSlack) return false;
  }
  for (size_t i = 0; i < s.boxes.size(); ++i) {
    if (i == box) continue;
    if (std::abs(s.boxes[i].x - nx) < 2 * h - kSlack &&
        std::abs(s.boxes[i].y - ny) < 2 * h - kSlack)
      return false;
  }
  return true;
}

void PhysicsEnv::resolve_axis(WorldState& s, int axis, double dir, double prev_coord) const {
  if (dir == 0.0) return;
  const double r = cfg_.robot_radius;
  auto pos = [&](int ax) -> double& { return ax == 0 ? s.x : s.y; };
  auto vel = [&](int ax) -> double& { return ax == 0 ? s.vx : s.vy; };
  const int other = 1 - axis;

  // Contact coordinate on `axis` for the robot against an AABB; NaN when the
  // overlap cannot be resolved along this axis.
  auto aabb_contact = [&](double cx, double cy, double hx, double hy) -> double {
    const double c_axis = axis == 0 ? cx : cy;
    const double c_other = axis == 0 ? cy : cx;
    const double h_axis = axis == 0 ? hx : hy;
    const double h_other = axis == 0 ? hy : hx;
    const double o = pos(other);
    if (o >= c_other - h_other && o <= c_other + h_other)
      return dir > 0 ? c_axis - h_axis - r : c_axis + h_axis + r;
    const double d_o = o - clampd(o, c_other - h_other, c_other + h_other);
    if (std::abs(d_o) >= r) return std::numeric_limits<double>::quiet_NaN();
    const double reach = std::sqrt(r * r - d_o * d_o);
    const double corner = dir > 0 ? c_axis - h_axis : c_axis + h_axis;
    return corner - dir * reach;
  };
  auto circle_contact = [&](double px, double py, double rad) -> double {
    const double p_axis = axis == 0 ? px : py;
    const double p_other = axis == 0 ? py : px;
    const double rr = r + rad;
    const double d_o = pos(other) - p_other;
    if (std::abs(d_o) >= rr) return std::numeric_limits<double>::quiet_NaN();
    return p_axis - dir * std::sqrt(rr * rr - d_o * d_o);
  };
  auto overlaps_aabb = [&](double cx, double cy, double hx, double hy) {
    const double dx = s.x - clampd(s.x, cx - hx, cx + hx);
    const double dy = s.y - clampd(s.y, cy - hy, cy + hy);
    return dx * dx + dy * dy < r * r - kSlack;
  };

  std::vector<bool> push_failed(s.boxes.size(), false);
  for (int iter = 0; iter < 8; ++iter) {
    double best = dir > 0 ? kInf : -kInf;
    int best_kind = 0;  // 1 wall/peg, 2 box
    int best_box = -1;

    const int rcx = cell_of(s.x), rcy = cell_of(s.y);
    for (int cy = std::max(0, rcy - 1); cy <= std::min(soko::kN - 1, rcy + 1); ++cy)
      for (int cx = std::max(0, rcx - 1); cx <= std::min(soko::kN - 1, rcx + 1); ++cx) {
        if (!grid_.wall_at(cx, cy)) continue;
        if (!overlaps_aabb(cx + 0.5, cy + 0.5, 0.5, 0.5)) continue;
        const double c = aabb_contact(cx + 0.5, cy + 0.5, 0.5, 0.5);
        if (std::isnan(c)) continue;
        if ((dir > 0 && c < best) || (dir < 0 && c > best)) {
          best = c;
          best_kind = 1;
          best_box = -1;
        }
      }
    for (const Vec2& p : pegs_) {
      const double dx = s.x - p.x, dy = s.y - p.y;
      const double rr = r + cfg_.peg_radius;
      if (dx * dx + dy * dy >= rr * rr - kSlack) continue;
      const double c = circle_contact(p.x, p.y, cfg_.peg_radius);
      if (std::isnan(c)) continue;
      if ((dir > 0 && c < best) || (dir < 0 && c > best)) {
        best = c;
        best_kind = 1;
        best_box = -1;
      }
    }
    const double h = cfg_.box_half;
    for (size_t b = 0; b < s.boxes.size(); ++b) {
      if (!overlaps_aabb(s.boxes[b].x, s.boxes[b].y, h, h)) continue;
      const double c = aabb_contact(s.boxes[b].x, s.boxes[b].y, h, h);
      if (std::isnan(c)) continue;
      if ((dir > 0 && c < best) || (dir < 0 && c > best)) {
        best = c;
        best_kind = 2;
        best_box = static_cast<int>(b);
      }
    }

    if (best_kind == 0) return;

    if (best_kind == 2) {
      s.contact_box = true;
      const size_t b = static_cast<size_t>(best_box);
      const double box_other = axis == 0 ? s.boxes[b].y : s.boxes[b].x;
      const bool face = std::abs(pos(other) - box_other) <= h;
      if (face && !push_failed[b]) {
        // Quasi-static push: shift the box just enough to end the overlap.
        const double box_axis = axis == 0 ? s.boxes[b].x : s.boxes[b].y;
        const double want = pos(axis) + dir * (r + h);  // required box coordinate
        const double shift = want - box_axis;
        if (shift * dir > 0.0) {
          Vec2 delta{axis == 0 ? shift : 0.0, axis == 0 ? 0.0 : shift};
          if (box_can_move(s, b, delta)) {
            s.boxes[b].x += delta.x;
            s.boxes[b].y += delta.y;
            continue;
          }
          push_failed[b] = true;
        }
      }
    } else {
      s.contact_wall = true;
    }

    // Clamp the robot at the contact; never move it forward along dir.
    if ((dir > 0 && best < pos(axis)) || (dir < 0 && best > pos(axis))) {
      pos(axis) = best;
      vel(axis) = 0.0;
    } else {
      return;
    }
  }
  // Safety net: revert the move if the iteration cap left an unresolved
  // overlap (the pre-move coordinate is overlap-free by induction).
  pos(axis) = prev_coord;
  vel(axis) = 0.0;
}

StepResult PhysicsEnv::step(WorldState& s, std::array<double, 2> action,
                            int episode_limit) const {
  action[0] = clampd(action[0], -1.0, 1.0);
  action[1] = clampd(action[1], -1.0, 1.0);
  const int prev_on = box_on_target_count(s);
  const bool prev_solved = solved(s);

  s.contact_box = false;
  s.contact_wall = false;
  integrate(s, action);
  const double dx = s.vx * cfg_.dt, dy = s.vy * cfg_.dt;
  const double px = s.x, py = s.y;
  s.x += dx;
  resolve_axis(s, 0, dx > 0 ? 1.0 : (dx < 0 ? -1.0 : 0.0), px);
  s.y += dy;
  resolve_axis(s, 1, dy > 0 ? 1.0 : (dy < 0 ? -1.0 : 0.0), py);
  s.last_action = action;
  s.steps += 1;

  StepResult res;
  res.task_reward = static_cast<double>(box_on_target_count(s) - prev_on);
  res.solved = solved(s);
  if (res.solved && !prev_solved) res.task_reward += 10.0;
  res.terminal = res.solved || (episode_limit > 0 && s.steps >= episode_limit);
  res.obs = observe(s);
  return res;
}

int PhysicsEnv::box_on_target_count(const WorldState& s) const {
  int n = 0;
  for (const Vec2& b : s.boxes)
    if (grid_.target_at(cell_of(b.x), cell_of(b.y))) ++n;
  return n;
}

bool PhysicsEnv::solved(const WorldState& s) const {
  return !s.boxes.empty() &&
         box_on_target_count(s) == static_cast<int>(s.boxes.size());
}

soko::AbstractState PhysicsEnv::project_abstract(const WorldState& s) const {
  soko::AbstractState a;
  for (int i = 0; i < soko::kCells; ++i) {
    a.ch[soko::AbstractState::kWall][i] = grid_.walls[static_cast<size_t>(i)] ? 1 : 0;
    a.ch[soko::AbstractState::kTarget][i] = grid_.targets[static_cast<size_t>(i)] ? 1 : 0;
  }
  for (const Vec2& b : s.boxes)
    a.ch[soko::AbstractState::kBox][soko::cell_index(cell_of(b.x), cell_of(b.y))] = 1;
  a.ch[soko::AbstractState::kAgent][soko::cell_index(cell_of(s.x), cell_of(s.y))] = 1;
  return a;
}

Observation PhysicsEnv::observe(const WorldState& s) const {
  Observation o;
  const int k = cfg_.rays;
  o.depth.resize(static_cast<size_t>(k));
  o.hit.resize(static_cast<size_t>(k));
  o.target_dist.resize(static_cast<size_t>(k));

  for (int i = 0; i < k; ++i) {
    const double th = s.psi - cfg_.fov / 2 + cfg_.fov * i / (k - 1);
    const double dxr = std::cos(th), dyr = std::sin(th);
    double depth = cfg_.max_ray_depth;
    uint8_t klass = 0;
    double target_t = -1.0;

    // Grid walk for wall hits and the first target-pad edge.
    {
      int cx = cell_of(s.x), cy = cell_of(s.y);
      if (grid_.target_at(cx, cy)) target_t = 0.0;
      const int step_x = dxr > 0 ? 1 : -1;
      const int step_y = dyr > 0 ? 1 : -1;
      const double tdx = dxr != 0.0 ? std::abs(1.0 / dxr) : kInf;
      const double tdy = dyr != 0.0 ? std::abs(1.0 / dyr) : kInf;
      double tmx = dxr != 0.0
                       ? (dxr > 0 ? (cx + 1 - s.x) / dxr : (cx - s.x) / dxr)
                       : kInf;
      double tmy = dyr != 0.0
                       ? (dyr > 0 ? (cy + 1 - s.y) / dyr : (cy - s.y) / dyr)
                       : kInf;
      while (true) {
        double entry;
        if (tmx < tmy) {
          entry = tmx;
          tmx += tdx;
          cx += step_x;
        } else {
          entry = tmy;
          tmy += tdy;
          cy += step_y;
        }
        if (entry >= depth) break;
        if (!soko::in_bounds(cx, cy)) break;
        if (grid_.wall_at(cx, cy)) {
          depth = entry;
          klass = 1;
          break;
        }
        if (target_t < 0.0 && grid_.target_at(cx, cy)) target_t = entry;
      }
    }

    // Pegs count as wall-class obstacles.
    for (const Vec2& p : pegs_) {
      const double ox = p.x - s.x, oy = p.y - s.y;
      const double b = ox * dxr + oy * dyr;
      if (b <= 0.0) continue;
      const double d2 = ox * ox + oy * oy - b * b;
      const double r2 = cfg_.peg_radius * cfg_.peg_radius;
      if (d2 >= r2) continue;
      const double t = b - std::sqrt(r2 - d2);
      if (t > 0.0 && t < depth) {
        depth = t;
        klass = 1;
      }
    }

    // Boxes via the slab test.
    for (const Vec2& bx : s.boxes) {
      const double x0 = bx.x - cfg_.box_half, x1 = bx.x + cfg_.box_half;
      const double y0 = bx.y - cfg_.box_half, y1 = bx.y + cfg_.box_half;
      double tmin = 0.0, tmax = kInf;
      bool miss = false;
      for (int ax = 0; ax < 2; ++ax) {
        const double od = ax == 0 ? s.x : s.y;
        const double dd = ax == 0 ? dxr : dyr;
        const double lo = ax == 0 ? x0 : y0, hi = ax == 0 ? x1 : y1;
        if (dd == 0.0) {
          if (od < lo || od > hi) miss = true;
        } else {
          double t0 = (lo - od) / dd, t1 = (hi - od) / dd;
          if (t0 > t1) std::swap(t0, t1);
          tmin = std::max(tmin, t0);
          tmax = std::min(tmax, t1);
        }
      }
      if (miss || tmin > tmax || tmin <= 0.0) continue;
      if (tmin < depth) {
        depth = tmin;
        klass = 2;
      }
    }

    o.depth[static_cast<size_t>(i)] = static_cast<float>(std::min(depth, cfg_.max_ray_depth));
    o.hit[static_cast<size_t>(i)] = depth < cfg_.max_ray_depth ? klass : 0;
    o.target_dist[static_cast<size_t>(i)] = static_cast<float>(
        (target_t >= 0.0 && target_t <= depth) ? target_t : cfg_.max_ray_depth);
  }

  const double c = std::cos(s.psi), sn = std::sin(s.psi);
  o.v_fwd = static_cast<float>(s.vx * c + s.vy * sn);
  o.v_lat = static_cast<float>(-s.vx * sn + s.vy * c);
  o.omega = static_cast<float>(s.omega);
  o.last_a0 = static_cast<float>(s.last_action[0]);
  o.last_a1 = static_cast<float>(s.last_action[1]);
  o.contact_box = s.contact_box ? 1.f : 0.f;
  o.contact_wall = s.contact_wall ? 1.f : 0.f;
  o.x = s.x;
  o.y = s.y;
  o.psi = s.psi;
  return o;
}

InstructionContext PhysicsEnv::begin_instruction(const WorldState& s,
                                                 soko::Instruction instr) const {
  InstructionContext ctx;
  ctx.instr = instr;
  ctx.origin_cell = soko::cell_index(cell_of(s.x), cell_of(s.y));
  ctx.dest_cell = ctx.origin_cell;
  if (!soko::is_move(instr)) return ctx;

  const soko::Move mv = soko::to_move(instr);
  const int dx = soko::move_dx(mv), dy = soko::move_dy(mv);
  const int ox = soko::cell_x(ctx.origin_cell), oy = soko::cell_y(ctx.origin_cell);
  const int nx = ox + dx, ny = oy + dy;
  if (!soko::in_bounds(nx, ny) || grid_.wall_at(nx, ny)) {
    ctx.kind = InstructionContext::Kind::Blocked;
    return ctx;
  }
  ctx.dest_cell = soko::cell_index(nx, ny);
  for (size_t b = 0; b < s.boxes.size(); ++b)
    if (soko::cell_index(cell_of(s.boxes[b].x), cell_of(s.boxes[b].y)) == ctx.dest_cell) {
      ctx.kind = InstructionContext::Kind::Push;
      ctx.box_index = static_cast<int>(b);
      const int bx = nx + dx, by = ny + dy;
      ctx.box_dest_cell = soko::in_bounds(bx, by) ? soko::cell_index(bx, by) : -1;
      return ctx;
    }
  ctx.kind = InstructionContext::Kind::Free;
  return ctx;
}

bool PhysicsEnv::completion_label(const WorldState& s, const InstructionContext& ctx) const {
  auto near_center = [&](double x, double y, int cell_idx) {
    if (cell_idx < 0) return false;
    const Vec2 cc = cell_center(cell_idx);
    const double dx = x - cc.x, dy = y - cc.y;
    return dx * dx + dy * dy <= cfg_.d_tol * cfg_.d_tol;
  };
  switch (ctx.kind) {
    case InstructionContext::Kind::Stay:
    case InstructionContext::Kind::Blocked:
      return near_center(s.x, s.y, ctx.origin_cell);
    case InstructionContext::Kind::Free:
      return near_center(s.x, s.y, ctx.dest_cell);
    case InstructionContext::Kind::Push: {
      if (!near_center(s.x, s.y, ctx.dest_cell)) return false;
      const Vec2& b = s.boxes[static_cast<size_t>(ctx.box_index)];
      return near_center(b.x, b.y, ctx.box_dest_cell);
    }
  }
  return false;
}

CtrlReward PhysicsEnv::controller_reward(const WorldState& /*prev*/, const WorldState& next,
                                         const InstructionContext& ctx,
                                         int steps_elapsed) const {
  CtrlReward r;
  if (completion_label(next, ctx)) {
    r.instr_done = true;
    r.reward += cfg_.completion_bonus;
  } else if (steps_elapsed >= cfg_.t_instr) {
    r.instr_failed = true;
    r.reward += cfg_.fail_penalty;
  }
  const double vf = next.vx * std::cos(next.psi) + next.vy * std::sin(next.psi);
  if (vf < -cfg_.backward_eps) r.reward += cfg_.backward_penalty;
  return r;
}

}  // namespace sokorl::phys
