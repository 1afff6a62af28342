#include "sokorl/nets/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace sokorl::nets {

namespace {
constexpr float kVelScale = 1.0f / 3.0f;
constexpr float kOmegaScale = 1.0f / 2.0f;
constexpr float kPosScale = 1.0f / static_cast<float>(soko::kN);
}  // namespace

void write_ray_image(float* dst, const phys::Observation& o, const phys::EnvConfig& cfg) {
  const int k = static_cast<int>(o.depth.size());
  const float inv = 1.0f / static_cast<float>(cfg.max_ray_depth);
  for (int i = 0; i < k; ++i) {
    dst[0 * k + i] = o.depth[static_cast<size_t>(i)] * inv;
    dst[1 * k + i] = o.hit[static_cast<size_t>(i)] == 1 ? 1.0f : 0.0f;
    dst[2 * k + i] = o.hit[static_cast<size_t>(i)] == 2 ? 1.0f : 0.0f;
    dst[3 * k + i] = o.target_dist[static_cast<size_t>(i)] * inv;
  }
}

void write_vec(float* dst, const phys::Observation& o) {
  dst[0] = o.v_fwd * kVelScale;
  dst[1] = o.v_lat * kVelScale;
  dst[2] = o.omega * kOmegaScale;
  dst[3] = o.last_a0;
  dst[4] = o.last_a1;
  dst[5] = o.contact_box;
  dst[6] = o.contact_wall;
  dst[7] = static_cast<float>(o.x) * kPosScale;
  dst[8] = static_cast<float>(o.y) * kPosScale;
  dst[9] = static_cast<float>(std::cos(o.psi));
  dst[10] = static_cast<float>(std::sin(o.psi));
}

void write_cond(float* dst, const phys::Observation& o, soko::Instruction instr, bool beta_prev) {
  write_vec(dst, o);
  std::memset(dst + kVecDim, 0, sizeof(float) * kInstrDim);
  dst[kVecDim + static_cast<int>(instr)] = 1.0f;
  dst[kVecDim + kInstrDim] = beta_prev ? 1.0f : 0.0f;
}

void write_critic_state(float* dst, const phys::WorldState& s, const phys::InstructionContext& ctx,
                        bool beta_prev) {
  int i = 0;
  const double c = std::cos(s.psi), sn = std::sin(s.psi);
  dst[i++] = static_cast<float>(s.vx * c + s.vy * sn) * kVelScale;
  dst[i++] = static_cast<float>(-s.vx * sn + s.vy * c) * kVelScale;
  dst[i++] = static_cast<float>(s.omega) * kOmegaScale;
  dst[i++] = static_cast<float>(s.last_action[0]);
  dst[i++] = static_cast<float>(s.last_action[1]);
  dst[i++] = s.contact_box ? 1.0f : 0.0f;
  dst[i++] = s.contact_wall ? 1.0f : 0.0f;
  dst[i++] = static_cast<float>(s.x) * kPosScale;
  dst[i++] = static_cast<float>(s.y) * kPosScale;
  dst[i++] = static_cast<float>(c);
  dst[i++] = static_cast<float>(sn);
  dst[i++] = static_cast<float>(s.vx) * kVelScale;
  dst[i++] = static_cast<float>(s.vy) * kVelScale;
  dst[i++] = static_cast<float>(s.omega) * kOmegaScale;
  for (int b = 0; b < kMaxBoxSlots; ++b) {
    if (b < static_cast<int>(s.boxes.size())) {
      dst[i++] = static_cast<float>(s.boxes[static_cast<size_t>(b)].x) * kPosScale;
      dst[i++] = static_cast<float>(s.boxes[static_cast<size_t>(b)].y) * kPosScale;
      dst[i++] = 1.0f;
    } else {
      dst[i++] = 0.0f;
      dst[i++] = 0.0f;
      dst[i++] = 0.0f;
    }
  }
  for (int a = 0; a < kInstrDim; ++a) dst[i++] = a == static_cast<int>(ctx.instr) ? 1.0f : 0.0f;
  dst[i++] = beta_prev ? 1.0f : 0.0f;
  for (int k = 0; k < 4; ++k) dst[i++] = k == static_cast<int>(ctx.kind) ? 1.0f : 0.0f;
  const int dest_cell = ctx.dest_cell < 0 ? ctx.origin_cell : ctx.dest_cell;
  if (dest_cell >= 0) {
    const auto dest = phys::PhysicsEnv::cell_center(dest_cell);
    dst[i++] = static_cast<float>(dest.x - s.x) * kPosScale;
    dst[i++] = static_cast<float>(dest.y - s.y) * kPosScale;
  } else {
    dst[i++] = 0.0f;
    dst[i++] = 0.0f;
  }
  if (ctx.kind == phys::InstructionContext::Kind::Push && ctx.box_index >= 0 &&
      ctx.box_index < static_cast<int>(s.boxes.size())) {
    const auto& b = s.boxes[static_cast<size_t>(ctx.box_index)];
    const auto bdest = phys::PhysicsEnv::cell_center(ctx.box_dest_cell);
    dst[i++] = static_cast<float>(b.x - s.x) * kPosScale;
    dst[i++] = static_cast<float>(b.y - s.y) * kPosScale;
    dst[i++] = static_cast<float>(bdest.x - b.x) * kPosScale;
    dst[i++] = static_cast<float>(bdest.y - b.y) * kPosScale;
  } else {
    dst[i++] = 0.0f;
    dst[i++] = 0.0f;
    dst[i++] = 0.0f;
    dst[i++] = 0.0f;
  }
}

void write_abstract(float* dst, const soko::AbstractState& s) {
  for (int c = 0; c < 4; ++c)
    for (int j = 0; j < soko::kCells; ++j)
      dst[c * soko::kCells + j] = s.ch[static_cast<size_t>(c)][static_cast<size_t>(j)] ? 1.0f
                                                                                       : 0.0f;
}

Tensor abstract_tensor(const soko::AbstractState& s) {
  Tensor t({1, 4, soko::kN, soko::kN});
  write_abstract(t.data.data(), s);
  return t;
}

void write_attention_geo(float* dst, const phys::Observation& o, const phys::EnvConfig& cfg) {
  const int k = cfg.rays;
  const float inv = 1.0f / static_cast<float>(cfg.max_ray_depth);
  for (int cell = 0; cell < soko::kCells; ++cell) {
    const double cx = soko::cell_x(cell) + 0.5, cy = soko::cell_y(cell) + 0.5;
    const double dx = cx - o.x, dy = cy - o.y;
    const double bearing = std::atan2(dy, dx) - o.psi;
    const float range = static_cast<float>(std::hypot(dx, dy)) * inv;
    for (int r = 0; r < k; ++r) {
      const double phi = cfg.fov / 2 - cfg.fov * r / (cfg.rays - 1);
      const double delta = bearing - phi;
      float* f = dst + (static_cast<int64_t>(cell) * k + r) * kAttGeoDim;
      f[0] = static_cast<float>(std::cos(delta));
      f[1] = static_cast<float>(std::sin(delta));
      f[2] = range;
      f[3] = o.depth[static_cast<size_t>(r)] * inv;
      f[4] = o.depth[static_cast<size_t>(r)] * inv - range;
    }
  }
}

void write_cell_hints(float* dst, const phys::Observation& o) {
  std::memset(dst, 0, sizeof(float) * kCellHintChannels * soko::kCells);
  const int ax = std::clamp(static_cast<int>(std::floor(o.x)), 0, soko::kN - 1);
  const int ay = std::clamp(static_cast<int>(std::floor(o.y)), 0, soko::kN - 1);
  dst[soko::cell_index(ax, ay)] = 1.0f;
  const float c = static_cast<float>(std::cos(o.psi));
  const float s = static_cast<float>(std::sin(o.psi));
  for (int j = 0; j < soko::kCells; ++j) {
    dst[1 * soko::kCells + j] = c;
    dst[2 * soko::kCells + j] = s;
  }
}

}  // namespace sokorl::nets
