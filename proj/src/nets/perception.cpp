#include "sokorl/nets/perception.hpp"

#include <cmath>

namespace sokorl::nets {

PerceptionNet::PerceptionNet(diff::NetCtx<float> ctx, const RayEncoder& enc, int rays,
                             PerceptionConfig cfg)
    : enc_(&enc), cfg_(cfg), rays_(rays) {
  att_ = diff::MLP<float>(ctx, "att", {kAttGeoDim, cfg_.att_hidden, 1});
  compress_ = diff::Conv2dLayer<float>(ctx, "compress", RayEncoder::kChannels + kCellHintChannels,
                                       cfg_.belief_ch, 1, 1, 0);
  belief_ = diff::ConvLSTMCell<float>(ctx, "belief", cfg_.belief_ch, cfg_.belief_ch, 3);
  cell_head_ = diff::Conv2dLayer<float>(ctx, "cell_head", cfg_.belief_ch, kCellClasses, 1, 1, 0);
  agent_head_ = diff::Conv2dLayer<float>(ctx, "agent_head", cfg_.belief_ch, 1, 1, 1, 0);
}

PerceptionNet::Belief PerceptionNet::initial_belief() const {
  return {Tensor::zeros({1, cfg_.belief_ch, soko::kN, soko::kN}),
          Tensor::zeros({1, cfg_.belief_ch, soko::kN, soko::kN})};
}

PerceptionNet::GState PerceptionNet::state_refs(Graph& g, const Tensor& h,
                                                const Tensor& c) const {
  return {g.constant(h), g.constant(c)};
}

Ref PerceptionNet::attended_map(Graph& g, const phys::Observation& o,
                                const phys::EnvConfig& env_cfg) const {
  Tensor rays({1, kRayChannels, rays_});
  write_ray_image(rays.data.data(), o, env_cfg);
  Ref per_ray = (*enc_)(g, g.constant(std::move(rays)));                  // [1, C, K]
  Ref feat = g.transpose2d(g.reshape(per_ray, {RayEncoder::kChannels, rays_}));  // [K, C]

  Tensor geo({soko::kCells * rays_, kAttGeoDim});
  write_attention_geo(geo.data.data(), o, env_cfg);
  Ref logits = g.reshape(att_(g, g.constant(std::move(geo))), {soko::kCells, rays_});
  Ref weights = g.softmax_rows(logits);        // [cells, K]
  Ref columns = g.matmul(weights, feat);       // [cells, C]
  return g.reshape(g.transpose2d(columns), {1, RayEncoder::kChannels, soko::kN, soko::kN});
}

PerceptionNet::StepRefs PerceptionNet::step(Graph& g, const phys::Observation& o,
                                            const phys::EnvConfig& env_cfg, GState s) const {
  Ref att_map = attended_map(g, o, env_cfg);
  Tensor hints({1, kCellHintChannels, soko::kN, soko::kN});
  write_cell_hints(hints.data.data(), o);
  Ref x = g.relu(compress_(g, g.concat_axis1({att_map, g.constant(std::move(hints))})));
  auto next = belief_.step(g, x, {s.h, s.c});
  Ref cell = g.transpose2d(g.reshape(cell_head_(g, next.h), {kCellClasses, soko::kCells}));
  Ref agent = g.reshape(agent_head_(g, next.h), {1, soko::kCells});
  return {cell, agent, {next.h, next.c}};
}

PerceptionNet::Estimate PerceptionNet::estimate(Belief& belief, const phys::Observation& o,
                                                const phys::EnvConfig& env_cfg) const {
  Graph g(false);
  StepRefs out = step(g, o, env_cfg, state_refs(g, belief.h, belief.c));
  belief.h = g.val(out.state.h);
  belief.c = g.val(out.state.c);
  Estimate e;
  e.cell_probs = g.val(g.softmax_rows(out.cell_logits));
  e.agent_probs = g.val(g.softmax_rows(out.agent_logits));
  e.s_hat = decode(e.cell_probs, e.agent_probs);
  return e;
}

PerceptionNet::Attention PerceptionNet::attention(const phys::Observation& o,
                                                  const phys::EnvConfig& env_cfg) const {
  Graph g(false);
  Tensor rays({1, kRayChannels, rays_});
  write_ray_image(rays.data.data(), o, env_cfg);
  Ref per_ray = (*enc_)(g, g.constant(std::move(rays)));
  Ref feat = g.transpose2d(g.reshape(per_ray, {RayEncoder::kChannels, rays_}));
  Tensor geo({soko::kCells * rays_, kAttGeoDim});
  write_attention_geo(geo.data.data(), o, env_cfg);
  Ref logits = g.reshape(att_(g, g.constant(std::move(geo))), {soko::kCells, rays_});
  Ref weights = g.softmax_rows(logits);
  Ref columns = g.matmul(weights, feat);
  return {g.val(weights), g.val(columns)};
}

soko::AbstractState PerceptionNet::decode(const Tensor& cell_probs, const Tensor& agent_probs) {
  soko::AbstractState s;
  std::array<bool, soko::kCells> wall{};
  for (int j = 0; j < soko::kCells; ++j) {
    int best = 0;
    for (int c = 1; c < kCellClasses; ++c)
      if (cell_probs[j * kCellClasses + c] > cell_probs[j * kCellClasses + best]) best = c;
    const auto cls = static_cast<CellClass>(best);
    wall[static_cast<size_t>(j)] = cls == CellClass::Wall;
    const size_t sj = static_cast<size_t>(j);
    s.ch[soko::AbstractState::kWall][sj] = cls == CellClass::Wall;
    s.ch[soko::AbstractState::kBox][sj] =
        cls == CellClass::Box || cls == CellClass::BoxOnTarget;
    s.ch[soko::AbstractState::kTarget][sj] =
        cls == CellClass::Target || cls == CellClass::BoxOnTarget;
  }
  int agent = -1;
  for (int j = 0; j < soko::kCells; ++j) {
    if (wall[static_cast<size_t>(j)]) continue;
    if (agent < 0 || agent_probs[j] > agent_probs[agent]) agent = j;
  }
  if (agent < 0) {  // degenerate all-wall prediction: fall back to the global argmax
    agent = 0;
    for (int j = 1; j < soko::kCells; ++j)
      if (agent_probs[j] > agent_probs[agent]) agent = j;
  }
  s.ch[soko::AbstractState::kAgent][static_cast<size_t>(agent)] = 1;
  return s;
}

std::array<int, soko::kCells> cell_class_labels(const soko::AbstractState& label) {
  std::array<int, soko::kCells> out{};
  for (int j = 0; j < soko::kCells; ++j) {
    const size_t sj = static_cast<size_t>(j);
    const bool w = label.ch[soko::AbstractState::kWall][sj];
    const bool b = label.ch[soko::AbstractState::kBox][sj];
    const bool t = label.ch[soko::AbstractState::kTarget][sj];
    const bool a = label.ch[soko::AbstractState::kAgent][sj];
    if (w && (b || t || a))
      throw InconsistentLabel("perception label: wall overlaps box/target/agent at cell " +
                              std::to_string(j));
    if (w)
      out[sj] = static_cast<int>(CellClass::Wall);
    else if (b && t)
      out[sj] = static_cast<int>(CellClass::BoxOnTarget);
    else if (b)
      out[sj] = static_cast<int>(CellClass::Box);
    else if (t)
      out[sj] = static_cast<int>(CellClass::Target);
    else
      out[sj] = static_cast<int>(CellClass::None);
  }
  return out;
}

Ref perception_loss(Graph& g, Ref cell_logits, Ref agent_logits,
                    const soko::AbstractState& label) {
  const auto classes = cell_class_labels(label);
  std::vector<int> cls(classes.begin(), classes.end());
  Ref cell_ce = g.sum(g.softmax_ce_rows(cell_logits, cls));
  const int agent = label.agent_cell();
  if (agent < 0) throw InconsistentLabel("perception label: no agent bit set");
  Ref agent_ce = g.sum(g.softmax_ce_rows(agent_logits, {agent}));
  return g.add(cell_ce, agent_ce);
}

}  // namespace sokorl::nets
