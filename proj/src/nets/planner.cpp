#include "sokorl/nets/planner.hpp"

#include <cmath>
#include <string>

namespace sokorl::nets {

PlannerNet::PlannerNet(diff::NetCtx<float> ctx, PlannerConfig cfg) : cfg_(cfg) {
  encode_ = diff::Conv2dLayer<float>(ctx, "encode", 4, cfg_.channels, 3, 3, 1);
  for (int d = 0; d < cfg_.blocks; ++d) {
    const std::string tag = "block" + std::to_string(d);
    blocks_.emplace_back(ctx, tag, cfg_.channels, cfg_.channels, 3);
    h0_.push_back(ctx.tensor(tag + ".h0", {1, cfg_.channels, soko::kN, soko::kN}, 0.1f));
    c0_.push_back(ctx.tensor(tag + ".c0", {1, cfg_.channels, soko::kN, soko::kN}, 0.1f));
  }
  trunk_ = diff::AffineLayer<float>(ctx, "trunk", cfg_.channels * soko::kCells, cfg_.trunk);
  pi_head_ = diff::AffineLayer<float>(ctx, "pi", cfg_.trunk, kInstrDim);
  q_head_ = diff::AffineLayer<float>(ctx, "q", cfg_.trunk, kInstrDim);
}

std::pair<Ref, Ref> PlannerNet::forward(Graph& g, Ref s) const {
  const int b = g.val(s).dim(0);
  Ref x = g.relu(encode_(g, s));
  std::vector<diff::ConvLSTMCell<float>::State> states;
  states.reserve(blocks_.size());
  for (size_t d = 0; d < blocks_.size(); ++d)
    states.push_back({g.broadcast_batch(g.param(*h0_[d]), b),
                      g.broadcast_batch(g.param(*c0_[d]), b)});
  for (int r = 0; r < cfg_.repeats; ++r)
    for (size_t d = 0; d < blocks_.size(); ++d) {
      Ref input = d == 0 ? x : states[d - 1].h;
      states[d] = blocks_[d].step(g, input, states[d]);
    }
  Ref flat = g.reshape(states.back().h, {b, cfg_.channels * soko::kCells});
  Ref t = g.relu(trunk_(g, flat));
  return {pi_head_(g, t), q_head_(g, t)};
}

PlannerNet::PlanResult PlannerNet::plan(const soko::AbstractState& s, bool sample,
                                        Rng& rng) const {
  Graph g(false);
  auto [logits, q] = forward(g, g.constant(abstract_tensor(s)));
  Ref probs = g.softmax_rows(logits);
  PlanResult r;
  for (int a = 0; a < kInstrDim; ++a) {
    r.probs[static_cast<size_t>(a)] = g.val(probs)[a];
    r.q[static_cast<size_t>(a)] = g.val(q)[a];
  }
  int pick = 0;
  if (sample) {
    const double x = rng.uniform();
    double acc = 0.0;
    for (int a = 0; a < kInstrDim; ++a) {
      acc += static_cast<double>(r.probs[static_cast<size_t>(a)]);
      if (x < acc) {
        pick = a;
        break;
      }
      if (a == kInstrDim - 1) pick = a;
    }
  } else {
    for (int a = 1; a < kInstrDim; ++a)
      if (r.probs[static_cast<size_t>(a)] > r.probs[static_cast<size_t>(pick)]) pick = a;
  }
  r.instr = static_cast<soko::Instruction>(pick);
  return r;
}

}  // namespace sokorl::nets
