#pragma once

#include <utility>
#include <vector>

#include "sokorl/nets/encoders.hpp"
#include "sokorl/rng.hpp"

namespace sokorl::nets {

struct PlannerConfig {
  int channels = 12;
  int blocks = 3;   // stacked convolutional recurrent blocks (D)
  int repeats = 3;  // weight-shared passes over the stack (R)
  int trunk = 64;
};

// Abstract-state policy: repeated convolutional recurrent blocks whose hidden
// states start from trainable tensors on every forward (nothing is propagated
// between calls), so the network is feed-forward with iterated computation.
// Heads emit 5 policy logits and 5 Q-values, ordered (N, E, S, W, Stay).
class PlannerNet {
 public:
  PlannerNet() = default;
  explicit PlannerNet(diff::NetCtx<float> ctx, PlannerConfig cfg = {});

  // input [B, 4, 10, 10] -> (policy logits [B, 5], q [B, 5])
  std::pair<Ref, Ref> forward(Graph& g, Ref s) const;

  struct PlanResult {
    soko::Instruction instr = soko::Instruction::Stay;
    std::array<float, kInstrDim> probs{};
    std::array<float, kInstrDim> q{};
  };
  // sample=true draws from the softmax policy (training); otherwise argmax
  // with ties resolved to the lowest index.
  PlanResult plan(const soko::AbstractState& s, bool sample, Rng& rng) const;

  const PlannerConfig& config() const { return cfg_; }

 private:
  PlannerConfig cfg_;
  diff::Conv2dLayer<float> encode_;
  std::vector<diff::ConvLSTMCell<float>> blocks_;
  std::vector<diff::ParamT<float>*> h0_, c0_;
  diff::AffineLayer<float> trunk_;
  diff::AffineLayer<float> pi_head_, q_head_;
};

}  // namespace sokorl::nets
