#pragma once

#include "sokorl/nets/encoders.hpp"
#include "sokorl/rng.hpp"

namespace sokorl::nets {

struct CompletionConfig {
  int cond_hidden = 24;
  int lstm_hidden = 48;
};

// Recurrent binary classifier for the instruction-completion signal. The ray
// encoder is shared with the perception network (same parameters), so training
// either head refines the common trunk.
class CompletionPredictor {
 public:
  CompletionPredictor() = default;
  CompletionPredictor(diff::NetCtx<float> ctx, const RayEncoder& enc, int rays,
                      CompletionConfig cfg = {});

  struct Hidden {
    Tensor h, c;
  };
  Hidden initial_hidden() const;

  struct GState {
    Ref h, c;
  };
  GState state_refs(Graph& g, const Tensor& h, const Tensor& c) const;

  struct StepRefs {
    Ref logit;  // [B, 1]
    GState state;
  };
  // rays [B, kRayChannels, K], cond [B, kCondDim] (instruction = the one being executed)
  StepRefs step(Graph& g, Ref rays, Ref cond, GState s) const;

  struct Prediction {
    double p;
    bool beta;
  };
  // sample=true draws beta ~ Bernoulli(p) (training collection); otherwise
  // beta = p > 0.5. The forced positive after T_instr negatives lives in the
  // rollout, which owns the per-instruction step count.
  Prediction predict(const phys::Observation& o, const phys::EnvConfig& env_cfg,
                     soko::Instruction instr, bool beta_prev, Hidden& hidden, bool sample,
                     Rng& rng) const;

 private:
  const RayEncoder* enc_ = nullptr;
  CompletionConfig cfg_;
  int rays_ = 0;
  diff::AffineLayer<float> cond_fc_;
  diff::LSTMCell<float> lstm_;
  diff::AffineLayer<float> head_;
};

}  // namespace sokorl::nets
