#pragma once

#include <array>

#include "sokorl/nets/encoders.hpp"
#include "sokorl/rng.hpp"

namespace sokorl::nets {

struct PolicyConfig {
  int cond_hidden = 32;
  int lstm_hidden = 64;
  float logstd_init = -0.5f;
  float logstd_lo = -5.0f;
  float logstd_hi = 1.0f;
};

// Recurrent tanh-Gaussian policy over (rayscan, proprioception+pose,
// instruction one-hot, beta_prev). Never consumes privileged state.
class ControllerPolicy {
 public:
  ControllerPolicy() = default;
  ControllerPolicy(diff::NetCtx<float> ctx, int rays, PolicyConfig cfg = {});

  struct Hidden {
    Tensor h, c;  // [1, lstm_hidden]
  };
  Hidden initial_hidden() const;

  struct GState {
    Ref h, c;
  };
  GState state_refs(Graph& g, const Tensor& h, const Tensor& c) const;

  struct StepRefs {
    Ref mean, logstd;  // [B, 2]
    GState state;
  };
  // rays [B, kRayChannels, K], cond [B, kCondDim]
  StepRefs step(Graph& g, Ref rays, Ref cond, GState s) const;

  struct ActResult {
    std::array<double, 2> action;  // tanh(u)
    std::array<float, 2> u;        // pre-squash sample, kept for training replay
    double log_prob;
  };
  ActResult act(const phys::Observation& o, const phys::EnvConfig& env_cfg,
                soko::Instruction instr, bool beta_prev, Hidden& hidden, bool stochastic,
                Rng& rng) const;

  const PolicyConfig& config() const { return cfg_; }

 private:
  PolicyConfig cfg_;
  int rays_ = 0;
  PolicyRayEncoder enc_;
  diff::AffineLayer<float> cond_fc_;
  diff::LSTMCell<float> lstm_;
  diff::AffineLayer<float> mean_head_, logstd_head_;
};

struct CriticConfig {
  int hidden = 128;
};

// Feed-forward Q(s, a) over privileged state features (pose, velocities, box
// centers, instruction, beta_prev) and the candidate action.
class ControllerCritic {
 public:
  ControllerCritic() = default;
  ControllerCritic(diff::NetCtx<float> ctx, CriticConfig cfg = {});

  // state [B, kCriticStateDim], action [B, 2] -> Q [B, 1]
  Ref eval(Graph& g, Ref state, Ref action) const;

 private:
  diff::MLP<float> mlp_;
};

// Policy + critic pair living in one parameter set (one checkpoint artifact).
struct ControllerNets {
  ControllerPolicy policy;
  ControllerCritic critic;

  ControllerNets() = default;
  ControllerNets(diff::NetCtx<float> ctx, int rays, PolicyConfig pc = {}, CriticConfig cc = {})
      : policy(ctx.sub("policy"), rays, pc), critic(ctx.sub("critic"), cc) {}
};

}  // namespace sokorl::nets
