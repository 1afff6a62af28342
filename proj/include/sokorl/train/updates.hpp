#pragma once

#include <vector>

#include "sokorl/diff/adam.hpp"
#include "sokorl/nets/completion.hpp"
#include "sokorl/nets/controller.hpp"
#include "sokorl/nets/perception.hpp"
#include "sokorl/nets/planner.hpp"
#include "sokorl/train/transitions.hpp"

namespace sokorl::train {

using Graph = nets::Graph;
using Ref = nets::Ref;

// Expectation-step weights: softmax(q / eta) per row. Shift-invariant in q;
// eta -> inf gives uniform weights, eta -> 0 concentrates on the row argmax.
Tensor mpo_weights(const Tensor& q, float eta);

// Weighted binary cross entropy over one predicted sequence: step weights are
// 1 + (number of consecutive preceding steps whose label was positive but
// whose thresholded prediction was negative). Logits are [1,1] per step;
// probability = sigmoid(logit). Throws ShapeError on length mismatch.
Ref completion_loss(Graph& g, const std::vector<Ref>& step_logits,
                    const std::vector<float>& labels);

struct ControllerUpdateConfig {
  float gamma = 0.99f;
  int bootstrap_samples = 8;
  int mpo_samples = 16;
  float eta = 1.0f;
  float kl_coeff = 0.01f;
  int burn_in = 4;
};

struct ControllerLosses {
  double critic = 0.0;
  double actor = 0.0;
  double kl = 0.0;
  int steps = 0;
};

// One-step TD targets for a segment's post-burn-in window: r + gamma * mean of
// target-critic values at policy samples from the successor observation, with
// no bootstrap on environment-terminal steps. Exposed for direct testing.
std::vector<float> controller_td_targets(const PhySegment& seg, const nets::ControllerNets& nets,
                                         const nets::ControllerNets& target,
                                         const ControllerUpdateConfig& cfg,
                                         const phys::EnvConfig& env_cfg, Rng& rng);

// Critic TD regression plus MPO-style weighted maximum likelihood with a KL
// penalty anchoring the policy to the target network's distribution. One
// optimizer step over policy + critic.
ControllerLosses update_controller(const std::vector<PhySegment>& batch,
                                   const nets::ControllerNets& nets,
                                   const nets::ControllerNets& target,
                                   diff::ParameterSet& params, diff::AdamT<float>& opt,
                                   const ControllerUpdateConfig& cfg,
                                   const phys::EnvConfig& env_cfg, Rng& rng);

struct CompletionUpdateConfig {
  int burn_in = 4;
};

// Supervised update of the completion predictor (sensor parameter set).
double update_completion(const std::vector<PhySegment>& batch, const nets::SensorNets& sensors,
                         diff::ParameterSet& sensor_params, diff::AdamT<float>& opt,
                         const CompletionUpdateConfig& cfg, const phys::EnvConfig& env_cfg);

struct PerceptionUpdateConfig {
  int burn_in = 2;
};

struct PerceptionLosses {
  double perception = 0.0;
  double completion = 0.0;
  int steps = 0;
};

// Joint supervised update of the perception network and completion predictor
// on logged segments carrying abstract-state labels and belief snapshots.
PerceptionLosses update_perception(const std::vector<PhySegment>& batch,
                                   const nets::SensorNets& sensors,
                                   diff::ParameterSet& sensor_params, diff::AdamT<float>& opt,
                                   const PerceptionUpdateConfig& cfg,
                                   const phys::EnvConfig& env_cfg);

struct PlannerUpdateConfig {
  float gamma = 0.97f;
  float eta = 1.0f;
  float kl_coeff = 0.01f;
};

struct PlannerLosses {
  double critic = 0.0;
  double actor = 0.0;
  double kl = 0.0;
};

// TD targets over abstract transitions: R + gamma * sum_a pi(a|S') q_target(S',a)
// when bootstrapping applies, R alone on genuine environment termination.
// Bootstrapping applies to non-terminal and induced-early-termination steps.
std::vector<float> planner_td_targets(const std::vector<AbstractTransition>& batch,
                                      const nets::PlannerNet& net, const nets::PlannerNet& target,
                                      float gamma);

PlannerLosses update_planner(const std::vector<AbstractTransition>& batch,
                             const nets::PlannerNet& net, const nets::PlannerNet& target,
                             diff::ParameterSet& params, diff::AdamT<float>& opt,
                             const PlannerUpdateConfig& cfg);

}  // namespace sokorl::train
