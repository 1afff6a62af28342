#pragma once

#include "sokorl/nets/completion.hpp"
#include "sokorl/nets/encoders.hpp"

namespace sokorl::nets {

struct PerceptionConfig {
  int att_hidden = 16;
  int belief_ch = 16;
};

// Cell classes predicted per grid location, in this index order.
enum class CellClass : int { None = 0, Wall = 1, Box = 2, Target = 3, BoxOnTarget = 4 };
inline constexpr int kCellClasses = 5;

// Geometry-aware sequential mapper: per-cell attention over ray features fused
// into a convolutional recurrent belief, decoded into an AbstractState.
class PerceptionNet {
 public:
  PerceptionNet() = default;
  PerceptionNet(diff::NetCtx<float> ctx, const RayEncoder& enc, int rays,
                PerceptionConfig cfg = {});

  struct Belief {
    Tensor h, c;  // [1, belief_ch, 10, 10]
  };
  Belief initial_belief() const;

  struct GState {
    Ref h, c;
  };
  GState state_refs(Graph& g, const Tensor& h, const Tensor& c) const;

  struct StepRefs {
    Ref cell_logits;   // [kCells, kCellClasses] (batch 1)
    Ref agent_logits;  // [1, kCells]
    GState state;
  };
  StepRefs step(Graph& g, const phys::Observation& o, const phys::EnvConfig& env_cfg,
                GState s) const;

  struct Estimate {
    soko::AbstractState s_hat;
    Tensor cell_probs;   // [kCells, kCellClasses]
    Tensor agent_probs;  // [1, kCells]
  };
  Estimate estimate(Belief& belief, const phys::Observation& o,
                    const phys::EnvConfig& env_cfg) const;

  struct Attention {
    Tensor weights;  // [kCells, K], rows sum to 1
    Tensor columns;  // [kCells, RayEncoder::kChannels]
  };
  Attention attention(const phys::Observation& o, const phys::EnvConfig& env_cfg) const;

  // Argmax decode; the agent cell is chosen among cells not classified Wall.
  static soko::AbstractState decode(const Tensor& cell_probs, const Tensor& agent_probs);

  const PerceptionConfig& config() const { return cfg_; }

 private:
  Ref attended_map(Graph& g, const phys::Observation& o, const phys::EnvConfig& env_cfg) const;

  const RayEncoder* enc_ = nullptr;
  PerceptionConfig cfg_;
  int rays_ = 0;
  diff::MLP<float> att_;
  diff::Conv2dLayer<float> compress_;
  diff::ConvLSTMCell<float> belief_;
  diff::Conv2dLayer<float> cell_head_, agent_head_;
};

// Per-cell class labels derived from an AbstractState; throws
// InconsistentLabel when channels conflict (wall overlapping box/agent).
std::array<int, soko::kCells> cell_class_labels(const soko::AbstractState& label);

// Sum of 100 per-cell cross-entropies plus one 100-way agent cross-entropy.
Ref perception_loss(Graph& g, Ref cell_logits, Ref agent_logits,
                    const soko::AbstractState& label);

// All sensor-side networks share one parameter set (one checkpoint artifact):
// the common ray encoder, the completion predictor, and the perception net.
struct SensorNets {
  RayEncoder rayenc;
  CompletionPredictor completion;
  PerceptionNet perception;

  SensorNets() = default;
  SensorNets(diff::NetCtx<float> ctx, int rays, CompletionConfig cc = {}, PerceptionConfig pc = {})
      : rayenc(ctx.sub("rayenc")),
        completion(ctx.sub("completion"), rayenc, rays, cc),
        perception(ctx.sub("perception"), rayenc, rays, pc) {}
};

}  // namespace sokorl::nets
