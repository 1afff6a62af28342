#pragma once

#include "sokorl/diff/graph.hpp"
#include "sokorl/diff/layers.hpp"
#include "sokorl/nets/features.hpp"

namespace sokorl::nets {

using Graph = diff::GraphT<float>;
using Ref = Graph::Ref;

// Stride-1 ray encoder producing per-ray features [B, C, K]; shared between
// the completion predictor and the perception network (one parameter set).
struct RayEncoder {
  static constexpr int kChannels = 32;

  diff::Conv1dLayer<float> c1, c2;

  RayEncoder() = default;
  explicit RayEncoder(diff::NetCtx<float> ctx)
      : c1(ctx, "c1", kRayChannels, kChannels, 5, 2, 1), c2(ctx, "c2", kChannels, kChannels, 3, 1, 1) {}

  Ref operator()(Graph& g, Ref rays) const { return g.relu(c2(g, g.relu(c1(g, rays)))); }
};

// Strided encoder + projection for the control policy (policy-private weights).
struct PolicyRayEncoder {
  static constexpr int kOut = 48;

  diff::Conv1dLayer<float> c1, c2;
  diff::AffineLayer<float> fc;
  int flat = 0;

  PolicyRayEncoder() = default;
  PolicyRayEncoder(diff::NetCtx<float> ctx, int rays)
      : c1(ctx, "c1", kRayChannels, 16, 5, 2, 2), c2(ctx, "c2", 16, 16, 3, 1, 2) {
    const int l1 = (rays + 2 * 2 - 5) / 2 + 1;
    const int l2 = (l1 + 2 * 1 - 3) / 2 + 1;
    flat = 16 * l2;
    fc = diff::AffineLayer<float>(ctx, "fc", flat, kOut);
  }

  Ref operator()(Graph& g, Ref rays) const {
    Ref x = g.relu(c2(g, g.relu(c1(g, rays))));
    const int b = g.val(x).dim(0);
    return g.relu(fc(g, g.reshape(x, {b, flat})));
  }
};

}  // namespace sokorl::nets
