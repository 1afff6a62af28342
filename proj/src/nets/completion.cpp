#include "sokorl/nets/completion.hpp"

#include <cmath>

namespace sokorl::nets {

CompletionPredictor::CompletionPredictor(diff::NetCtx<float> ctx, const RayEncoder& enc, int rays,
                                         CompletionConfig cfg)
    : enc_(&enc), cfg_(cfg), rays_(rays) {
  cond_fc_ = diff::AffineLayer<float>(ctx, "cond", kCondDim, cfg_.cond_hidden);
  lstm_ = diff::LSTMCell<float>(ctx, "lstm", RayEncoder::kChannels + cfg_.cond_hidden,
                                cfg_.lstm_hidden);
  head_ = diff::AffineLayer<float>(ctx, "head", cfg_.lstm_hidden, 1);
}

CompletionPredictor::Hidden CompletionPredictor::initial_hidden() const {
  return {Tensor::zeros({1, cfg_.lstm_hidden}), Tensor::zeros({1, cfg_.lstm_hidden})};
}

CompletionPredictor::GState CompletionPredictor::state_refs(Graph& g, const Tensor& h,
                                                            const Tensor& c) const {
  return {g.constant(h), g.constant(c)};
}

CompletionPredictor::StepRefs CompletionPredictor::step(Graph& g, Ref rays, Ref cond,
                                                        GState s) const {
  Ref per_ray = (*enc_)(g, rays);  // [B, C, K]
  const int b = g.val(per_ray).dim(0);
  // mean over rays via a constant averaging matmul
  Tensor avg({rays_, 1});
  avg.fill(1.0f / static_cast<float>(rays_));
  Ref pooled = g.reshape(
      g.matmul(g.reshape(per_ray, {b * RayEncoder::kChannels, rays_}), g.constant(avg)),
      {b, RayEncoder::kChannels});
  Ref feat = g.concat_cols(pooled, g.relu(cond_fc_(g, cond)));
  auto next = lstm_.step(g, feat, {s.h, s.c});
  return {head_(g, next.h), {next.h, next.c}};
}

CompletionPredictor::Prediction CompletionPredictor::predict(const phys::Observation& o,
                                                             const phys::EnvConfig& env_cfg,
                                                             soko::Instruction instr,
                                                             bool beta_prev, Hidden& hidden,
                                                             bool sample, Rng& rng) const {
  Graph g(false);
  Tensor rays({1, kRayChannels, rays_});
  write_ray_image(rays.data.data(), o, env_cfg);
  Tensor cond({1, kCondDim});
  write_cond(cond.data.data(), o, instr, beta_prev);
  StepRefs out = step(g, g.constant(std::move(rays)), g.constant(std::move(cond)),
                      state_refs(g, hidden.h, hidden.c));
  hidden.h = g.val(out.state.h);
  hidden.c = g.val(out.state.c);
  const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(g.val(out.logit)[0])));
  const bool beta = sample ? rng.uniform() < p : p > 0.5;
  return {p, beta};
}

}  // namespace sokorl::nets
