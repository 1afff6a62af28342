#include "sokorl/nets/controller.hpp"

#include <cmath>

namespace sokorl::nets {

ControllerPolicy::ControllerPolicy(diff::NetCtx<float> ctx, int rays, PolicyConfig cfg)
    : cfg_(cfg), rays_(rays), enc_(ctx.sub("enc"), rays) {
  cond_fc_ = diff::AffineLayer<float>(ctx, "cond", kCondDim, cfg_.cond_hidden);
  lstm_ = diff::LSTMCell<float>(ctx, "lstm", PolicyRayEncoder::kOut + cfg_.cond_hidden,
                                cfg_.lstm_hidden);
  mean_head_ = diff::AffineLayer<float>(ctx, "mean", cfg_.lstm_hidden, 2);
  logstd_head_ = diff::AffineLayer<float>(ctx, "logstd", cfg_.lstm_hidden, 2);
  if (ctx.rng)
    for (int j = 0; j < 2; ++j) logstd_head_.b->value[j] = cfg_.logstd_init;
}

ControllerPolicy::Hidden ControllerPolicy::initial_hidden() const {
  return {Tensor::zeros({1, cfg_.lstm_hidden}), Tensor::zeros({1, cfg_.lstm_hidden})};
}

ControllerPolicy::GState ControllerPolicy::state_refs(Graph& g, const Tensor& h,
                                                      const Tensor& c) const {
  return {g.constant(h), g.constant(c)};
}

ControllerPolicy::StepRefs ControllerPolicy::step(Graph& g, Ref rays, Ref cond, GState s) const {
  Ref feat = g.concat_cols(enc_(g, rays), g.relu(cond_fc_(g, cond)));
  auto next = lstm_.step(g, feat, {s.h, s.c});
  Ref mean = mean_head_(g, next.h);
  Ref logstd = g.clamp(logstd_head_(g, next.h), cfg_.logstd_lo, cfg_.logstd_hi);
  return {mean, logstd, {next.h, next.c}};
}

ControllerPolicy::ActResult ControllerPolicy::act(const phys::Observation& o,
                                                  const phys::EnvConfig& env_cfg,
                                                  soko::Instruction instr, bool beta_prev,
                                                  Hidden& hidden, bool stochastic,
                                                  Rng& rng) const {
  Graph g(false);
  Tensor rays({1, kRayChannels, rays_});
  write_ray_image(rays.data.data(), o, env_cfg);
  Tensor cond({1, kCondDim});
  write_cond(cond.data.data(), o, instr, beta_prev);
  StepRefs out = step(g, g.constant(std::move(rays)), g.constant(std::move(cond)),
                      state_refs(g, hidden.h, hidden.c));
  hidden.h = g.val(out.state.h);
  hidden.c = g.val(out.state.c);

  Tensor u({1, 2});
  for (int j = 0; j < 2; ++j) {
    const float m = g.val(out.mean)[j];
    const float sd = std::exp(g.val(out.logstd)[j]);
    u[j] = stochastic ? m + sd * static_cast<float>(rng.normal()) : m;
  }
  ActResult r;
  r.u = {u[0], u[1]};
  r.action = {std::tanh(static_cast<double>(u[0])), std::tanh(static_cast<double>(u[1]))};
  r.log_prob = static_cast<double>(g.val(g.gaussian_tanh_logprob(out.mean, out.logstd, u))[0]);
  return r;
}

ControllerCritic::ControllerCritic(diff::NetCtx<float> ctx, CriticConfig cfg) {
  mlp_ = diff::MLP<float>(ctx, "mlp", {kCriticStateDim + 2, cfg.hidden, cfg.hidden, 1});
}

Ref ControllerCritic::eval(Graph& g, Ref state, Ref action) const {
  return mlp_(g, g.concat_cols(state, action));
}

}  // namespace sokorl::nets
