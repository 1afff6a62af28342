#include "sokorl/train/updates.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace sokorl::train {

namespace {

Tensor ray_tensor(const phys::Observation& o, const phys::EnvConfig& cfg) {
  Tensor t({1, nets::kRayChannels, cfg.rays});
  nets::write_ray_image(t.data.data(), o, cfg);
  return t;
}

Tensor cond_tensor(const phys::Observation& o, soko::Instruction instr, bool beta_prev) {
  Tensor t({1, nets::kCondDim});
  nets::write_cond(t.data.data(), o, instr, beta_prev);
  return t;
}

// Policy value-forward over a whole segment plus its final observation:
// distributions at every index and the hidden state entering every index.
struct PolicyDists {
  std::vector<Tensor> mean, logstd;  // [1,2], size L+1
  std::vector<Tensor> h, c;          // state entering index t, size L+1
};

PolicyDists policy_values(const PhySegment& seg, const nets::ControllerPolicy& pol,
                          const phys::EnvConfig& env_cfg) {
  PolicyDists d;
  Graph g(false);
  Tensor hv = seg.policy_h, cv = seg.policy_c;
  auto step_one = [&](const phys::Observation& o, soko::Instruction instr, bool bp) {
    auto st = pol.state_refs(g, hv, cv);
    d.h.push_back(hv);
    d.c.push_back(cv);
    auto refs = pol.step(g, g.constant(ray_tensor(o, env_cfg)), g.constant(cond_tensor(o, instr, bp)),
                         st);
    d.mean.push_back(g.val(refs.mean));
    d.logstd.push_back(g.val(refs.logstd));
    hv = g.val(refs.state.h);
    cv = g.val(refs.state.c);
  };
  for (const PhyStep& s : seg.steps) step_one(s.obs, s.ctx.instr, s.beta_prev);
  step_one(seg.final_obs, seg.final_ctx.instr, seg.final_beta_prev);
  return d;
}

std::vector<float> td_targets_from(const PhySegment& seg, const PolicyDists& d,
                                   const nets::ControllerNets& target,
                                   const ControllerUpdateConfig& cfg, Rng& rng) {
  const int l = static_cast<int>(seg.steps.size());
  if (l == 0) return {};
  const int bi = std::min(cfg.burn_in, l - 1);
  const int k = cfg.bootstrap_samples;
  std::vector<int> boot_of(static_cast<size_t>(l - bi), -1);
  std::vector<float> rows, acts;
  int nboot = 0;
  for (int t = bi; t < l; ++t) {
    if (seg.steps[static_cast<size_t>(t)].env_terminal) continue;
    boot_of[static_cast<size_t>(t - bi)] = nboot++;
    const bool in_seg = t + 1 < l;
    const phys::WorldState& w1 = in_seg ? seg.steps[static_cast<size_t>(t + 1)].world : seg.final_world;
    const phys::InstructionContext& c1 = in_seg ? seg.steps[static_cast<size_t>(t + 1)].ctx : seg.final_ctx;
    const bool bp1 = in_seg ? seg.steps[static_cast<size_t>(t + 1)].beta_prev : seg.final_beta_prev;
    std::array<float, nets::kCriticStateDim> srow;
    nets::write_critic_state(srow.data(), w1, c1, bp1);
    const Tensor& mu = d.mean[static_cast<size_t>(t + 1)];
    const Tensor& ls = d.logstd[static_cast<size_t>(t + 1)];
    for (int s = 0; s < k; ++s) {
      rows.insert(rows.end(), srow.begin(), srow.end());
      for (int j = 0; j < 2; ++j) {
        const double u = static_cast<double>(mu[j]) +
                         std::exp(static_cast<double>(ls[j])) * rng.normal();
        acts.push_back(static_cast<float>(std::tanh(u)));
      }
    }
  }
  std::vector<float> vboot(static_cast<size_t>(nboot), 0.0f);
  if (nboot > 0) {
    Graph gt(false);
    Tensor s({nboot * k, nets::kCriticStateDim});
    std::copy(rows.begin(), rows.end(), s.data.begin());
    Tensor a({nboot * k, 2});
    std::copy(acts.begin(), acts.end(), a.data.begin());
    Ref q = target.critic.eval(gt, gt.constant(std::move(s)), gt.constant(std::move(a)));
    const Tensor& qv = gt.val(q);
    for (int i = 0; i < nboot; ++i) {
      float m = 0.0f;
      for (int j = 0; j < k; ++j) m += qv[i * k + j];
      vboot[static_cast<size_t>(i)] = m / static_cast<float>(k);
    }
  }
  std::vector<float> y(static_cast<size_t>(l - bi));
  for (int t = bi; t < l; ++t) {
    const int b = boot_of[static_cast<size_t>(t - bi)];
    y[static_cast<size_t>(t - bi)] =
        seg.steps[static_cast<size_t>(t)].r_ctrl + (b >= 0 ? cfg.gamma * vboot[static_cast<size_t>(b)] : 0.0f);
  }
  return y;
}

}  // namespace

Tensor mpo_weights(const Tensor& q, float eta) {
  const int b = q.dim(0), n = q.dim(1);
  Tensor w({b, n});
  for (int i = 0; i < b; ++i) {
    const float* z = q.data.data() + static_cast<int64_t>(i) * n;
    float hi = z[0];
    for (int j = 1; j < n; ++j) hi = std::max(hi, z[j]);
    double total = 0.0;
    for (int j = 0; j < n; ++j) total += std::exp(static_cast<double>(z[j] - hi) / eta);
    for (int j = 0; j < n; ++j)
      w[static_cast<int64_t>(i) * n + j] =
          static_cast<float>(std::exp(static_cast<double>(z[j] - hi) / eta) / total);
  }
  return w;
}

Ref completion_loss(Graph& g, const std::vector<Ref>& step_logits,
                    const std::vector<float>& labels) {
  if (step_logits.size() != labels.size())
    throw ShapeError("completion_loss: sequence length mismatch");
  if (step_logits.empty()) return g.constant(Tensor::zeros({1}));
  Ref total{};
  int n_missed = 0;
  for (size_t t = 0; t < labels.size(); ++t) {
    const float w = 1.0f + static_cast<float>(n_missed);
    const bool predicted_pos = g.val(step_logits[t])[0] > 0.0f;  // sigmoid > 0.5
    if (labels[t] > 0.5f && !predicted_pos)
      ++n_missed;
    else
      n_missed = 0;
    Tensor target({1, 1});
    target[0] = labels[t];
    Ref term = g.scale(g.sum(g.bce_logits_rows(step_logits[t], target)), w);
    total = t == 0 ? term : g.add(total, term);
  }
  return total;
}

std::vector<float> controller_td_targets(const PhySegment& seg, const nets::ControllerNets& nets,
                                         const nets::ControllerNets& target,
                                         const ControllerUpdateConfig& cfg,
                                         const phys::EnvConfig& env_cfg, Rng& rng) {
  return td_targets_from(seg, policy_values(seg, nets.policy, env_cfg), target, cfg, rng);
}

ControllerLosses update_controller(const std::vector<PhySegment>& batch,
                                   const nets::ControllerNets& nets,
                                   const nets::ControllerNets& target,
                                   diff::ParameterSet& params, diff::AdamT<float>& opt,
                                   const ControllerUpdateConfig& cfg,
                                   const phys::EnvConfig& env_cfg, Rng& rng) {
  if (batch.empty()) throw EmptyBuffer("update_controller: empty batch");
  Graph g(true);

  struct StepRef {
    Ref mean, logstd;
    const PhyStep* s;
    Tensor ref_mean, ref_logstd;  // target-policy distribution, the KL anchor
  };
  std::vector<StepRef> srefs;
  std::vector<float> crows, cacts, ys;

  for (const PhySegment& seg : batch) {
    if (seg.steps.empty()) continue;
    const int l = static_cast<int>(seg.steps.size());
    const int bi = std::min(cfg.burn_in, l - 1);
    const PolicyDists d = policy_values(seg, nets.policy, env_cfg);
    const PolicyDists dt = policy_values(seg, target.policy, env_cfg);
    const std::vector<float> y = td_targets_from(seg, d, target, cfg, rng);

    auto st = nets.policy.state_refs(g, d.h[static_cast<size_t>(bi)], d.c[static_cast<size_t>(bi)]);
    for (int t = bi; t < l; ++t) {
      const PhyStep& s = seg.steps[static_cast<size_t>(t)];
      auto refs = nets.policy.step(g, g.constant(ray_tensor(s.obs, env_cfg)),
                                   g.constant(cond_tensor(s.obs, s.ctx.instr, s.beta_prev)), st);
      st = refs.state;
      srefs.push_back({refs.mean, refs.logstd, &s, dt.mean[static_cast<size_t>(t)],
                       dt.logstd[static_cast<size_t>(t)]});
      std::array<float, nets::kCriticStateDim> row;
      nets::write_critic_state(row.data(), s.world, s.ctx, s.beta_prev);
      crows.insert(crows.end(), row.begin(), row.end());
      cacts.push_back(s.action[0]);
      cacts.push_back(s.action[1]);
      ys.push_back(y[static_cast<size_t>(t - bi)]);
    }
  }

  const int n = static_cast<int>(srefs.size());
  if (n == 0) throw EmptyBuffer("update_controller: batch holds no steps");

  Tensor cs({n, nets::kCriticStateDim});
  std::copy(crows.begin(), crows.end(), cs.data.begin());
  Tensor ca({n, 2});
  std::copy(cacts.begin(), cacts.end(), ca.data.begin());
  Tensor cy({n, 1});
  std::copy(ys.begin(), ys.end(), cy.data.begin());
  Ref q = nets.critic.eval(g, g.constant(std::move(cs)), g.constant(std::move(ca)));
  Ref dq = g.sub(q, g.constant(std::move(cy)));
  Ref critic_loss = g.mean(g.mul(dq, dq));

  // E-step samples and their Q under the current critic, in one value pass.
  const int m = cfg.mpo_samples;
  std::vector<Tensor> u_samples(static_cast<size_t>(n));
  std::vector<float> arows, aacts;
  for (int i = 0; i < n; ++i) {
    const Tensor mu = g.val(srefs[static_cast<size_t>(i)].mean);
    const Tensor ls = g.val(srefs[static_cast<size_t>(i)].logstd);
    Tensor u({m, 2});
    for (int s = 0; s < m; ++s)
      for (int j = 0; j < 2; ++j)
        u[s * 2 + j] = static_cast<float>(static_cast<double>(mu[j]) +
                                          std::exp(static_cast<double>(ls[j])) * rng.normal());
    std::array<float, nets::kCriticStateDim> row;
    const PhyStep& s = *srefs[static_cast<size_t>(i)].s;
    nets::write_critic_state(row.data(), s.world, s.ctx, s.beta_prev);
    for (int k = 0; k < m; ++k) {
      arows.insert(arows.end(), row.begin(), row.end());
      aacts.push_back(std::tanh(u[k * 2 + 0]));
      aacts.push_back(std::tanh(u[k * 2 + 1]));
    }
    u_samples[static_cast<size_t>(i)] = std::move(u);
  }
  Tensor qa_vals;
  {
    Graph gv(false);
    Tensor as({n * m, nets::kCriticStateDim});
    std::copy(arows.begin(), arows.end(), as.data.begin());
    Tensor aa({n * m, 2});
    std::copy(aacts.begin(), aacts.end(), aa.data.begin());
    qa_vals = gv.val(nets.critic.eval(gv, gv.constant(std::move(as)), gv.constant(std::move(aa))));
  }

  Ref actor_sum{}, kl_sum{};
  for (int i = 0; i < n; ++i) {
    Tensor qrow({1, m});
    for (int k = 0; k < m; ++k) qrow[k] = qa_vals[i * m + k];
    const Tensor w = mpo_weights(qrow, cfg.eta);
    const StepRef& sr = srefs[static_cast<size_t>(i)];
    Ref lp = g.gaussian_tanh_logprob(g.broadcast_batch(sr.mean, m), g.broadcast_batch(sr.logstd, m),
                                     u_samples[static_cast<size_t>(i)]);
    Ref term = g.scale(g.sum(g.matmul(g.constant(w), lp)), -1.0f);
    // The trust region must anchor to a distribution that does not move with
    // the parameters being optimized; anchoring to the current policy's own
    // frozen values would make the KL gradient identically zero.
    Ref kl = g.sum(g.kl_diag_gauss(sr.mean, sr.logstd, sr.ref_mean, sr.ref_logstd));
    actor_sum = i == 0 ? term : g.add(actor_sum, term);
    kl_sum = i == 0 ? kl : g.add(kl_sum, kl);
  }
  const float inv_n = 1.0f / static_cast<float>(n);
  Ref actor_loss = g.scale(actor_sum, inv_n);
  Ref kl_loss = g.scale(kl_sum, inv_n);
  Ref loss = g.add(critic_loss, g.add(actor_loss, g.scale(kl_loss, cfg.kl_coeff)));

  params.zero_grads();
  g.backward(loss);
  opt.step();

  ControllerLosses out;
  out.critic = static_cast<double>(g.val(critic_loss)[0]);
  out.actor = static_cast<double>(g.val(actor_loss)[0]);
  out.kl = static_cast<double>(g.val(kl_loss)[0]);
  out.steps = n;
  return out;
}

double update_completion(const std::vector<PhySegment>& batch, const nets::SensorNets& sensors,
                         diff::ParameterSet& sensor_params, diff::AdamT<float>& opt,
                         const CompletionUpdateConfig& cfg, const phys::EnvConfig& env_cfg) {
  Graph g(true);
  Ref total{};
  int count = 0;
  for (const PhySegment& seg : batch) {
    if (seg.pred_h.size() == 0 || seg.steps.empty()) continue;
    const int l = static_cast<int>(seg.steps.size());
    const int bi = std::min(cfg.burn_in, l - 1);

    Tensor hv = seg.pred_h, cv = seg.pred_c;
    if (bi > 0) {
      Graph g0(false);
      auto st0 = sensors.completion.state_refs(g0, hv, cv);
      for (int t = 0; t < bi; ++t) {
        const PhyStep& s = seg.steps[static_cast<size_t>(t)];
        auto refs = sensors.completion.step(
            g0, g0.constant(ray_tensor(s.obs, env_cfg)),
            g0.constant(cond_tensor(s.obs, s.ctx.instr, s.beta_prev)), st0);
        st0 = refs.state;
      }
      hv = g0.val(st0.h);
      cv = g0.val(st0.c);
    }

    auto st = sensors.completion.state_refs(g, hv, cv);
    std::vector<Ref> logits;
    std::vector<float> labels;
    for (int t = bi; t < l; ++t) {
      const PhyStep& s = seg.steps[static_cast<size_t>(t)];
      auto refs = sensors.completion.step(g, g.constant(ray_tensor(s.obs, env_cfg)),
                                          g.constant(cond_tensor(s.obs, s.ctx.instr, s.beta_prev)),
                                          st);
      st = refs.state;
      logits.push_back(refs.logit);
      labels.push_back(s.completion_label ? 1.0f : 0.0f);
      ++count;
    }
    Ref l_seg = completion_loss(g, logits, labels);
    total = !total.valid() ? l_seg : g.add(total, l_seg);
  }
  if (count == 0) return 0.0;
  Ref loss = g.scale(total, 1.0f / static_cast<float>(count));
  sensor_params.zero_grads();
  g.backward(loss);
  opt.step();
  return static_cast<double>(g.val(loss)[0]);
}

PerceptionLosses update_perception(const std::vector<PhySegment>& batch,
                                   const nets::SensorNets& sensors,
                                   diff::ParameterSet& sensor_params, diff::AdamT<float>& opt,
                                   const PerceptionUpdateConfig& cfg,
                                   const phys::EnvConfig& env_cfg) {
  Graph g(true);
  Ref perc_total{}, comp_total{};
  int count = 0;
  for (const PhySegment& seg : batch) {
    if (seg.belief_h.size() == 0 || seg.labels.size() != seg.steps.size() || seg.steps.empty())
      continue;
    const int l = static_cast<int>(seg.steps.size());
    const int bi = std::min(cfg.burn_in, l - 1);
    const bool has_pred = seg.pred_h.size() != 0;

    Tensor bh = seg.belief_h, bc = seg.belief_c;
    Tensor ph = seg.pred_h, pc = seg.pred_c;
    if (bi > 0) {
      Graph g0(false);
      auto bst = sensors.perception.state_refs(g0, bh, bc);
      auto pst = has_pred ? sensors.completion.state_refs(g0, ph, pc)
                          : nets::CompletionPredictor::GState{};
      for (int t = 0; t < bi; ++t) {
        const PhyStep& s = seg.steps[static_cast<size_t>(t)];
        bst = sensors.perception.step(g0, s.obs, env_cfg, bst).state;
        if (has_pred)
          pst = sensors.completion
                    .step(g0, g0.constant(ray_tensor(s.obs, env_cfg)),
                          g0.constant(cond_tensor(s.obs, s.ctx.instr, s.beta_prev)), pst)
                    .state;
      }
      bh = g0.val(bst.h);
      bc = g0.val(bst.c);
      if (has_pred) {
        ph = g0.val(pst.h);
        pc = g0.val(pst.c);
      }
    }

    auto bst = sensors.perception.state_refs(g, bh, bc);
    auto pst =
        has_pred ? sensors.completion.state_refs(g, ph, pc) : nets::CompletionPredictor::GState{};
    std::vector<Ref> logits;
    std::vector<float> labels;
    for (int t = bi; t < l; ++t) {
      const PhyStep& s = seg.steps[static_cast<size_t>(t)];
      auto pr = sensors.perception.step(g, s.obs, env_cfg, bst);
      bst = pr.state;
      Ref pl = nets::perception_loss(g, pr.cell_logits, pr.agent_logits,
                                     seg.labels[static_cast<size_t>(t)]);
      perc_total = !perc_total.valid() ? pl : g.add(perc_total, pl);
      if (has_pred) {
        auto cr = sensors.completion.step(g, g.constant(ray_tensor(s.obs, env_cfg)),
                                          g.constant(cond_tensor(s.obs, s.ctx.instr, s.beta_prev)),
                                          pst);
        pst = cr.state;
        logits.push_back(cr.logit);
        labels.push_back(s.completion_label ? 1.0f : 0.0f);
      }
      ++count;
    }
    if (has_pred) {
      Ref cl = completion_loss(g, logits, labels);
      comp_total = !comp_total.valid() ? cl : g.add(comp_total, cl);
    }
  }
  if (count == 0) return {};

  const float inv = 1.0f / static_cast<float>(count);
  Ref loss = g.scale(perc_total, inv);
  if (comp_total.valid()) loss = g.add(loss, g.scale(comp_total, inv));
  sensor_params.zero_grads();
  g.backward(loss);
  opt.step();

  PerceptionLosses out;
  out.perception = static_cast<double>(g.val(perc_total)[0]) / count;
  out.completion = comp_total.valid() ? static_cast<double>(g.val(comp_total)[0]) / count : 0.0;
  out.steps = count;
  return out;
}

std::vector<float> planner_td_targets(const std::vector<AbstractTransition>& batch,
                                      const nets::PlannerNet& net, const nets::PlannerNet& target,
                                      float gamma) {
  const int b = static_cast<int>(batch.size());
  Tensor sn({b, 4, soko::kN, soko::kN});
  for (int i = 0; i < b; ++i)
    nets::write_abstract(sn.data.data() + static_cast<int64_t>(i) * 4 * soko::kCells,
                         batch[static_cast<size_t>(i)].s_next);

  Graph gc(false);
  const Tensor pi_next = gc.val(net.forward(gc, gc.constant(sn)).first);
  Graph gt(false);
  const Tensor q_next = gt.val(target.forward(gt, gt.constant(std::move(sn))).second);

  std::vector<float> y(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    const AbstractTransition& tr = batch[static_cast<size_t>(i)];
    const bool bootstrap = !tr.terminal || tr.induced_early_termination;
    if (!bootstrap) {
      y[static_cast<size_t>(i)] = tr.r;
      continue;
    }
    const float* z = pi_next.data.data() + static_cast<int64_t>(i) * nets::kInstrDim;
    float hi = z[0];
    for (int j = 1; j < nets::kInstrDim; ++j) hi = std::max(hi, z[j]);
    double total = 0.0, v = 0.0;
    for (int j = 0; j < nets::kInstrDim; ++j) total += std::exp(static_cast<double>(z[j] - hi));
    for (int j = 0; j < nets::kInstrDim; ++j)
      v += std::exp(static_cast<double>(z[j] - hi)) / total *
           static_cast<double>(q_next[static_cast<int64_t>(i) * nets::kInstrDim + j]);
    y[static_cast<size_t>(i)] = tr.r + gamma * static_cast<float>(v);
  }
  return y;
}

PlannerLosses update_planner(const std::vector<AbstractTransition>& batch,
                             const nets::PlannerNet& net, const nets::PlannerNet& target,
                             diff::ParameterSet& params, diff::AdamT<float>& opt,
                             const PlannerUpdateConfig& cfg) {
  if (batch.empty()) throw EmptyBuffer("update_planner: empty batch");
  const int b = static_cast<int>(batch.size());
  const std::vector<float> y = planner_td_targets(batch, net, target, cfg.gamma);

  Tensor s({b, 4, soko::kN, soko::kN});
  for (int i = 0; i < b; ++i)
    nets::write_abstract(s.data.data() + static_cast<int64_t>(i) * 4 * soko::kCells,
                         batch[static_cast<size_t>(i)].s);

  Graph g(true);
  auto [pi, q] = net.forward(g, g.constant(std::move(s)));

  Tensor onehot({b, nets::kInstrDim});
  for (int i = 0; i < b; ++i)
    onehot[static_cast<int64_t>(i) * nets::kInstrDim +
           static_cast<int>(batch[static_cast<size_t>(i)].a)] = 1.0f;
  Tensor ones({nets::kInstrDim, 1});
  ones.fill(1.0f);
  Ref qsel = g.matmul(g.mul_const(q, onehot), g.constant(std::move(ones)));
  Tensor yt({b, 1});
  std::copy(y.begin(), y.end(), yt.data.begin());
  Ref dq = g.sub(qsel, g.constant(std::move(yt)));
  Ref critic_loss = g.mean(g.mul(dq, dq));

  const Tensor w = mpo_weights(g.val(q), cfg.eta);
  Ref actor_loss = g.mean(g.soft_ce_rows(pi, w));

  // Anchor the policy to the target network's distribution: a reference taken
  // from the very parameters being optimized would contribute zero gradient.
  Tensor ref_probs;
  {
    Graph gr(false);
    Tensor s2({b, 4, soko::kN, soko::kN});
    for (int i = 0; i < b; ++i)
      nets::write_abstract(s2.data.data() + static_cast<int64_t>(i) * 4 * soko::kCells,
                           batch[static_cast<size_t>(i)].s);
    ref_probs = mpo_weights(gr.val(target.forward(gr, gr.constant(std::move(s2))).first), 1.0f);
  }
  Ref kl_loss = g.mean(g.kl_categorical_rows(pi, ref_probs));

  Ref loss = g.add(critic_loss, g.add(actor_loss, g.scale(kl_loss, cfg.kl_coeff)));
  params.zero_grads();
  g.backward(loss);
  opt.step();

  PlannerLosses out;
  out.critic = static_cast<double>(g.val(critic_loss)[0]);
  out.actor = static_cast<double>(g.val(actor_loss)[0]);
  out.kl = static_cast<double>(g.val(kl_loss)[0]);
  return out;
}

}  // namespace sokorl::train
