#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>
#include <vector>

#include "doctest.h"
#include "sokorl/diff/adam.hpp"
#include "sokorl/soko/generate.hpp"
#include "sokorl/train/replay.hpp"
#include "sokorl/train/rollout.hpp"
#include "sokorl/train/updates.hpp"

namespace {

using namespace sokorl;
using Tensor = nets::Tensor;

// Stable binary cross entropy on a logit, double precision, computed
// independently of the graph implementation.
double bce_ref(double x, double y) {
  return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
}

phys::PhysicsEnv make_env(uint64_t level_seed, int difficulty = 1) {
  return phys::PhysicsEnv(soko::generate_level(soko::LevelSpec::of(difficulty), level_seed),
                          phys::BodyKind::Unicycle);
}

// Folds a segment's steps through the policy in value mode and returns the
// hidden state after the last step, for checking snapshot stitching.
nets::ControllerPolicy::Hidden replay_hidden(const train::PhySegment& seg,
                                             const nets::ControllerPolicy& pol,
                                             const phys::EnvConfig& cfg) {
  nets::Graph g(false);
  auto st = pol.state_refs(g, seg.policy_h, seg.policy_c);
  for (const train::PhyStep& s : seg.steps) {
    Tensor rays({1, nets::kRayChannels, cfg.rays});
    nets::write_ray_image(rays.data.data(), s.obs, cfg);
    Tensor cond({1, nets::kCondDim});
    nets::write_cond(cond.data.data(), s.obs, s.ctx.instr, s.beta_prev);
    st = pol.step(g, g.constant(std::move(rays)), g.constant(std::move(cond)), st).state;
  }
  return {g.val(st.h), g.val(st.c)};
}

long long centi(double x) { return std::llround(100.0 * x); }

void check_episode_books(const train::EpisodeResult& out, const phys::PhysicsEnv& env) {
  const train::EpisodeStats& st = out.stats;

  size_t seg_steps = 0;
  for (const auto& seg : out.segments) {
    CHECK(!seg.steps.empty());
    CHECK(seg.steps.size() <= 16);
    seg_steps += seg.steps.size();
  }
  CHECK(seg_steps == static_cast<size_t>(st.physical_steps));
  for (size_t i = 0; i + 1 < out.segments.size(); ++i)
    CHECK(out.segments[i].steps.size() == 16);

  // Flatten back to one stream.
  std::vector<train::PhyStep> steps;
  for (const auto& seg : out.segments)
    steps.insert(steps.end(), seg.steps.begin(), seg.steps.end());

  // Physical task reward must equal stored abstract reward plus dropped reward
  // plus the per-instruction time cost. Every task reward is an integer and
  // every abstract reward is integer minus 0.01, so the identity is exact in
  // centireward units (0.01 itself has no finite binary representation, which
  // rules out comparing the raw floating-point sums).
  long long phys_c = 0;
  for (const auto& s : steps) phys_c += centi(s.r_task);
  long long abst_c = 0;
  for (const auto& tr : out.abstract) abst_c += centi(tr.r);
  const long long dropped_c = centi(st.dropped_task_reward);
  CHECK(abst_c + dropped_c + static_cast<long long>(out.abstract.size()) == phys_c);
  CHECK(st.stored_abstract_steps == static_cast<int>(out.abstract.size()));
  CHECK(centi(st.task_reward) == phys_c);

  // One abstract transition per instruction, except the timed-out one.
  CHECK(static_cast<int>(out.abstract.size()) == st.instructions - (st.timed_out ? 1 : 0));
  if (!st.timed_out) CHECK(st.dropped_task_reward == 0.0);

  // The drop rule: only the transition preceding a timeout carries the induced
  // flag, and it must also be marked terminal.
  for (size_t i = 0; i < out.abstract.size(); ++i) {
    const auto& tr = out.abstract[i];
    const bool last = i + 1 == out.abstract.size();
    if (tr.induced_early_termination) {
      CHECK(last);
      CHECK(st.timed_out);
      CHECK(tr.terminal);
    }
    if (!last) CHECK(!tr.terminal);
  }
  if (st.timed_out && !out.abstract.empty()) {
    CHECK(out.abstract.back().terminal);
    CHECK(out.abstract.back().induced_early_termination);
  }

  // Instruction runs: a new instruction starts at step 0 and after every beta.
  int runs = 0;
  int run_len = 0;
  for (size_t k = 0; k < steps.size(); ++k) {
    const bool starts = k == 0 || steps[k - 1].beta;
    CHECK(steps[k].beta_prev == starts);
    if (starts) {
      ++runs;
      run_len = 0;
    } else {
      CHECK(steps[k].ctx.instr == steps[k - 1].ctx.instr);
      CHECK(steps[k].ctx.origin_cell == steps[k - 1].ctx.origin_cell);
      CHECK(steps[k].ctx.dest_cell == steps[k - 1].ctx.dest_cell);
    }
    ++run_len;
    CHECK(run_len <= env.config().t_instr);
  }
  CHECK(runs == st.instructions);

  // Environment termination only ever appears on the last physical step.
  for (size_t k = 0; k + 1 < steps.size(); ++k) CHECK(!steps[k].env_terminal);
  CHECK(st.solved == (!steps.empty() && steps.back().env_terminal));
  CHECK(st.completed <= st.instructions);
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("replay buffer evicts oldest items once capacity is exceeded") {
    train::ReplayBuffer<int> buf(10);
    for (int i = 0; i < 15; ++i) buf.append(i);
    CHECK(buf.size() == 10);
    CHECK(buf.weight() == 10);
    CHECK(buf.total_appended() == 15);

    Rng rng(3);
    for (int v : buf.sample(128, rng)) {
      CHECK(v >= 5);
      CHECK(v <= 14);
    }
  }

  TEST_CASE("replay buffer counts capacity in weight units") {
    train::ReplayBuffer<int> buf(10);
    buf.append(0, 4);
    buf.append(1, 4);
    buf.append(2, 4);
    CHECK(buf.size() == 2);
    CHECK(buf.weight() == 8);

    // A single item heavier than the whole buffer is still retained.
    train::ReplayBuffer<int> one(10);
    one.append(7, 50);
    CHECK(one.size() == 1);
    Rng rng(1);
    CHECK(one.sample(1, rng)[0] == 7);
  }

  TEST_CASE("replay buffer refuses to sample when empty") {
    train::ReplayBuffer<int> buf(4);
    Rng rng(1);
    CHECK_THROWS_AS(buf.sample(1, rng), EmptyBuffer);
  }

  TEST_CASE("replay buffer accounts every append under concurrency") {
    train::ReplayBuffer<int> buf(1 << 20);
    std::vector<std::thread> workers;
    for (int w = 0; w < 8; ++w)
      workers.emplace_back([&buf, w] {
        for (int i = 0; i < 500; ++i) buf.append(w * 1000 + i);
      });
    for (auto& t : workers) t.join();
    CHECK(buf.size() == 4000);
    CHECK(buf.total_appended() == 4000);
  }

  TEST_CASE("scripted episodes keep physical and abstract books balanced") {
    for (uint64_t i = 0; i < 8; ++i) {
      phys::PhysicsEnv env = make_env(100 + i, 1 + static_cast<int>(i % 3));
      train::RolloutModules m;
      train::RolloutConfig cfg;
      cfg.instr_source = train::InstrSource::Random;
      cfg.beta_source = train::BetaSource::Label;
      cfg.controller = train::CtrlKind::Scripted;
      cfg.max_instructions = 40;
      const train::EpisodeResult out = train::run_episode(env, m, cfg, 977 * i + 3);
      CHECK(out.stats.physical_steps > 0);
      check_episode_books(out, env);

      // With the label as beta source, beta equals the completion label.
      for (const auto& seg : out.segments)
        for (const auto& s : seg.steps) CHECK(s.beta == s.completion_label);
    }
  }

  TEST_CASE("untrained-policy episodes hit the timeout drop path") {
    diff::ParameterSetT<float> ps;
    Rng prng(9);
    phys::PhysicsEnv env = make_env(7);
    nets::ControllerNets ctrl(diff::NetCtx<float>{ps, &prng, ""}, env.config().rays);

    bool saw_timeout = false;
    for (uint64_t i = 0; i < 6; ++i) {
      train::RolloutModules m;
      m.policy = &ctrl.policy;
      train::RolloutConfig cfg;
      cfg.instr_source = train::InstrSource::Random;
      cfg.beta_source = train::BetaSource::Label;
      cfg.controller = train::CtrlKind::Policy;
      cfg.max_instructions = 3;
      const train::EpisodeResult out = train::run_episode(env, m, cfg, 31 * i + 5);
      check_episode_books(out, env);
      saw_timeout = saw_timeout || out.stats.timed_out;
    }
    CHECK(saw_timeout);
  }

  TEST_CASE("segment snapshots stitch the policy stream back together") {
    diff::ParameterSetT<float> ps;
    Rng prng(4);
    phys::PhysicsEnv env = make_env(12);
    nets::ControllerNets ctrl(diff::NetCtx<float>{ps, &prng, ""}, env.config().rays);

    train::RolloutModules m;
    m.policy = &ctrl.policy;
    train::RolloutConfig cfg;
    cfg.instr_source = train::InstrSource::Random;
    cfg.beta_source = train::BetaSource::Label;
    cfg.controller = train::CtrlKind::Policy;
    cfg.max_instructions = 3;
    const train::EpisodeResult out = train::run_episode(env, m, cfg, 88);
    REQUIRE(out.segments.size() >= 2);

    for (size_t i = 0; i + 1 < out.segments.size(); ++i) {
      const auto end = replay_hidden(out.segments[i], ctrl.policy, env.config());
      const Tensor& nh = out.segments[i + 1].policy_h;
      const Tensor& nc = out.segments[i + 1].policy_c;
      REQUIRE(end.h.size() == nh.size());
      for (int64_t j = 0; j < nh.size(); ++j) {
        CHECK(end.h[j] == doctest::Approx(nh[j]).epsilon(1e-6));
        CHECK(end.c[j] == doctest::Approx(nc[j]).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("controller TD targets never bootstrap through termination") {
    diff::ParameterSetT<float> ps;
    Rng prng(21);
    phys::PhysicsEnv env = make_env(3);
    nets::ControllerNets ctrl(diff::NetCtx<float>{ps, &prng, ""}, env.config().rays);
    diff::ParameterSetT<float> ps_t;
    Rng prng_t(22);
    nets::ControllerNets target(diff::NetCtx<float>{ps_t, &prng_t, ""}, env.config().rays);
    ps_t.copy_values_from(ps);

    train::RolloutModules m;
    train::RolloutConfig rcfg;
    rcfg.controller = train::CtrlKind::Scripted;
    rcfg.max_instructions = 2;
    const train::EpisodeResult out = train::run_episode(env, m, rcfg, 41);
    REQUIRE(!out.segments.empty());
    train::PhySegment seg = out.segments.front();
    REQUIRE(seg.steps.size() >= 2);
    // Scripted rollouts do not carry policy hiddens; the update contract makes
    // the caller responsible for them.
    const auto h0 = ctrl.policy.initial_hidden();
    seg.policy_h = h0.h;
    seg.policy_c = h0.c;

    train::ControllerUpdateConfig cfg;
    cfg.burn_in = 0;

    SUBCASE("terminal steps copy the reward") {
      for (auto& s : seg.steps) s.env_terminal = true;
      Rng rng(5);
      const auto y = train::controller_td_targets(seg, ctrl, target, cfg, env.config(), rng);
      REQUIRE(y.size() == seg.steps.size());
      for (size_t t = 0; t < y.size(); ++t) CHECK(y[t] == seg.steps[t].r_ctrl);
    }

    SUBCASE("zero discount reduces to the reward") {
      cfg.gamma = 0.0f;
      Rng rng(5);
      const auto y = train::controller_td_targets(seg, ctrl, target, cfg, env.config(), rng);
      for (size_t t = 0; t < y.size(); ++t) CHECK(y[t] == seg.steps[t].r_ctrl);
    }

    SUBCASE("same seed gives the same targets") {
      Rng r1(5), r2(5);
      const auto y1 = train::controller_td_targets(seg, ctrl, target, cfg, env.config(), r1);
      const auto y2 = train::controller_td_targets(seg, ctrl, target, cfg, env.config(), r2);
      CHECK(y1 == y2);
    }

    SUBCASE("a constant target critic shifts targets by gamma times its bias") {
      diff::ParamT<float>& w = ps_t.at("critic.mlp.l2.w");
      diff::ParamT<float>& b = ps_t.at("critic.mlp.l2.b");
      w.value.fill(0.0f);
      b.value.fill(3.0f);
      Rng rng(5);
      const auto y = train::controller_td_targets(seg, ctrl, target, cfg, env.config(), rng);
      for (size_t t = 0; t < y.size(); ++t) {
        const float expect =
            seg.steps[t].r_ctrl + (seg.steps[t].env_terminal ? 0.0f : cfg.gamma * 3.0f);
        CHECK(y[t] == doctest::Approx(expect).epsilon(1e-5));
      }
    }
  }

  TEST_CASE("planner TD targets bootstrap only where allowed") {
    nets::PlannerConfig small{6, 1, 1, 32};
    diff::ParameterSetT<float> ps;
    Rng prng(31);
    nets::PlannerNet net(diff::NetCtx<float>{ps, &prng, ""}, small);
    diff::ParameterSetT<float> ps_t;
    Rng prng_t(32);
    nets::PlannerNet target(diff::NetCtx<float>{ps_t, &prng_t, ""}, small);

    const soko::SokoGrid grid = soko::generate_level(soko::LevelSpec::of(1), 5);
    const soko::AbstractState s = soko::to_abstract(grid);

    train::AbstractTransition base;
    base.s = s;
    base.s_next = s;
    base.a = soko::Instruction::North;
    base.r = 0.75f;

    std::vector<train::AbstractTransition> batch(3, base);
    batch[0].terminal = true;  // genuine termination: no bootstrap
    batch[1].terminal = true;
    batch[1].induced_early_termination = true;  // timeout-induced: bootstrap
    batch[2].terminal = false;

    const auto y = train::planner_td_targets(batch, net, target, 0.97f);
    REQUIRE(y.size() == 3);
    CHECK(y[0] == 0.75f);

    // Hand-computed bootstrap: softmax of the net's policy logits dotted with
    // the target net's Q row.
    Tensor x({1, 4, soko::kN, soko::kN});
    nets::write_abstract(x.data.data(), s);
    nets::Graph g1(false), g2(false);
    const Tensor pi = g1.val(net.forward(g1, g1.constant(x)).first);
    const Tensor q = g2.val(target.forward(g2, g2.constant(x)).second);
    double hi = pi[0];
    for (int j = 1; j < nets::kInstrDim; ++j) hi = std::max(hi, static_cast<double>(pi[j]));
    double z = 0.0, v = 0.0;
    for (int j = 0; j < nets::kInstrDim; ++j) z += std::exp(static_cast<double>(pi[j]) - hi);
    for (int j = 0; j < nets::kInstrDim; ++j)
      v += std::exp(static_cast<double>(pi[j]) - hi) / z * static_cast<double>(q[j]);
    const float expect = 0.75f + 0.97f * static_cast<float>(v);
    CHECK(y[1] == doctest::Approx(expect).epsilon(1e-5));
    CHECK(y[2] == doctest::Approx(expect).epsilon(1e-5));
  }

  TEST_CASE("expectation weights form a shifted softmax") {
    Tensor q({2, 4});
    for (int j = 0; j < 4; ++j) q[j] = 1.5f;                    // row 0: ties
    const float row1[4] = {0.0f, 1.0f, 2.0f, 5.0f};             // row 1: spread
    for (int j = 0; j < 4; ++j) q[4 + j] = row1[j];

    const Tensor w = train::mpo_weights(q, 1.0f);
    for (int j = 0; j < 4; ++j) CHECK(w[j] == doctest::Approx(0.25).epsilon(1e-6));
    double sum = 0.0;
    for (int j = 0; j < 4; ++j) sum += w[4 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(w[4 + 3] > w[4 + 2]);

    // Shift invariance.
    Tensor qs({2, 4});
    for (int j = 0; j < 8; ++j) qs[j] = q[j] + 100.0f;
    const Tensor ws = train::mpo_weights(qs, 1.0f);
    for (int j = 0; j < 8; ++j) CHECK(ws[j] == doctest::Approx(w[j]).epsilon(1e-6));

    // Temperature limits: large eta flattens, small eta concentrates.
    const Tensor flat = train::mpo_weights(q, 1e6f);
    for (int j = 0; j < 4; ++j) CHECK(flat[4 + j] == doctest::Approx(0.25).epsilon(1e-4));
    const Tensor sharp = train::mpo_weights(q, 1e-3f);
    CHECK(sharp[4 + 3] == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("completion loss escalates with consecutive missed completions") {
    nets::Graph g(true);
    auto logit = [&g](float x) {
      Tensor t({1, 1});
      t[0] = x;
      return g.constant(std::move(t));
    };

    SUBCASE("all-missed positives weight 1,2,3,4") {
      std::vector<nets::Ref> logits = {logit(-2), logit(-2), logit(-2), logit(-2)};
      const nets::Ref loss = train::completion_loss(g, logits, {1, 1, 1, 1});
      const double expect = (1 + 2 + 3 + 4) * bce_ref(-2, 1);
      CHECK(g.val(loss)[0] == doctest::Approx(expect).epsilon(1e-5));
    }

    SUBCASE("a negative label inherits the streak weight then resets it") {
      std::vector<nets::Ref> logits = {logit(-2), logit(-2), logit(-2)};
      const nets::Ref loss = train::completion_loss(g, logits, {1, 0, 1});
      const double expect = bce_ref(-2, 1) + 2 * bce_ref(-2, 0) + bce_ref(-2, 1);
      CHECK(g.val(loss)[0] == doctest::Approx(expect).epsilon(1e-5));
    }

    SUBCASE("correct positives keep unit weight") {
      std::vector<nets::Ref> logits = {logit(3), logit(3), logit(3)};
      const nets::Ref loss = train::completion_loss(g, logits, {1, 1, 1});
      CHECK(g.val(loss)[0] == doctest::Approx(3 * bce_ref(3, 1)).epsilon(1e-5));
    }

    SUBCASE("confident correct predictions cost nearly nothing") {
      std::vector<nets::Ref> logits = {logit(30), logit(-30), logit(30)};
      const nets::Ref loss = train::completion_loss(g, logits, {1, 0, 1});
      CHECK(g.val(loss)[0] < 1e-6);
    }

    SUBCASE("length mismatch throws") {
      std::vector<nets::Ref> logits = {logit(0), logit(0)};
      CHECK_THROWS_AS(train::completion_loss(g, logits, {1, 0, 1}), ShapeError);
         }

    SUBCASE("empty sequence is a zero constant") {
      const nets::Ref loss = train::completion_loss(g, {}, {});
      CHECK(g.val(loss)[0] == 0.0f);
    }
  }

  TEST_CASE("controller update solves a one-step action bandit") {
    phys::PhysicsEnv env = make_env(11);
    auto [world, obs0] = env.reset(5);
    const phys::InstructionContext ictx = env.begin_instruction(world, soko::Instruction::Stay);

    // A floor on the policy spread keeps exploration alive: without it the
    // pre-squash mean can wander past tanh saturation early (while the critic
    // is still noise), where every sample looks alike and learning stalls.
    nets::PolicyConfig pc;
    pc.logstd_lo = -1.5f;
    diff::ParameterSetT<float> ps;
    Rng prng(42);
    nets::ControllerNets ctrl(diff::NetCtx<float>{ps, &prng, ""}, env.config().rays, pc);
    diff::ParameterSetT<float> ps_t;
    Rng prng_t(42);
    nets::ControllerNets target(diff::NetCtx<float>{ps_t, &prng_t, ""}, env.config().rays, pc);
    ps_t.copy_values_from(ps);

    diff::AdamConfig<float> acfg;
    acfg.lr = 2e-3f;
    acfg.grad_clip = 10.0f;
    diff::AdamT<float> opt(ps, acfg);

    train::ControllerUpdateConfig cfg;
    cfg.burn_in = 0;
    cfg.eta = 0.25f;
    cfg.kl_coeff = 0.05f;

    // Reward depends only on the executed action; termination after one step
    // removes bootstrapping, so the critic must regress the bandit landscape
    // and the policy must climb it.
    const float best0 = 0.3f, best1 = -0.2f;
    Rng rng(7);
    double first_critic = -1.0, last_critic = -1.0;
    for (int it = 0; it < 600; ++it) {
      if (it > 0 && it % 50 == 0) ps_t.copy_values_from(ps);
      std::vector<train::PhySegment> batch;
      for (int b = 0; b < 16; ++b) {
        train::PhyStep s;
        s.obs = obs0;
        s.world = world;
        s.ctx = ictx;
        s.beta_prev = true;
        const float u0 = static_cast<float>(1.2 * rng.normal());
        const float u1 = static_cast<float>(1.2 * rng.normal());
        s.u = {u0, u1};
        s.action = {std::tanh(u0), std::tanh(u1)};
        const float d0 = s.action[0] - best0, d1 = s.action[1] - best1;
        s.r_ctrl = -(d0 * d0 + d1 * d1);
        s.env_terminal = true;
        s.beta = true;

        train::PhySegment seg;
        seg.steps.push_back(s);
        seg.final_obs = obs0;
        seg.final_world = world;
        seg.final_ctx = ictx;
        seg.final_beta_prev = true;
        const auto h = ctrl.policy.initial_hidden();
        seg.policy_h = h.h;
        seg.policy_c = h.c;
        batch.push_back(std::move(seg));
      }
      const train::ControllerLosses l =
          train::update_controller(batch, ctrl, target, ps, opt, cfg, env.config(), rng);
      if (it == 0) first_critic = l.critic;
      last_critic = l.critic;
    }
    CHECK(last_critic < first_critic);
    CHECK(last_critic < 0.05);

    auto hid = ctrl.policy.initial_hidden();
    Rng arng(1);
    const auto act =
        ctrl.policy.act(obs0, env.config(), soko::Instruction::Stay, true, hid, false, arng);
    CHECK(std::abs(act.action[0] - best0) < 0.08);
    CHECK(std::abs(act.action[1] - best1) < 0.08);
  }

  TEST_CASE("controller update rejects an empty batch") {
    phys::PhysicsEnv env = make_env(11);
    diff::ParameterSetT<float> ps;
    Rng prng(1);
    nets::ControllerNets ctrl(diff::NetCtx<float>{ps, &prng, ""}, env.config().rays);
    diff::AdamT<float> opt(ps);
    train::ControllerUpdateConfig cfg;
    Rng rng(2);
    CHECK_THROWS_AS(
        train::update_controller({}, ctrl, ctrl, ps, opt, cfg, env.config(), rng), EmptyBuffer);
  }

  TEST_CASE("planner update learns a contextual bandit and stays deterministic") {
    const soko::SokoGrid grid = soko::generate_level(soko::LevelSpec::of(1), 5);
    const soko::AbstractState s = soko::to_abstract(grid);
    nets::PlannerConfig small{6, 1, 1, 32};

    // One state, all five actions, reward +1 for North and -1 otherwise, all
    // terminal: Q must converge to the rewards and the policy to North.
    std::vector<train::AbstractTransition> batch;
    for (int a = 0; a < nets::kInstrDim; ++a) {
      train::AbstractTransition tr;
      tr.s = s;
      tr.s_next = s;
      tr.a = static_cast<soko::Instruction>(a);
      tr.r = a == 0 ? 1.0f : -1.0f;
      tr.terminal = true;
      batch.push_back(tr);
    }

    auto run = [&](const std::string& path) {
      diff::ParameterSetT<float> ps;
      Rng prng(63);
      nets::PlannerNet net(diff::NetCtx<float>{ps, &prng, ""}, small);
      diff::ParameterSetT<float> ps_t;
      Rng prng_t(63);
      nets::PlannerNet target(diff::NetCtx<float>{ps_t, &prng_t, ""}, small);
      ps_t.copy_values_from(ps);

      diff::AdamConfig<float> acfg;
      acfg.lr = 3e-3f;
      diff::AdamT<float> opt(ps, acfg);
      train::PlannerUpdateConfig cfg;
      for (int it = 0; it < 400; ++it) train::update_planner(batch, net, target, ps, opt, cfg);
      ps.save(path);

      Rng rng(1);
      const auto plan = net.plan(s, false, rng);
      CHECK(plan.instr == soko::Instruction::North);
      CHECK(plan.q[0] == doctest::Approx(1.0).epsilon(0.2));
      CHECK(plan.q[1] == doctest::Approx(-1.0).epsilon(0.2));
      CHECK(plan.probs[0] > 0.5f);
    };

    run("/tmp/planner_a.ckpt");
    run("/tmp/planner_b.ckpt");

    // Bit-identical reruns: same seeds, same data, same arithmetic.
    std::ifstream fa("/tmp/planner_a.ckpt", std::ios::binary);
    std::ifstream fb("/tmp/planner_b.ckpt", std::ios::binary);
    const std::vector<char> da((std::istreambuf_iterator<char>(fa)),
                               std::istreambuf_iterator<char>());
    const std::vector<char> db((std::istreambuf_iterator<char>(fb)),
                               std::istreambuf_iterator<char>());
    REQUIRE(!da.empty());
    CHECK(da == db);
    std::remove("/tmp/planner_a.ckpt");
    std::remove("/tmp/planner_b.ckpt");
  }

  TEST_CASE("completion update reduces loss on its own batch") {
    diff::ParameterSetT<float> ps;
    Rng prng(17);
    phys::PhysicsEnv env = make_env(13);
    nets::SensorNets sensors(diff::NetCtx<float>{ps, &prng, ""}, env.config().rays);

    train::RolloutModules m;
    m.predictor = &sensors.completion;
    train::RolloutConfig rcfg;
    rcfg.controller = train::CtrlKind::Scripted;
    rcfg.beta_source = train::BetaSource::Predictor;
    rcfg.max_instructions = 4;
    const train::EpisodeResult out = train::run_episode(env, m, rcfg, 19);
    REQUIRE(!out.segments.empty());

    diff::AdamT<float> opt(ps, {1e-3f});
    train::CompletionUpdateConfig cfg;
    cfg.burn_in = 2;
    const double l0 = train::update_completion(out.segments, sensors, ps, opt, cfg, env.config());
    CHECK(l0 > 0.0);
    double l = l0;
    for (int it = 0; it < 20; ++it)
      l = train::update_completion(out.segments, sensors, ps, opt, cfg, env.config());
    CHECK(l < l0);
  }

  TEST_CASE("perception update trains on labelled segments") {
    diff::ParameterSetT<float> ps;
    Rng prng(23);
    phys::PhysicsEnv env = make_env(17);
    nets::SensorNets sensors(diff::NetCtx<float>{ps, &prng, ""}, env.config().rays);

    train::RolloutModules m;
    m.predictor = &sensors.completion;
    m.perception = &sensors.perception;
    train::RolloutConfig rcfg;
    rcfg.controller = train::CtrlKind::Scripted;
    rcfg.beta_source = train::BetaSource::Predictor;
    rcfg.max_instructions = 2;
    rcfg.store_labels = true;
    rcfg.store_belief = true;
    const train::EpisodeResult out = train::run_episode(env, m, rcfg, 29);
    REQUIRE(!out.segments.empty());
    REQUIRE(out.segments.front().labels.size() == out.segments.front().steps.size());
    REQUIRE(out.segments.front().belief_h.size() > 0);

    std::vector<train::PhySegment> batch = {out.segments.front()};
    diff::AdamT<float> opt(ps, {1e-3f});
    train::PerceptionUpdateConfig cfg;
    const train::PerceptionLosses l0 =
        train::update_perception(batch, sensors, ps, opt, cfg, env.config());
    CHECK(l0.steps > 0);
    CHECK(l0.perception > 0.0);
    CHECK(std::isfinite(l0.completion));
    train::PerceptionLosses l = l0;
    for (int it = 0; it < 5; ++it)
      l = train::update_perception(batch, sensors, ps, opt, cfg, env.config());
    CHECK(l.perception < l0.perception);
  }
}
