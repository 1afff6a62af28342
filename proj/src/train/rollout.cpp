#include "sokorl/train/rollout.hpp"

#include <algorithm>

namespace sokorl::train {

soko::Instruction random_feasible_instruction(const soko::SokoGrid& grid, Rng& rng) {
  std::array<soko::Instruction, soko::kNumInstructions> feasible;
  int n = 0;
  for (int mv = 0; mv < soko::kNumMoves; ++mv)
    if (soko::apply_move(grid, static_cast<soko::Move>(mv)).moved)
      feasible[static_cast<size_t>(n++)] = static_cast<soko::Instruction>(mv);
  feasible[static_cast<size_t>(n++)] = soko::Instruction::Stay;
  return feasible[rng.below(static_cast<uint64_t>(n))];
}

EpisodeResult run_episode(const phys::PhysicsEnv& env, const RolloutModules& m,
                          const RolloutConfig& cfg, uint64_t seed) {
  EpisodeResult out;
  EpisodeStats& st = out.stats;

  auto [world, obs] = env.reset(seed);
  Rng rng(Rng::mix(seed, 0x5e9));

  const bool track_pred = cfg.beta_source == BetaSource::Predictor || cfg.track_predictor;
  nets::ControllerPolicy::Hidden pol_h;
  nets::CompletionPredictor::Hidden pred_h;
  nets::PerceptionNet::Belief belief;
  if (cfg.controller == CtrlKind::Policy) pol_h = m.policy->initial_hidden();
  if (track_pred) pred_h = m.predictor->initial_hidden();
  if (cfg.store_belief) belief = m.perception->initial_belief();

  phys::ScriptedController scripted(env);

  std::vector<PhyStep> steps;
  std::vector<soko::AbstractState> labels;
  struct Snap {
    Tensor ph, pc, rh, rc, bh, bc;
  };
  std::vector<Snap> snaps;

  bool beta_prev = true;            // an episode starts at an instruction boundary
  bool terminal = env.solved(world);  // environment termination
  bool failed = false;              // instruction timeout

  while (!terminal && !failed && st.instructions < cfg.max_instructions) {
    const soko::AbstractState S = env.project_abstract(world);
    soko::Instruction A;
    if (cfg.instr_source == InstrSource::Random)
      A = random_feasible_instruction(soko::to_grid(S), rng);
    else
      A = m.planner->plan(S, cfg.sample_actions, rng).instr;

    const phys::InstructionContext ctx = env.begin_instruction(world, A);
    if (cfg.controller == CtrlKind::Scripted) scripted.begin(world, ctx);
    ++st.instructions;

    double task_sum = 0.0;
    bool beta = false;
    int t = 0;
    while (!beta && t < env.config().t_instr && !terminal) {
      if (steps.size() % static_cast<size_t>(cfg.segment_len) == 0) {
        Snap sn;
        if (cfg.controller == CtrlKind::Policy) {
          sn.ph = pol_h.h;
          sn.pc = pol_h.c;
        }
        if (track_pred) {
          sn.rh = pred_h.h;
          sn.rc = pred_h.c;
        }
        if (cfg.store_belief) {
          sn.bh = belief.h;
          sn.bc = belief.c;
        }
        snaps.push_back(std::move(sn));
      }
      if (cfg.store_labels) labels.push_back(env.project_abstract(world));
      if (cfg.store_belief) (void)m.perception->estimate(belief, obs, env.config());

      // a_t and beta_t are both produced from o_t; the action of the step that
      // raises beta still executes, so completion is signalled one step after
      // it physically happened.
      const bool label = env.completion_label(world, ctx);
      bool beta_now;
      if (cfg.beta_source == BetaSource::Label) {
        beta_now = label;
        if (track_pred)  // advance the stream; the prediction itself is unused
          (void)m.predictor->predict(obs, env.config(), A, beta_prev, pred_h, false, rng);
      } else {
        beta_now =
            m.predictor->predict(obs, env.config(), A, beta_prev, pred_h, cfg.sample_actions, rng)
                .beta;
      }

      PhyStep step;
      step.obs = obs;
      step.world = world;
      step.ctx = ctx;
      step.beta_prev = beta_prev;
      step.completion_label = label;
      step.beta = beta_now;

      std::array<double, 2> a;
      if (cfg.controller == CtrlKind::Scripted) {
        a = scripted.act(world);
        step.u = {0.0f, 0.0f};  // no pre-squash sample exists for the fixture
      } else {
        auto act = m.policy->act(obs, env.config(), A, beta_prev, pol_h, cfg.sample_actions, rng);
        a = act.action;
        step.u = act.u;
      }
      step.action = {static_cast<float>(a[0]), static_cast<float>(a[1])};

      const phys::WorldState prev = world;
      const phys::StepResult sr = env.step(world, a, 0);
      ++t;
      ++st.physical_steps;
      const phys::CtrlReward cr = env.controller_reward(prev, world, ctx, t);

      step.r_ctrl = static_cast<float>(cr.reward);
      step.r_task = static_cast<float>(sr.task_reward);
      step.env_terminal = sr.solved;
      steps.push_back(std::move(step));

      task_sum += sr.task_reward;
      st.task_reward += sr.task_reward;
      st.ctrl_reward += cr.reward;
      terminal = sr.solved;
      obs = sr.obs;
      beta = beta_now;
      beta_prev = beta_now;
    }

    failed = !beta && !terminal;  // budget lapsed: training-episode terminal
    if (beta) ++st.completed;

    if (failed) {
      st.timed_out = true;
      st.dropped_task_reward = task_sum;
      if (!out.abstract.empty()) {
        out.abstract.back().terminal = true;
        out.abstract.back().induced_early_termination = true;
      }
    } else {
      AbstractTransition tr;
      tr.s = S;
      tr.a = A;
      tr.r = static_cast<float>(task_sum - 0.01);
      tr.s_next = env.project_abstract(world);
      tr.terminal = terminal;
      out.abstract.push_back(tr);
      st.stored_abstract_r += static_cast<double>(tr.r);
      ++st.stored_abstract_steps;
    }
  }

  st.solved = terminal;
  st.truncated = !terminal && !failed;

  const int n = static_cast<int>(steps.size());
  for (int k0 = 0; k0 < n; k0 += cfg.segment_len) {
    const int k1 = std::min(k0 + cfg.segment_len, n);
    PhySegment seg;
    seg.steps.assign(steps.begin() + k0, steps.begin() + k1);
    if (cfg.store_labels) seg.labels.assign(labels.begin() + k0, labels.begin() + k1);
    if (k1 < n) {
      seg.final_obs = steps[static_cast<size_t>(k1)].obs;
      seg.final_world = steps[static_cast<size_t>(k1)].world;
      seg.final_ctx = steps[static_cast<size_t>(k1)].ctx;
      seg.final_beta_prev = steps[static_cast<size_t>(k1)].beta_prev;
    } else {
      seg.final_obs = obs;
      seg.final_world = world;
      // No successor instruction exists at the episode edge; the last context
      // stands in. It is only read for bootstrapping, which terminal steps
      // suppress, so this matters for at most one truncated step per episode.
      seg.final_ctx = steps.back().ctx;
      seg.final_beta_prev = steps.back().beta;
    }
    const Snap& sn = snaps[static_cast<size_t>(k0 / cfg.segment_len)];
    seg.policy_h = sn.ph;
    seg.policy_c = sn.pc;
    seg.pred_h = sn.rh;
    seg.pred_c = sn.rc;
    seg.belief_h = sn.bh;
    seg.belief_c = sn.bc;
    out.segments.push_back(std::move(seg));
  }
  return out;
}

}  // namespace sokorl::train
