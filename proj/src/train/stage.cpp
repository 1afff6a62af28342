#include "sokorl/train/stage.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <thread>
#include <utility>
#include <vector>

#include "sokorl/diff/adam.hpp"
#include "sokorl/nets/controller.hpp"
#include "sokorl/nets/perception.hpp"
#include "sokorl/nets/planner.hpp"
#include "sokorl/soko/generate.hpp"
#include "sokorl/train/replay.hpp"
#include "sokorl/train/rollout.hpp"
#include "sokorl/train/updates.hpp"

namespace sokorl::train {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& k, const std::string& v) {
  try {
    return std::stoi(v);
  } catch (...) {
    throw ConfigError("bad integer for " + k + ": '" + v + "'");
  }
}

uint64_t to_u64(const std::string& k, const std::string& v) {
  try {
    return std::stoull(v);
  } catch (...) {
    throw ConfigError("bad integer for " + k + ": '" + v + "'");
  }
}

float to_float(const std::string& k, const std::string& v) {
  try {
    return std::stof(v);
  } catch (...) {
    throw ConfigError("bad number for " + k + ": '" + v + "'");
  }
}

bool to_bool(const std::string& k, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean for " + k + ": '" + v + "'");
}

}  // namespace

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  TrainConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string k = trim(t.substr(0, eq));
    const std::string v = trim(t.substr(eq + 1));

    if (k == "stage") {
      if (v == "controller")
        c.stage = StageKind::Controller;
      else if (v == "planner")
        c.stage = StageKind::Planner;
      else if (v == "perception")
        c.stage = StageKind::Perception;
      else
        throw ConfigError("unknown stage: '" + v + "'");
    } else if (k == "body") {
      if (v == "unicycle")
        c.body = phys::BodyKind::Unicycle;
      else if (v == "tank")
        c.body = phys::BodyKind::Tank;
      else
        throw ConfigError("unknown body: '" + v + "'");
    } else if (k == "seed") {
      c.seed = to_u64(k, v);
    } else if (k == "levels") {
      c.levels = to_int(k, v);
    } else if (k == "difficulty_min") {
      c.difficulty_min = to_int(k, v);
    } else if (k == "difficulty_max") {
      c.difficulty_max = to_int(k, v);
    } else if (k == "max_updates") {
      c.max_updates = to_int(k, v);
    } else if (k == "max_seconds") {
      c.max_seconds = to_float(k, v);
    } else if (k == "actors") {
      c.actors = to_int(k, v);
    } else if (k == "rollouts_per_update") {
      c.rollouts_per_update = to_int(k, v);
    } else if (k == "min_replay") {
      c.min_replay = to_int(k, v);
    } else if (k == "replay_segments") {
      c.replay_segments = to_u64(k, v);
    } else if (k == "replay_abstract") {
      c.replay_abstract = to_u64(k, v);
    } else if (k == "batch_segments") {
      c.batch_segments = to_int(k, v);
    } else if (k == "batch_abstract") {
      c.batch_abstract = to_int(k, v);
    } else if (k == "segment_len") {
      c.segment_len = to_int(k, v);
    } else if (k == "max_instructions") {
      c.max_instructions = to_int(k, v);
    } else if (k == "target_refresh") {
      c.target_refresh = to_int(k, v);
    } else if (k == "checkpoint_every") {
      c.checkpoint_every = to_int(k, v);
    } else if (k == "log_every") {
      c.log_every = to_int(k, v);
    } else if (k == "publish_every") {
      c.publish_every = to_int(k, v);
    } else if (k == "lr") {
      c.lr = to_float(k, v);
    } else if (k == "grad_clip") {
      c.grad_clip = to_float(k, v);
    } else if (k == "eta") {
      c.eta = to_float(k, v);
    } else if (k == "kl_coeff") {
      c.kl_coeff = to_float(k, v);
    } else if (k == "gamma_ctrl") {
      c.gamma_ctrl = to_float(k, v);
    } else if (k == "gamma_abs") {
      c.gamma_abs = to_float(k, v);
    } else if (k == "burn_in") {
      c.burn_in = to_int(k, v);
    } else if (k == "mpo_samples") {
      c.mpo_samples = to_int(k, v);
    } else if (k == "bootstrap_samples") {
      c.bootstrap_samples = to_int(k, v);
    } else if (k == "logstd_lo") {
      c.logstd_lo = to_float(k, v);
    } else if (k == "train_completion") {
      c.train_completion = to_bool(k, v);
    } else if (k == "scripted_controller") {
      c.scripted_controller = to_bool(k, v);
    } else if (k == "out_dir") {
      c.out_dir = v;
    } else if (k == "controller_ckpt") {
      c.controller_ckpt = v;
    } else if (k == "sensors_ckpt") {
      c.sensors_ckpt = v;
    } else if (k == "planner_ckpt") {
      c.planner_ckpt = v;
    } else {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown config key '" + k + "'");
    }
  }
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (levels <= 0) throw ConfigError("levels must be positive");
  if (difficulty_min < 1 || difficulty_max > 5 || difficulty_min > difficulty_max)
    throw ConfigError("difficulty range must satisfy 1 <= min <= max <= 5");
  if (max_updates < 0) throw ConfigError("max_updates must be non-negative");
  if (actors < 0) throw ConfigError("actors must be non-negative");
  if (rollouts_per_update <= 0) throw ConfigError("rollouts_per_update must be positive");
  if (batch_segments <= 0 || batch_abstract <= 0) throw ConfigError("batch sizes must be positive");
  if (segment_len <= 0) throw ConfigError("segment_len must be positive");
  if (max_instructions <= 0) throw ConfigError("max_instructions must be positive");
  if (target_refresh <= 0) throw ConfigError("target_refresh must be positive");
  if (publish_every <= 0) throw ConfigError("publish_every must be positive");
  if (eta <= 0) throw ConfigError("eta must be positive");
  if (scripted_controller && stage != StageKind::Planner)
    throw ConfigError("scripted_controller applies to the planner stage only");

  const bool needs_ctrl =
      stage == StageKind::Perception || (stage == StageKind::Planner && !scripted_controller);
  if (needs_ctrl && controller_ckpt.empty()) throw ConfigError("this stage requires controller_ckpt");
  if (needs_ctrl && sensors_ckpt.empty()) throw ConfigError("this stage requires sensors_ckpt");
  if (stage == StageKind::Perception && planner_ckpt.empty())
    throw ConfigError("perception stage requires planner_ckpt");
}

namespace {

using Clock = std::chrono::steady_clock;

// Nets constructed in place over their own parameter set. SensorNets wires
// internal pointers between members, so bundles are built once and never
// copied or moved.
struct ControllerBundle {
  diff::ParameterSetT<float> ps;
  Rng init_rng;
  nets::ControllerNets nets;
  ControllerBundle(int rays, nets::PolicyConfig pc, uint64_t seed)
      : init_rng(seed), nets(diff::NetCtx<float>{ps, &init_rng, ""}, rays, pc) {}
};

struct SensorBundle {
  diff::ParameterSetT<float> ps;
  Rng init_rng;
  nets::SensorNets nets;
  SensorBundle(int rays, uint64_t seed)
      : init_rng(seed), nets(diff::NetCtx<float>{ps, &init_rng, ""}, rays) {}
};

struct PlannerBundle {
  diff::ParameterSetT<float> ps;
  Rng init_rng;
  nets::PlannerNet net;
  explicit PlannerBundle(uint64_t seed)
      : init_rng(seed), net(diff::NetCtx<float>{ps, &init_rng, ""}) {}
};

void load_into(diff::ParameterSetT<float>& ps, const std::string& path, const char* what) {
  try {
    ps.load(path);
  } catch (const CheckpointError& e) {
    throw CheckpointError(std::string(what) + " prerequisite: " + e.what());
  }
}

// Rolling view of recent episodes plus a lifetime count; shared between actor
// threads and the learner's metrics writer.
struct EpisodeWindow {
  std::mutex mu;
  std::deque<EpisodeStats> recent;
  long long episodes = 0;

  void add(const EpisodeStats& st) {
    std::lock_guard<std::mutex> lock(mu);
    ++episodes;
    recent.push_back(st);
    if (recent.size() > 200) recent.pop_front();
  }

  struct Agg {
    long long episodes = 0;
    double completed = 0.0, solved = 0.0, task = 0.0;
  };
  Agg aggregate() {
    std::lock_guard<std::mutex> lock(mu);
    Agg a;
    a.episodes = episodes;
    if (recent.empty()) return a;
    long long instr = 0, comp = 0, solv = 0;
    double task = 0.0;
    for (const EpisodeStats& st : recent) {
      instr += st.instructions;
      comp += st.completed;
      solv += st.solved ? 1 : 0;
      task += st.task_reward;
    }
    a.completed = instr > 0 ? static_cast<double>(comp) / static_cast<double>(instr) : 0.0;
    a.solved = static_cast<double>(solv) / static_cast<double>(recent.size());
    a.task = task / static_cast<double>(recent.size());
    return a;
  }
};

struct LossAvg {
  double critic = 0, actor = 0, kl = 0, completion = 0, perception = 0;
  int n = 0;
  void reset() { *this = {}; }
};

class StageRunner {
 public:
  explicit StageRunner(const TrainConfig& cfg)
      : cfg_(cfg),
        b_phy_(cfg.replay_segments),
        b_abst_(cfg.replay_abstract),
        sample_rng_(Rng::mix(cfg.seed, 0x5a11)),
        update_rng_(Rng::mix(cfg.seed, 0x0b1)) {
    std::filesystem::create_directories(cfg.out_dir);
    build_levels();
    build_modules();
    metrics_.open(cfg.out_dir + "/metrics.jsonl", std::ios::trunc);
    if (!metrics_) throw ConfigError("cannot write metrics under " + cfg.out_dir);
  }

  StageResult run() {
    start_ = Clock::now();
    if (cfg_.actors == 0)
      run_round_robin();
    else
      run_threaded();
    save_checkpoints();
    log_metrics();
    StageResult r;
    r.updates = updates_;
    r.env_steps = env_steps_.load();
    r.episodes = window_.aggregate().episodes;
    r.wall_seconds = elapsed();
    return r;
  }

 private:
  double elapsed() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }
  bool wall_ok() const { return cfg_.max_seconds <= 0 || elapsed() < cfg_.max_seconds; }

  void build_levels() {
    const int span = cfg_.difficulty_max - cfg_.difficulty_min + 1;
    envs_.reserve(static_cast<size_t>(cfg_.levels));
    for (int i = 0; i < cfg_.levels; ++i) {
      const int d = cfg_.difficulty_min + i % span;
      for (uint64_t attempt = 0;; ++attempt) {
        try {
          envs_.emplace_back(
              soko::generate_level(soko::LevelSpec::of(d),
                                   Rng::mix(cfg_.seed, 0x1e7e15,
                                            static_cast<uint64_t>(i) * 64 + attempt)),
              cfg_.body);
          break;
        } catch (const GenerationExhausted&) {
          if (attempt >= 8) throw;
        }
      }
    }
    env_cfg_ = envs_.front().config();
  }

  void build_modules() {
    nets::PolicyConfig pc;
    pc.logstd_lo = cfg_.logstd_lo;
    const int rays = env_cfg_.rays;

    switch (cfg_.stage) {
      case StageKind::Controller:
        ctrl_ = std::make_unique<ControllerBundle>(rays, pc, Rng::mix(cfg_.seed, 0xC0));
        ctrl_target_ = std::make_unique<ControllerBundle>(rays, pc, Rng::mix(cfg_.seed, 0xC1));
        ctrl_target_->ps.copy_values_from(ctrl_->ps);
        opt_main_ = make_opt(ctrl_->ps);
        if (cfg_.train_completion) {
          sens_ = std::make_unique<SensorBundle>(rays, Rng::mix(cfg_.seed, 0x5e));
          opt_sens_ = make_opt(sens_->ps);
        }
        break;
      case StageKind::Planner:
        plan_ = std::make_unique<PlannerBundle>(Rng::mix(cfg_.seed, 0xB1));
        plan_target_ = std::make_unique<PlannerBundle>(Rng::mix(cfg_.seed, 0xB2));
        plan_target_->ps.copy_values_from(plan_->ps);
        opt_main_ = make_opt(plan_->ps);
        if (!cfg_.scripted_controller) {
          ctrl_ = std::make_unique<ControllerBundle>(rays, pc, Rng::mix(cfg_.seed, 0xC0));
          load_into(ctrl_->ps, cfg_.controller_ckpt, "controller");
          sens_ = std::make_unique<SensorBundle>(rays, Rng::mix(cfg_.seed, 0x5e));
          load_into(sens_->ps, cfg_.sensors_ckpt, "sensors");
        }
        break;
      case StageKind::Perception:
        sens_ = std::make_unique<SensorBundle>(rays, Rng::mix(cfg_.seed, 0x5e));
        load_into(sens_->ps, cfg_.sensors_ckpt, "sensors");
        opt_main_ = make_opt(sens_->ps);
        ctrl_ = std::make_unique<ControllerBundle>(rays, pc, Rng::mix(cfg_.seed, 0xC0));
        load_into(ctrl_->ps, cfg_.controller_ckpt, "controller");
        plan_ = std::make_unique<PlannerBundle>(Rng::mix(cfg_.seed, 0xB1));
        load_into(plan_->ps, cfg_.planner_ckpt, "planner");
        break;
    }
  }

  std::unique_ptr<diff::AdamT<float>> make_opt(diff::ParameterSetT<float>& ps) const {
    diff::AdamConfig<float> a;
    a.lr = cfg_.lr;
    a.grad_clip = cfg_.grad_clip;
    return std::make_unique<diff::AdamT<float>>(ps, a);
  }

  RolloutConfig rollout_config() const {
    RolloutConfig r;
    r.segment_len = cfg_.segment_len;
    r.max_instructions = cfg_.max_instructions;
    switch (cfg_.stage) {
      case StageKind::Controller:
        r.instr_source = InstrSource::Random;
        r.beta_source = BetaSource::Label;
        r.controller = CtrlKind::Policy;
        r.track_predictor = cfg_.train_completion;
        break;
      case StageKind::Planner:
        r.instr_source = InstrSource::Planner;
        r.beta_source = cfg_.scripted_controller ? BetaSource::Label : BetaSource::Predictor;
        r.controller = cfg_.scripted_controller ? CtrlKind::Scripted : CtrlKind::Policy;
        break;
      case StageKind::Perception:
        r.instr_source = InstrSource::Planner;
        r.beta_source = BetaSource::Predictor;
        r.controller = CtrlKind::Policy;
        r.store_labels = true;
        r.store_belief = true;
        break;
    }
    return r;
  }

  RolloutModules modules_for(const ControllerBundle* c, const SensorBundle* s,
                             const PlannerBundle* p) const {
    RolloutModules m;
    if (c) m.policy = &c->nets.policy;
    if (s) {
      m.predictor = &s->nets.completion;
      m.perception = &s->nets.perception;
    }
    if (p) m.planner = &p->net;
    return m;
  }

  size_t learn_buffer_weight() const {
    return cfg_.stage == StageKind::Planner ? b_abst_.weight() : b_phy_.weight();
  }

  void collect_episode(const RolloutModules& m, const RolloutConfig& rcfg, uint64_t seed) {
    const phys::PhysicsEnv& env = envs_[Rng(seed).below(envs_.size())];
    EpisodeResult out = run_episode(env, m, rcfg, seed);
    env_steps_ += out.stats.physical_steps;
    window_.add(out.stats);
    if (cfg_.stage != StageKind::Planner)
      for (PhySegment& seg : out.segments) {
        const size_t w = seg.steps.size();
        b_phy_.append(std::move(seg), w);
      }
    for (AbstractTransition& tr : out.abstract) b_abst_.append(std::move(tr));
  }

  void update_once() {
    switch (cfg_.stage) {
      case StageKind::Controller: {
        ControllerUpdateConfig u;
        u.gamma = cfg_.gamma_ctrl;
        u.eta = cfg_.eta;
        u.kl_coeff = cfg_.kl_coeff;
        u.burn_in = cfg_.burn_in;
        u.mpo_samples = cfg_.mpo_samples;
        u.bootstrap_samples = cfg_.bootstrap_samples;
        const auto batch = b_phy_.sample(cfg_.batch_segments, sample_rng_);
        const ControllerLosses l = update_controller(batch, ctrl_->nets, ctrl_target_->nets,
                                                     ctrl_->ps, *opt_main_, u, env_cfg_,
                                                     update_rng_);
        losses_.critic += l.critic;
        losses_.actor += l.actor;
        losses_.kl += l.kl;
        if (sens_) {
          CompletionUpdateConfig cu;
          cu.burn_in = cfg_.burn_in;
          const auto cbatch = b_phy_.sample(cfg_.batch_segments, sample_rng_);
          losses_.completion +=
              update_completion(cbatch, sens_->nets, sens_->ps, *opt_sens_, cu, env_cfg_);
        }
        if ((updates_ + 1) % cfg_.target_refresh == 0) ctrl_target_->ps.copy_values_from(ctrl_->ps);
        break;
      }
      case StageKind::Planner: {
        PlannerUpdateConfig u;
        u.gamma = cfg_.gamma_abs;
        u.eta = cfg_.eta;
        u.kl_coeff = cfg_.kl_coeff;
        const auto batch = b_abst_.sample(cfg_.batch_abstract, sample_rng_);
        const PlannerLosses l =
            update_planner(batch, plan_->net, plan_target_->net, plan_->ps, *opt_main_, u);
        losses_.critic += l.critic;
        losses_.actor += l.actor;
        losses_.kl += l.kl;
        if ((updates_ + 1) % cfg_.target_refresh == 0) plan_target_->ps.copy_values_from(plan_->ps);
        break;
      }
      case StageKind::Perception: {
        PerceptionUpdateConfig u;
        u.burn_in = cfg_.burn_in;
        const auto batch = b_phy_.sample(cfg_.batch_segments, sample_rng_);
        const PerceptionLosses l =
            update_perception(batch, sens_->nets, sens_->ps, *opt_main_, u, env_cfg_);
        losses_.perception += l.perception;
        losses_.completion += l.completion;
        break;
      }
    }
    ++losses_.n;
    ++updates_;
    if (cfg_.checkpoint_every > 0 && updates_ % cfg_.checkpoint_every == 0) save_checkpoints();
    if (cfg_.log_every > 0 && updates_ % cfg_.log_every == 0) {
      log_metrics();
      losses_.reset();
    }
  }

  void run_round_robin() {
    const RolloutConfig rcfg = rollout_config();
    const RolloutModules m = modules_for(ctrl_.get(), sens_.get(), plan_.get());
    uint64_t ep = 0;
    while (updates_ < cfg_.max_updates && wall_ok()) {
      while (learn_buffer_weight() < static_cast<size_t>(cfg_.min_replay) && wall_ok())
        collect_episode(m, rcfg, Rng::mix(cfg_.seed, 0xE9, ep++));
      if (!wall_ok()) break;
      for (int r = 0; r < cfg_.rollouts_per_update; ++r)
        collect_episode(m, rcfg, Rng::mix(cfg_.seed, 0xE9, ep++));
      update_once();
    }
  }

  void run_threaded() {
    const RolloutConfig rcfg = rollout_config();
    const int rays = env_cfg_.rays;
    nets::PolicyConfig pc;
    pc.logstd_lo = cfg_.logstd_lo;

    // The learner's sets are written by Adam while actors roll out, so actors
    // act on private copies of the learned modules, refreshed through a
    // snapshot store; frozen modules and envs are shared read-only.
    std::unique_ptr<ControllerBundle> snap_ctrl;
    std::unique_ptr<SensorBundle> snap_sens;
    std::unique_ptr<PlannerBundle> snap_plan;
    std::unique_ptr<SnapshotStore> store_ctrl, store_sens, store_plan;
    struct Publish {
      SnapshotStore* store;
      const diff::ParameterSetT<float>* learner;
    };
    std::vector<Publish> pubs;

    const bool learn_ctrl = cfg_.stage == StageKind::Controller;
    const bool learn_sens =
        (cfg_.stage == StageKind::Controller && sens_) || cfg_.stage == StageKind::Perception;
    const bool learn_plan = cfg_.stage == StageKind::Planner;
    if (learn_ctrl) {
      snap_ctrl = std::make_unique<ControllerBundle>(rays, pc, Rng::mix(cfg_.seed, 0xF0));
      snap_ctrl->ps.copy_values_from(ctrl_->ps);
      store_ctrl = std::make_unique<SnapshotStore>(snap_ctrl->ps);
      pubs.push_back({store_ctrl.get(), &ctrl_->ps});
    }
    if (learn_sens) {
      snap_sens = std::make_unique<SensorBundle>(rays, Rng::mix(cfg_.seed, 0xF1));
      snap_sens->ps.copy_values_from(sens_->ps);
      store_sens = std::make_unique<SnapshotStore>(snap_sens->ps);
      pubs.push_back({store_sens.get(), &sens_->ps});
    }
    if (learn_plan) {
      snap_plan = std::make_unique<PlannerBundle>(Rng::mix(cfg_.seed, 0xF2));
      snap_plan->ps.copy_values_from(plan_->ps);
      store_plan = std::make_unique<SnapshotStore>(snap_plan->ps);
      pubs.push_back({store_plan.get(), &plan_->ps});
    }

    std::atomic<bool> stop{false};
    std::mutex err_mu;
    std::exception_ptr err;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(cfg_.actors));
    for (int a = 0; a < cfg_.actors; ++a) {
      threads.emplace_back([&, a] {
        try {
          std::unique_ptr<ControllerBundle> my_ctrl;
          std::unique_ptr<SensorBundle> my_sens;
          std::unique_ptr<PlannerBundle> my_plan;
          if (learn_ctrl)
            my_ctrl = std::make_unique<ControllerBundle>(
                rays, pc, Rng::mix(cfg_.seed, 0xA0, static_cast<uint64_t>(a)));
          if (learn_sens)
            my_sens = std::make_unique<SensorBundle>(
                rays, Rng::mix(cfg_.seed, 0xA1, static_cast<uint64_t>(a)));
          if (learn_plan)
            my_plan = std::make_unique<PlannerBundle>(
                Rng::mix(cfg_.seed, 0xA2, static_cast<uint64_t>(a)));

          const RolloutModules m = modules_for(my_ctrl ? my_ctrl.get() : ctrl_.get(),
                                               my_sens ? my_sens.get() : sens_.get(),
                                               my_plan ? my_plan.get() : plan_.get());
          uint64_t have_ctrl = 0, have_sens = 0, have_plan = 0, ep = 0;
          while (!stop.load(std::memory_order_relaxed)) {
            if (store_ctrl) have_ctrl = store_ctrl->refresh(my_ctrl->ps, have_ctrl);
            if (store_sens) have_sens = store_sens->refresh(my_sens->ps, have_sens);
            if (store_plan) have_plan = store_plan->refresh(my_plan->ps, have_plan);
            collect_episode(m, rcfg, Rng::mix(cfg_.seed, 0xAC00 + static_cast<uint64_t>(a), ep++));
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
          stop.store(true);
        }
      });
    }

    while (updates_ < cfg_.max_updates && wall_ok() && !stop.load()) {
      if (learn_buffer_weight() < static_cast<size_t>(cfg_.min_replay)) {
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
        continue;
      }
      update_once();
      if (updates_ % cfg_.publish_every == 0)
        for (const Publish& p : pubs) p.store->publish(*p.learner);
    }
    stop.store(true);
    for (std::thread& t : threads) t.join();
    if (err) std::rethrow_exception(err);
  }

  void save_checkpoints() {
    const std::filesystem::path out(cfg_.out_dir);
    switch (cfg_.stage) {
      case StageKind::Controller:
        ctrl_->ps.save((out / "controller.ckpt").string());
        if (sens_) sens_->ps.save((out / "sensors.ckpt").string());
        break;
      case StageKind::Planner:
        plan_->ps.save((out / "planner.ckpt").string());
        break;
      case StageKind::Perception:
        sens_->ps.save((out / "sensors.ckpt").string());
        break;
    }
  }

  void log_metrics() {
    const EpisodeWindow::Agg a = window_.aggregate();
    const int n = std::max(losses_.n, 1);
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "{\"wall\":%.1f,\"updates\":%d,\"env_steps\":%lld,\"episodes\":%lld,"
                  "\"critic\":%.6g,\"actor\":%.6g,\"kl\":%.6g,\"completion\":%.6g,"
                  "\"perception\":%.6g,\"completed\":%.4f,\"solved\":%.4f,\"task_reward\":%.4f}",
                  elapsed(), updates_, env_steps_.load(), a.episodes, losses_.critic / n,
                  losses_.actor / n, losses_.kl / n, losses_.completion / n,
                  losses_.perception / n, a.completed, a.solved, a.task);
    metrics_ << buf << "\n" << std::flush;
  }

  const TrainConfig& cfg_;
  phys::EnvConfig env_cfg_;
  std::vector<phys::PhysicsEnv> envs_;

  std::unique_ptr<ControllerBundle> ctrl_, ctrl_target_;
  std::unique_ptr<SensorBundle> sens_;
  std::unique_ptr<PlannerBundle> plan_, plan_target_;
  std::unique_ptr<diff::AdamT<float>> opt_main_, opt_sens_;

  ReplayBuffer<PhySegment> b_phy_;
  ReplayBuffer<AbstractTransition> b_abst_;

  EpisodeWindow window_;
  LossAvg losses_;
  std::atomic<long long> env_steps_{0};
  int updates_ = 0;
  Rng sample_rng_, update_rng_;
  std::ofstream metrics_;
  Clock::time_point start_;
};

}  // namespace

StageResult train_stage(const TrainConfig& cfg) {
  cfg.validate();
  StageRunner runner(cfg);
  return runner.run();
}

}  // namespace sokorl::train
