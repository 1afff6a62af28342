#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "sokorl/errors.hpp"
#include "sokorl/train/stage.hpp"

namespace {

using namespace sokorl;
using namespace sokorl::train;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::filesystem::path temp_dir(const char* leaf) {
  auto p = std::filesystem::temp_directory_path() / leaf;
  std::filesystem::remove_all(p);
  return p;
}

TrainConfig tiny_controller_cfg(const std::filesystem::path& out) {
  TrainConfig c;
  c.stage = StageKind::Controller;
  c.seed = 7;
  c.levels = 2;
  c.max_updates = 3;
  c.min_replay = 64;
  c.batch_segments = 2;
  c.max_instructions = 2;
  c.target_refresh = 2;
  c.log_every = 1;
  c.out_dir = out.string();
  return c;
}

}  // namespace

TEST_SUITE("stage") {
  TEST_CASE("config file parsing and validation") {
    const auto dir = temp_dir("sokorl_stage_cfg");
    std::filesystem::create_directories(dir);
    const auto path = dir / "train.cfg";
    {
      std::ofstream f(path);
      f << "# planner run\n"
        << "stage = planner\n"
        << "body = tank\n"
        << "scripted_controller = true\n"
        << "seed = 42\n"
        << "levels = 3\n"
        << "difficulty_max = 2\n"
        << "lr = 1e-3\n"
        << "out_dir = " << (dir / "out").string() << "\n";
    }
    const TrainConfig c = TrainConfig::from_file(path.string());
    CHECK(c.stage == StageKind::Planner);
    CHECK(c.body == phys::BodyKind::Tank);
    CHECK(c.scripted_controller);
    CHECK(c.seed == 42);
    CHECK(c.levels == 3);
    CHECK(c.difficulty_max == 2);
    CHECK(c.lr == doctest::Approx(1e-3f));
    CHECK(c.max_updates == 1000);  // untouched default

    {
      std::ofstream f(path);
      f << "no_such_key = 1\n";
    }
    CHECK_THROWS_AS(TrainConfig::from_file(path.string()), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_file((dir / "missing.cfg").string()), ConfigError);

    TrainConfig bad;
    bad.stage = StageKind::Perception;  // needs all three prerequisite checkpoints
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.difficulty_min = 3;
    bad.difficulty_max = 2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.scripted_controller = true;  // only meaningful for the planner stage
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("round-robin controller stage is bit-reproducible") {
    const auto out_a = temp_dir("sokorl_stage_a");
    const auto out_b = temp_dir("sokorl_stage_b");
    TrainConfig c = tiny_controller_cfg(out_a);
    const StageResult ra = train_stage(c);
    c.out_dir = out_b.string();
    const StageResult rb = train_stage(c);

    CHECK(ra.updates == 3);
    CHECK(ra.env_steps == rb.env_steps);
    CHECK(ra.episodes == rb.episodes);
    CHECK(ra.episodes >= 4);  // at least min_replay fill + one per update
    CHECK(slurp(out_a / "controller.ckpt") == slurp(out_b / "controller.ckpt"));
    CHECK(slurp(out_a / "sensors.ckpt") == slurp(out_b / "sensors.ckpt"));
    CHECK(std::filesystem::exists(out_a / "metrics.jsonl"));
  }

  TEST_CASE("stages chain through their prerequisite checkpoints") {
    const auto base = temp_dir("sokorl_stage_chain");
    TrainConfig c = tiny_controller_cfg(base / "ctrl");
    train_stage(c);

    TrainConfig p;
    p.stage = StageKind::Planner;
    p.scripted_controller = true;
    p.seed = 9;
    p.levels = 2;
    p.max_updates = 3;
    p.min_replay = 8;
    p.batch_abstract = 4;
    p.max_instructions = 6;
    p.target_refresh = 2;
    p.out_dir = (base / "plan").string();
    const StageResult rp = train_stage(p);
    CHECK(rp.updates == 3);
    CHECK(std::filesystem::exists(base / "plan" / "planner.ckpt"));

    TrainConfig q;
    q.stage = StageKind::Perception;
    q.seed = 11;
    q.levels = 2;
    q.max_updates = 2;
    q.min_replay = 48;
    q.batch_segments = 2;
    q.max_instructions = 2;
    q.controller_ckpt = (base / "ctrl" / "controller.ckpt").string();
    q.sensors_ckpt = (base / "ctrl" / "sensors.ckpt").string();
    q.planner_ckpt = (base / "plan" / "planner.ckpt").string();
    q.out_dir = (base / "perc").string();
    const StageResult rq = train_stage(q);
    CHECK(rq.updates == 2);
    CHECK(std::filesystem::exists(base / "perc" / "sensors.ckpt"));

    // Missing prerequisite surfaces as a checkpoint error naming the stage's input.
    q.planner_ckpt = (base / "plan" / "nope.ckpt").string();
    CHECK_THROWS_AS(train_stage(q), CheckpointError);
  }

  TEST_CASE("threaded mode trains and joins cleanly") {
    const auto out = temp_dir("sokorl_stage_thr");
    TrainConfig c = tiny_controller_cfg(out);
    c.actors = 1;
    c.publish_every = 1;
    const StageResult r = train_stage(c);
    CHECK(r.updates == 3);
    CHECK(r.episodes >= 1);
    CHECK(std::filesystem::exists(out / "controller.ckpt"));
  }
}
