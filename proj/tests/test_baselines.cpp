#include <cmath>

#include "csp/baselines.hpp"
#include "doctest.h"

using namespace csp::baselines;
using csp::planner::Planner;
using csp::sim::TaskSpec;

TEST_CASE("no-curiosity config: uniform scores and no curiosity module") {
  const TaskSpec t = TaskSpec::by_name("stack2", 0);
  auto cfg = no_curiosity_config(5000, 1);
  CHECK(!cfg.use_curiosity);
  CHECK(cfg.use_actor_critic);  // ablation removes only the novelty signal
  Planner p(t, cfg);
  CHECK(p.curiosity_module() == nullptr);
  p.reweight();
  for (int i = 0; i < 3; ++i) {
    p.expand_batch();
    p.reweight();
  }
  const auto idx = p.tree().samplable();
  for (int id : idx) CHECK(p.tree().at(id).score == 1.0);
}

TEST_CASE("no-actor-critic config keeps curiosity but never touches the policy") {
  const TaskSpec t = TaskSpec::by_name("stack2", 0);
  auto cfg = no_actor_critic_config(csp::curiosity::Metric::RND, 5000, 2);
  CHECK(cfg.use_curiosity);
  CHECK(!cfg.use_actor_critic);
  Planner p(t, cfg);
  REQUIRE(p.curiosity_module() != nullptr);
  const uint64_t policy_before = p.policy().params_hash();
  const uint64_t wm_before = p.curiosity_module()->params_hash();
  p.reweight();
  p.expand_batch();
  CHECK(p.policy().params_hash() == policy_before);
  // Curiosity trains on the feasible transitions of the batch.
  CHECK(p.curiosity_module()->params_hash() != wm_before);
}

TEST_CASE("macro-rrt solves an easy task and reports a replayable macro sequence") {
  const TaskSpec t = TaskSpec::by_name("moveany", 0);
  const auto r = run_rrt_macro(t, 50000, 3);
  REQUIRE(r.solved);
  CHECK(r.samples <= 50000);
  CHECK(r.depth == static_cast<int>(r.macros.size()));
  csp::sim::WorldState s = t.initial_state();
  for (const auto& m : r.macros) {
    const auto res = csp::sim::step_macro(s, m, t);
    REQUIRE(res.has_value());
    s = res->next;
  }
  CHECK(csp::sim::is_goal(s, t));
}

TEST_CASE("macro-rrt respects the sample cap when it cannot solve") {
  TaskSpec t = TaskSpec::by_name("stack5", 0);
  const auto r = run_rrt_macro(t, 256, 4);
  CHECK(!r.solved);
  CHECK(r.samples == 256);
}

TEST_CASE("macro-rrt is deterministic under a fixed seed") {
  const TaskSpec t = TaskSpec::by_name("moveany", 1);
  const auto a = run_rrt_macro(t, 20000, 5);
  const auto b = run_rrt_macro(t, 20000, 5);
  CHECK(a.solved == b.solved);
  CHECK(a.samples == b.samples);
  CHECK(a.depth == b.depth);
}

TEST_CASE("ppo extrinsic rewards are sparse zero-or-one at the goal") {
  // Short vanilla run on the easy dense task; the reward trace can only
  // contain window means in [0, 1].
  const TaskSpec t = TaskSpec::by_name("stack2", 0);
  DrlConfig cfg;
  cfg.train_steps = 4096;
  cfg.seed = 6;
  const auto r = run_ppo(t, cfg);
  CHECK(r.train_steps == 4096);
  REQUIRE(!r.reward_trace.empty());
  for (double m : r.reward_trace) {
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
  }
  CHECK(r.eval_success.size() == size_t(cfg.eval_trials));
  CHECK(r.eval_steps.size() == size_t(cfg.eval_trials));
  for (size_t i = 0; i < r.eval_success.size(); ++i) {
    if (!r.eval_success[i]) CHECK(r.eval_steps[i] == cfg.eval_step_cap);
  }
}

TEST_CASE("alpha=1 with RND training on or off follows bit-identical trajectories") {
  const TaskSpec t = TaskSpec::by_name("stack2", 0);
  DrlConfig base;
  base.train_steps = 3072;
  base.alpha = 1.0;
  base.seed = 7;
  DrlConfig with_rnd = base;
  with_rnd.train_rnd = true;
  const auto a = run_ppo(t, base);
  const auto b = run_ppo(t, with_rnd);
  CHECK(a.policy_hash == b.policy_hash);
  REQUIRE(a.reward_trace.size() == b.reward_trace.size());
  for (size_t i = 0; i < a.reward_trace.size(); ++i)
    CHECK(a.reward_trace[i] == b.reward_trace[i]);
  CHECK(a.eval_success == b.eval_success);
}

TEST_CASE("alpha=0 ignores the goal reward entirely") {
  const TaskSpec t = TaskSpec::by_name("stack2", 0);
  DrlConfig cfg;
  cfg.train_steps = 2048;
  cfg.alpha = 0.0;
  cfg.train_rnd = true;
  cfg.seed = 8;
  const auto r = run_ppo(t, cfg);
  // Training completes and produces a policy; the trace still reports the
  // extrinsic means for monitoring even though they carry no gradient.
  CHECK(r.train_steps == 2048);
  CHECK(r.policy_hash != 0);
}

TEST_CASE("run_ppo is deterministic under a fixed seed") {
  const TaskSpec t = TaskSpec::by_name("stack2", 1);
  DrlConfig cfg;
  cfg.train_steps = 2048;
  cfg.seed = 9;
  const auto a = run_ppo(t, cfg);
  const auto b = run_ppo(t, cfg);
  CHECK(a.policy_hash == b.policy_hash);
  CHECK(a.eval_success == b.eval_success);
  CHECK(a.eval_steps == b.eval_steps);
}

TEST_CASE("goal_reaching means at least two thirds of eval trials succeed") {
  const TaskSpec t = TaskSpec::by_name("stack2", 0);
  DrlConfig cfg;
  cfg.train_steps = 2048;
  cfg.seed = 10;
  const auto r = run_ppo(t, cfg);
  int succ = 0;
  for (bool s : r.eval_success) succ += s ? 1 : 0;
  CHECK(r.goal_reaching == (3 * succ >= 2 * cfg.eval_trials));
}
