#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "csp/planner.hpp"

namespace csp::baselines {

// CSP with constant vertex scores and uniform random macro proposals.
planner::PlannerConfig no_curiosity_config(long cap, uint64_t seed);

// CSP with curiosity weighting (RND by default) but random macro proposals.
planner::PlannerConfig no_actor_critic_config(curiosity::Metric metric, long cap, uint64_t seed);

struct RrtResult {
  bool solved = false;
  long samples = 0;
  int depth = 0;
  double wall_ms = 0.0;
  std::vector<sim::MacroAction> macros;
};

// Kinodynamic-style RRT over macro-actions: sample a random flattened target
// configuration, extend the Euclidean-nearest vertex with one random macro.
RrtResult run_rrt_macro(const sim::TaskSpec& task, long sample_cap, uint64_t seed);

struct DrlConfig {
  long train_steps = 500'000;
  double reset_prob = 1e-4;
  double alpha = 1.0;  // reward mix: alpha*extrinsic + (1-alpha)*intrinsic
  bool train_rnd = false;
  int eval_trials = 6;
  long eval_step_cap = 200;
  uint64_t seed = 0;
};

struct DrlResult {
  std::vector<bool> eval_success;   // one per unseen initial configuration
  std::vector<long> eval_steps;     // steps to goal, or the cap
  long train_steps = 0;
  double wall_ms = 0.0;
  uint64_t policy_hash = 0;
  // A seed "produces a goal-reaching policy" when >= 2/3 of eval trials solve.
  bool goal_reaching = false;
  std::vector<double> reward_trace;  // mean extrinsic reward per 1024-step window
};

// Flat episodic PPO over macro-steps. alpha = 1 is vanilla PPO; alpha < 1
// blends an RND intrinsic bonus. RND training uses a separate RNG stream so
// alpha = 1 with train_rnd on or off follows bit-identical trajectories.
DrlResult run_ppo(const sim::TaskSpec& task, const DrlConfig& cfg);

}  // namespace csp::baselines
