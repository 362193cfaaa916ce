#include "csp/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "csp/util.hpp"

namespace csp::baselines {

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

std::vector<double> random_raw_action(const sim::TaskSpec& task, std::mt19937_64& rng) {
  const int k = task.k();
  std::vector<double> raw(task.action_dim());
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-0.999999, 0.999999);
  for (int i = 0; i < k * k; ++i) raw[i] = gauss(rng);
  for (int b = 0; b < k; ++b) {
    const int base = k * k + 4 * b;
    raw[base] = gauss(rng);
    for (int d = 1; d < 4; ++d) raw[base + d] = std::atanh(unit(rng));
  }
  raw[task.action_dim() - 2] = gauss(rng);
  raw[task.action_dim() - 1] = gauss(rng);
  return raw;
}

}  // namespace

planner::PlannerConfig no_curiosity_config(long cap, uint64_t seed) {
  // Ablation keeps the full planner loop, including the actor-critic; only
  // the learned novelty is replaced by constant vertex scores (uniform P,
  // feasibility-only policy reward).
  planner::PlannerConfig cfg;
  cfg.sample_cap = cap;
  cfg.seed = seed;
  cfg.use_curiosity = false;
  cfg.use_actor_critic = true;
  return cfg;
}

planner::PlannerConfig no_actor_critic_config(curiosity::Metric metric, long cap, uint64_t seed) {
  planner::PlannerConfig cfg;
  cfg.sample_cap = cap;
  cfg.seed = seed;
  cfg.metric = metric;
  cfg.use_actor_critic = false;
  return cfg;
}

RrtResult run_rrt_macro(const sim::TaskSpec& task, long sample_cap, uint64_t seed) {
  struct Node {
    sim::WorldState state;
    std::vector<double> flat;
    int parent = -1;
    sim::MacroAction macro;
  };
  std::mt19937_64 rng(mix_seed(seed, 0x727274ULL));
  std::vector<Node> nodes;
  Node root;
  root.state = task.initial_state();
  root.flat = sim::flatten_state(root.state, task.links_enabled);
  nodes.push_back(std::move(root));

  RrtResult out;
  const double start = now_ms();
  std::uniform_real_distribution<double> ux(task.ws_xmin, task.ws_xmax);
  std::uniform_real_distribution<double> uy(task.ws_ymin, task.ws_ymax);
  std::uniform_real_distribution<double> uth(-task.ws_theta_range, task.ws_theta_range);
  std::uniform_int_distribution<int> ubit(0, 1);

  while (out.samples < sample_cap) {
    std::vector<double> target;
    target.reserve(task.state_dim());
    for (int i = 0; i < task.k(); ++i) {
      target.push_back(ux(rng));
      target.push_back(uy(rng));
      target.push_back(uth(rng));
    }
    if (task.links_enabled)
      for (int i = 0; i < task.k() * task.k(); ++i) target.push_back(ubit(rng));

    int nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < nodes.size(); ++i) {
      double d = 0.0;
      for (size_t j = 0; j < target.size(); ++j) {
        const double dv = nodes[i].flat[j] - target[j];
        d += dv * dv;
      }
      if (d < best) {
        best = d;
        nearest = static_cast<int>(i);
      }
    }

    const auto raw = random_raw_action(task, rng);
    const auto macro = sim::decode_action(raw, nodes[nearest].state, task);
    auto res = sim::step_macro(nodes[nearest].state, macro, task);
    ++out.samples;
    if (!res) continue;

    Node n;
    n.state = res->next;
    n.flat = sim::flatten_state(n.state, task.links_enabled);
    n.parent = nearest;
    n.macro = macro;
    nodes.push_back(std::move(n));
    if (sim::is_goal(nodes.back().state, task)) {
      out.solved = true;
      for (int v = static_cast<int>(nodes.size()) - 1; nodes[v].parent >= 0; v = nodes[v].parent)
        out.macros.push_back(nodes[v].macro);
      std::reverse(out.macros.begin(), out.macros.end());
      out.depth = static_cast<int>(out.macros.size());
      break;
    }
  }
  out.wall_ms = now_ms() - start;
  return out;
}

DrlResult run_ppo(const sim::TaskSpec& task, const DrlConfig& cfg) {
  const double start = now_ms();
  policy::PolicyPair pol(task.state_dim(), task.action_dim(), mix_seed(cfg.seed, 0x64726cULL));
  std::mt19937_64 env_rng(mix_seed(cfg.seed, 0x656e76ULL));
  std::mt19937_64 act_rng(mix_seed(cfg.seed, 0x616374ULL));
  std::mt19937_64 rnd_rng(mix_seed(cfg.seed, 0x726e64ULL));
  (void)rnd_rng;

  std::unique_ptr<curiosity::CuriosityModule> rnd;
  std::vector<curiosity::Transition> rnd_window;
  if (cfg.train_rnd)
    rnd = std::make_unique<curiosity::CuriosityModule>(curiosity::CuriosityModule::make(
        curiosity::Metric::RND, task, mix_seed(cfg.seed, 0x726e6432ULL)));

  policy::RolloutBuffer buffer;
  const sim::WorldState init = task.initial_state();
  sim::WorldState s = init;
  std::vector<double> flat = sim::flatten_state(s, task.links_enabled);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  DrlResult out;
  long updates = 0;
  double window_reward = 0.0;
  long window_n = 0;

  for (long step = 0; step < cfg.train_steps; ++step) {
    auto sample = pol.select_action(flat, act_rng);
    const auto macro = sim::decode_action(sample.action, s, task);
    auto res = sim::step_macro(s, macro, task);
    sim::WorldState next = res ? res->next : s;
    std::vector<double> next_flat =
        res ? sim::flatten_state(next, task.links_enabled) : flat;

    const double re = sim::is_goal(next, task) ? 1.0 : 0.0;
    double reward = re;
    if (rnd) {
      curiosity::Transition t;
      t.state = next_flat;
      t.action = sample.action;
      t.next_state = next_flat;
      const double ri = rnd->novelty(std::span<const curiosity::Transition>(&t, 1))[0];
      reward = cfg.alpha * re + (1.0 - cfg.alpha) * ri;
      rnd_window.push_back(std::move(t));
    }
    window_reward += re;
    ++window_n;

    buffer.add(flat, sample.action, sample.logp, reward, pol.value(flat), pol.value(next_flat));
    if (buffer.full()) {
      pol.ppo_update(buffer, mix_seed(cfg.seed, 0x757064ULL + static_cast<uint64_t>(updates)));
      if (rnd && !rnd_window.empty()) {
        rnd->train(rnd_window, mix_seed(cfg.seed, 0x72747265ULL + static_cast<uint64_t>(updates)));
        rnd_window.clear();
      }
      ++updates;
      out.reward_trace.push_back(window_reward / static_cast<double>(window_n));
      window_reward = 0.0;
      window_n = 0;
    }

    if (re > 0.0) {
      s = init;
      flat = sim::flatten_state(s, task.links_enabled);
    } else if (unit(env_rng) < cfg.reset_prob) {
      s = init;
      flat = sim::flatten_state(s, task.links_enabled);
    } else {
      s = std::move(next);
      flat = std::move(next_flat);
    }
  }
  out.train_steps = cfg.train_steps;
  out.policy_hash = pol.params_hash();

  // Evaluate on unseen initial configurations (fresh placement seeds).
  std::mt19937_64 eval_rng(mix_seed(cfg.seed, 0x6576616cULL));
  int successes = 0;
  for (int trial = 0; trial < cfg.eval_trials; ++trial) {
    const sim::TaskSpec etask =
        sim::TaskSpec::by_name(task.name, task.placement_seed + 101 + trial);
    sim::WorldState es = etask.initial_state();
    std::vector<double> eflat = sim::flatten_state(es, etask.links_enabled);
    bool solved = false;
    long steps = 0;
    while (steps < cfg.eval_step_cap) {
      auto sample = pol.select_action(eflat, eval_rng);
      const auto macro = sim::decode_action(sample.action, es, etask);
      auto res = sim::step_macro(es, macro, etask);
      ++steps;
      if (res) {
        es = res->next;
        eflat = sim::flatten_state(es, etask.links_enabled);
        if (sim::is_goal(es, etask)) {
          solved = true;
          break;
        }
      }
    }
    out.eval_success.push_back(solved);
    out.eval_steps.push_back(steps);
    if (solved) ++successes;
  }
  out.goal_reaching = 3 * successes >= 2 * cfg.eval_trials;
  out.wall_ms = now_ms() - start;
  return out;
}

}  // namespace csp::baselines
