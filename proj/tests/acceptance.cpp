// Acceptance harness: one criterion per invocation, selected by argv[1] (1-9).
// Prints exactly one "criterion N: PASS/FAIL — detail" line and exits 0/1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "csp/baselines.hpp"
#include "csp/bench.hpp"
#include "csp/curiosity.hpp"
#include "csp/nn.hpp"
#include "csp/planner.hpp"
#include "csp/policy.hpp"
#include "csp/sim.hpp"

namespace {

using namespace csp;

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Criterion 1: replay soundness across a task x algorithm x seed grid.
// ---------------------------------------------------------------------------

Verdict criterion1() {
  const std::vector<std::string> tasks = {"moveany", "stack2"};
  const std::vector<std::string> algos = {"csp", "csp-nocur", "csp-noac"};
  int checked = 0;
  for (const auto& task_name : tasks)
    for (const auto& algo : algos)
      for (uint64_t seed : {1, 2, 3}) {
        const auto task = sim::TaskSpec::by_name(task_name, seed);
        planner::Planner pl(task, bench::config_for(algo, "rnd", seed, 300'000));
        const auto out = pl.run();
        const std::string cell = task_name + "/" + algo + "/seed" + std::to_string(seed);
        if (!out.solution) return {false, cell + " hit the sample cap unsolved"};
        const auto& sol = *out.solution;
        sim::WorldState s = task.initial_state();
        if (!sim::states_equal(s, pl.tree().at(sol.vertex_path[0]).state, 0.0))
          return {false, cell + ": root state differs from the initial state"};
        for (size_t i = 0; i < sol.macros.size(); ++i) {
          const auto r = sim::step_macro(s, sol.macros[i], task);
          if (!r) return {false, cell + ": stored macro " + std::to_string(i) + " infeasible"};
          s = r->next;
          if (!sim::states_equal(s, pl.tree().at(sol.vertex_path[i + 1]).state, 0.0))
            return {false, cell + ": replay diverges at macro " + std::to_string(i)};
        }
        if (!sim::is_goal(s, task)) return {false, cell + ": replayed end state is not a goal"};
        ++checked;
      }
  // The macro-RRT baseline stores macros only; its replay must also end in goal.
  for (const auto& task_name : tasks)
    for (uint64_t seed : {1, 2, 3}) {
      const auto task = sim::TaskSpec::by_name(task_name, seed);
      const auto res = baselines::run_rrt_macro(task, 300'000, seed);
      const std::string cell = task_name + "/rrt/seed" + std::to_string(seed);
      if (!res.solved) return {false, cell + " hit the sample cap unsolved"};
      sim::WorldState s = task.initial_state();
      for (size_t i = 0; i < res.macros.size(); ++i) {
        const auto r = sim::step_macro(s, res.macros[i], task);
        if (!r) return {false, cell + ": stored macro " + std::to_string(i) + " infeasible"};
        s = r->next;
      }
      if (!sim::is_goal(s, task)) return {false, cell + ": replayed end state is not a goal"};
      ++checked;
    }
  return {true, std::to_string(checked) + "/24 solutions replayed exactly and end in goal"};
}

// ---------------------------------------------------------------------------
// Criterion 2: finite-difference gradient agreement per architecture.
// ---------------------------------------------------------------------------

bool fd_check(nn::Network net, int n_coords, int batch, uint64_t seed, std::string& why) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<std::vector<double>> xs(batch), ys(batch);
  for (int b = 0; b < batch; ++b) {
    xs[b].resize(net.input_dim());
    ys[b].resize(net.output_dim());
    for (auto& v : xs[b]) v = unif(rng);
    for (auto& v : ys[b]) v = unif(rng);
  }
  const auto grad = nn::gradient_squared_error(net, xs, ys);
  std::uniform_int_distribution<int> pick(0, net.param_count() - 1);
  const double h = 1e-5;
  for (int c = 0; c < n_coords; ++c) {
    const int i = pick(rng);
    const double saved = net.params()[i];
    net.params()[i] = saved + h;
    const double up = nn::mean_squared_error(net, xs, ys);
    net.params()[i] = saved - h;
    const double dn = nn::mean_squared_error(net, xs, ys);
    net.params()[i] = saved;
    const double fd = (up - dn) / (2.0 * h);
    const double denom = std::max({1e-6, std::abs(fd), std::abs(grad[i])});
    if (std::abs(fd - grad[i]) / denom > 1e-4) {
      std::ostringstream os;
      os << "coord " << i << ": analytic " << grad[i] << " vs fd " << fd;
      why = os.str();
      return false;
    }
  }
  return true;
}

Verdict criterion2() {
  const auto task = sim::TaskSpec::by_name("stack3", 0);
  const int sdim = task.state_dim();
  const int adim = task.action_dim();
  struct Arch {
    std::string name;
    nn::Network net;
  };
  std::vector<nn::LayerDesc> conv;
  conv.push_back(nn::Conv2dLayer{3, 84, 84, 8, 4, 8, nn::Activation::Relu});
  conv.push_back(nn::Conv2dLayer{8, 20, 20, 4, 2, 16, nn::Activation::Relu});
  conv.push_back(nn::Conv2dLayer{16, 9, 9, 3, 1, 16, nn::Activation::Relu});
  conv.push_back(nn::DenseLayer{16 * 7 * 7, 128, nn::Activation::Relu});
  conv.push_back(nn::DenseLayer{128, sdim, nn::Activation::Identity});
  std::vector<Arch> archs;
  archs.push_back({"policy-mlp", nn::Network::mlp(sdim, {64, 64}, adim, nn::Activation::Tanh, 7)});
  archs.push_back({"critic", nn::Network::mlp(sdim, {64, 64}, 1, nn::Activation::Tanh, 8)});
  archs.push_back(
      {"fd-dynamics", nn::Network::mlp(sdim + adim, {64, 64}, sdim, nn::Activation::Tanh, 9)});
  archs.push_back({"rnd-predictor", nn::Network::mlp(sdim, {64, 64}, sdim, nn::Activation::Tanh,
                                                     10)});
  archs.push_back({"se-conv", nn::Network(conv, 11)});
  for (auto& a : archs) {
    std::string why;
    const int batch = a.name == "se-conv" ? 2 : 4;
    if (!fd_check(a.net, 60, batch, 0x6664ULL + a.net.seed(), why))
      return {false, a.name + " gradient mismatch (" + why + ")"};
  }
  return {true, "60 coords per architecture within 1e-4 relative tolerance (h=1e-5)"};
}

// ---------------------------------------------------------------------------
// Criterion 3: curiosity semantics (trained < held-out, infeasible == 0).
// ---------------------------------------------------------------------------

std::vector<curiosity::Transition> random_walk(const sim::TaskSpec& task, uint64_t seed,
                                               size_t need, bool with_images) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-2.5, 2.5);
  std::vector<curiosity::Transition> out;
  sim::WorldState s = task.initial_state();
  int stuck = 0;
  while (out.size() < need) {
    std::vector<double> raw(task.action_dim());
    for (auto& v : raw) v = unif(rng);
    const auto macro = sim::decode_action(raw, s, task);
    const auto r = sim::step_macro(s, macro, task);
    if (!r) {
      if (++stuck > 200) {
        s = task.initial_state();
        stuck = 0;
      }
      continue;
    }
    stuck = 0;
    curiosity::Transition t;
    t.state = sim::flatten_state(s, task.links_enabled);
    t.action = raw;
    t.next_state = sim::flatten_state(r->next, task.links_enabled);
    if (with_images) t.image = sim::render(s, task);
    t.feasible = true;
    out.push_back(std::move(t));
    s = r->next;
  }
  return out;
}

Verdict criterion3() {
  std::ostringstream note;
  for (auto metric : {curiosity::Metric::SE, curiosity::Metric::FD, curiosity::Metric::RND}) {
    const bool img = metric == curiosity::Metric::SE;
    const size_t half = img ? 24 : 60;
    int wins = 0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      const auto task = sim::TaskSpec::by_name("stack2", seed);
      auto mod = curiosity::CuriosityModule::make(metric, task, seed);
      mod.set_step_budget(img ? 500 : 200);
      mod.set_threshold(1e-4);
      // The default learning rate is tuned for incremental planner updates; a
      // one-shot fit of a small batch needs a larger step size.
      mod.set_lr(1e-3);
      const auto train = random_walk(task, 0x77616c6bULL + seed, half, img);
      // Unvisited batch: an independent walk over a different block placement.
      const auto held_task = sim::TaskSpec::by_name("stack2", seed + 50);
      const auto held = random_walk(held_task, 0x68656c64ULL + seed, half, img);
      mod.train(train, 0x7472ULL + seed);
      const double m_train = bench::mean(mod.novelty(train));
      const double m_held = bench::mean(mod.novelty(held));
      if (m_train < m_held) ++wins;
      // Infeasible transitions score exactly zero even after training.
      curiosity::Transition bad = train.front();
      bad.feasible = false;
      bad.next_state = bad.state;
      const double z = mod.novelty(std::vector<curiosity::Transition>{bad})[0];
      if (z != 0.0)
        return {false, curiosity::metric_name(metric) + ": infeasible transition scored " +
                           std::to_string(z)};
    }
    note << curiosity::metric_name(metric) << " " << wins << "/5 ";
    if (wins < 4)
      return {false, curiosity::metric_name(metric) + ": trained batch scored below held-out on " +
                         std::to_string(wins) + "/5 seeds (need >= 4)"};
  }
  return {true, "trained < held-out per metric (" + note.str() + "seeds); infeasible score 0"};
}

// ---------------------------------------------------------------------------
// Criterion 4: Fig. 3 ordering on BlockStack-3.
// ---------------------------------------------------------------------------

Verdict criterion4() {
  const double start = now_s();
  std::vector<double> csp_samples, nocur_samples;
  int csp_solved = 0;
  for (uint64_t seed = 1; seed <= 6; ++seed) {
    const auto r = bench::run_one("stack3", "csp", "rnd", seed, 1'000'000);
    csp_samples.push_back(static_cast<double>(r.samples));
    if (!r.capped) ++csp_solved;
  }
  for (uint64_t seed = 1; seed <= 6; ++seed) {
    const auto r = bench::run_one("stack3", "csp-nocur", "-", seed, 1'000'000);
    nocur_samples.push_back(static_cast<double>(r.samples));
  }
  const double med_csp = bench::median(csp_samples);
  const double med_nocur = bench::median(nocur_samples);
  const double mins = (now_s() - start) / 60.0;
  std::ostringstream os;
  os << "csp-rnd median " << med_csp << " vs no-curiosity median " << med_nocur << "; csp solved "
     << csp_solved << "/6; " << mins << " min total";
  const bool pass = csp_solved == 6 && med_csp < med_nocur && med_csp < 1'000'000.0 &&
                    med_nocur < 1'000'000.0 && mins < 30.0;
  return {pass, os.str()};
}

// ---------------------------------------------------------------------------
// Criterion 5: vanilla PPO fails sparse Stack-3, solves the dense 2-Stack.
// ---------------------------------------------------------------------------

Verdict criterion5() {
  baselines::DrlConfig cfg;
  cfg.train_steps = 500'000;
  cfg.alpha = 1.0;
  cfg.train_rnd = false;
  int stack3_failures = 0, stack2_successes = 0;
  for (uint64_t seed = 1; seed <= 6; ++seed) {
    cfg.seed = seed;
    const auto r = baselines::run_ppo(sim::TaskSpec::by_name("stack3", seed), cfg);
    if (!r.goal_reaching) ++stack3_failures;
  }
  for (uint64_t seed = 1; seed <= 6; ++seed) {
    cfg.seed = seed;
    const auto r = baselines::run_ppo(sim::TaskSpec::by_name("stack2", seed), cfg);
    if (r.goal_reaching) ++stack2_successes;
  }
  std::ostringstream os;
  os << "stack3 failures " << stack3_failures << "/6 (need >= 5); stack2 successes "
     << stack2_successes << "/6 (need >= 4)";
  return {stack3_failures >= 5 && stack2_successes >= 4, os.str()};
}

// ---------------------------------------------------------------------------
// Criterion 6: transfer direction Stack-5 -> PushAway.
// ---------------------------------------------------------------------------

Verdict criterion6() {
  const auto rows = bench::run_transfer("stack5", "pushaway", "rnd", {1, 2, 3, 4, 5, 6},
                                        1'000'000, {"none", "curiosity", "action"});
  std::vector<double> none, cur, act;
  for (const auto& r : rows) {
    const double v = static_cast<double>(r.target_samples);
    if (r.condition == "none") none.push_back(v);
    else if (r.condition == "curiosity") cur.push_back(v);
    else act.push_back(v);
  }
  const double m_none = bench::median(none);
  const double m_cur = bench::median(cur);
  const double m_act = bench::median(act);
  std::ostringstream os;
  os << "target-sample medians: no-transfer " << m_none << ", curiosity-only " << m_cur
     << ", action-transfer " << m_act;
  const bool pass = m_act < m_none && std::abs(m_none - m_cur) < (m_none - m_act);
  return {pass, os.str()};
}

// ---------------------------------------------------------------------------
// Criterion 7: algorithmic invariants.
// ---------------------------------------------------------------------------

Verdict criterion7() {
  std::mt19937_64 rng(0x696e76ULL);
  std::uniform_real_distribution<double> unif(0.0, 10.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 400);
    std::vector<double> scores(n);
    for (auto& s : scores) s = unif(rng);
    const auto p = planner::score_softmax(scores);
    double sum = 0.0;
    for (double v : p) sum += v;
    if (std::abs(sum - 1.0) > 1e-9)
      return {false, "softmax normalization error " + std::to_string(std::abs(sum - 1.0))};
  }
  {
    const std::vector<double> uniform_scores(7, 3.25);
    const auto p = planner::score_softmax(uniform_scores);
    for (double v : p)
      if (v != 1.0 / 7.0) return {false, "uniform-score degeneracy is not exactly uniform"};
    const std::vector<double> zeros(5, 0.0);
    for (double v : planner::score_softmax(zeros))
      if (v != 0.2) return {false, "all-zero scores are not exactly uniform"};
  }

  // Prune quota with root/goal protection, checked across live planner state.
  {
    const auto task = sim::TaskSpec::by_name("stack2", 1);
    planner::Planner pl(task, bench::config_for("csp", "rnd", 1, 1'000'000));
    for (int iter = 0; iter < 5 && pl.goal_vertex() < 0; ++iter) {
      pl.expand_batch();
      pl.reweight();
      pl.prune();
      const int n = pl.tree().size();
      const int keep = static_cast<int>(std::ceil(0.10 * n));
      const auto samplable = pl.tree().samplable();
      int protected_extra = 0;
      for (int v : samplable)
        if (v == 0 || v == pl.goal_vertex()) ++protected_extra;
      const int count = static_cast<int>(samplable.size());
      if (count < keep || count > keep + 2)
        return {false, "prune kept " + std::to_string(count) + " samplable of " +
                           std::to_string(n) + " (quota " + std::to_string(keep) + ")"};
      if (count - keep > protected_extra)
        return {false, "prune kept unprotected vertices beyond the quota"};
      if (pl.tree().at(0).pruned) return {false, "root was pruned"};
      if (std::abs(pl.tree().prob_sum() - 1.0) > 1e-9)
        return {false, "sampling distribution not normalized after prune"};
      for (int v = 0; v < n; ++v)
        if (pl.tree().at(v).pruned && pl.tree().at(v).prob != 0.0)
          return {false, "pruned vertex retains sampling probability"};
    }
  }

  // No-curiosity scores are constant, so P must be exactly uniform.
  {
    const auto task = sim::TaskSpec::by_name("moveany", 2);
    planner::Planner pl(task, baselines::no_curiosity_config(1'000'000, 2));
    pl.expand_batch();
    pl.reweight();
    const auto samplable = pl.tree().samplable();
    const double want = 1.0 / static_cast<double>(samplable.size());
    for (int v : samplable)
      if (pl.tree().at(v).prob != want)
        return {false, "no-curiosity sampling distribution is not exactly uniform"};
  }

  // alpha = 1 makes PPO-RND bit-identical to vanilla PPO under a shared seed.
  {
    baselines::DrlConfig cfg;
    cfg.train_steps = 4096;
    cfg.alpha = 1.0;
    cfg.seed = 3;
    cfg.eval_trials = 2;
    cfg.eval_step_cap = 50;
    const auto task = sim::TaskSpec::by_name("stack2", 3);
    cfg.train_rnd = false;
    const auto vanilla = baselines::run_ppo(task, cfg);
    cfg.train_rnd = true;
    const auto rnd = baselines::run_ppo(task, cfg);
    if (vanilla.policy_hash != rnd.policy_hash)
      return {false, "alpha=1 PPO-RND policy diverged from vanilla PPO"};
    if (vanilla.reward_trace != rnd.reward_trace || vanilla.eval_steps != rnd.eval_steps)
      return {false, "alpha=1 PPO-RND trajectory diverged from vanilla PPO"};
  }
  return {true, "softmax/prune/uniform-degeneracy/alpha=1 invariants all hold"};
}

// ---------------------------------------------------------------------------
// Criterion 8: geometric layer (IK round-trip, RRT half-resolution recheck).
// ---------------------------------------------------------------------------

Verdict criterion8() {
  const auto task = sim::TaskSpec::by_name("stack3", 0);
  const auto& arm = task.arm;
  std::mt19937_64 rng(0x67656f6dULL);
  int solved = 0;
  const int total = 400;
  for (int i = 0; i < total; ++i) {
    geom::Joints q;
    for (int j = 0; j < 3; ++j) {
      std::uniform_real_distribution<double> u(arm.bounds[j].first, arm.bounds[j].second);
      q[j] = u(rng);
    }
    const geom::Pose target = geom::forward_kinematics(arm, q);
    const auto sol = geom::ik_solve(arm, target, false, 0x696bULL + i);
    if (!sol) continue;
    const geom::Pose reached = geom::forward_kinematics(arm, *sol);
    const double err = std::hypot(reached.x - target.x, reached.y - target.y);
    if (err > 1e-4)
      return {false, "IK returned a wrong answer: position error " + std::to_string(err)};
    ++solved;
  }
  if (solved < static_cast<int>(0.95 * total))
    return {false, "IK solved only " + std::to_string(solved) + "/" + std::to_string(total)};

  // RRT paths: random scenes, every edge rechecked at half resolution.
  int paths = 0;
  std::uniform_real_distribution<double> ox(-0.6, 0.6), oy(0.3, 0.9), osz(0.04, 0.12);
  for (int scene = 0; scene < 40; ++scene) {
    std::vector<geom::Box> obstacles{{ox(rng), oy(rng), osz(rng), osz(rng), 0.0}};
    auto sample_free = [&](geom::Joints& q) {
      for (int tries = 0; tries < 200; ++tries) {
        for (int j = 0; j < 3; ++j) {
          std::uniform_real_distribution<double> u(arm.bounds[j].first, arm.bounds[j].second);
          q[j] = u(rng);
        }
        if (!geom::collision_check(arm, q, obstacles)) return true;
      }
      return false;
    };
    geom::Joints qs, qg;
    if (!sample_free(qs) || !sample_free(qg)) continue;
    const auto path = geom::rrt_connect(arm, qs, qg, obstacles, std::nullopt, 0x727274ULL + scene);
    if (!path) continue;
    for (size_t i = 0; i + 1 < path->waypoints.size(); ++i)
      if (!geom::edge_collision_free(arm, path->waypoints[i], path->waypoints[i + 1], obstacles,
                                     std::nullopt, 0.005))
        return {false, "RRT path failed the half-resolution collision recheck"};
    ++paths;
  }
  if (paths < 20) return {false, "too few RRT paths produced (" + std::to_string(paths) + ")"};
  std::ostringstream os;
  os << "IK " << solved << "/" << total << " solved, zero wrong answers; " << paths
     << " RRT paths pass half-resolution recheck";
  return {true, os.str()};
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical reruns (wall-clock column excluded).
// ---------------------------------------------------------------------------

Verdict criterion9() {
  auto stripped = [](bench::RunRow r) {
    r.wall_ms = 0.0;
    return bench::to_csv(r);
  };
  int cells = 0;
  for (const std::string& task : {"moveany", "stack2"})
    for (const std::string& algo : {"csp", "csp-nocur", "rrt"})
      for (uint64_t seed : {1, 2}) {
        const auto a = bench::run_one(task, algo, "rnd", seed, 300'000);
        const auto b = bench::run_one(task, algo, "rnd", seed, 300'000);
        if (stripped(a) != stripped(b))
          return {false, task + "/" + algo + "/seed" + std::to_string(seed) +
                             " rerun differs: " + stripped(a) + " vs " + stripped(b)};
        ++cells;
      }
  return {true, std::to_string(cells) + "/12 cells byte-identical on rerun (wall-clock column "
                                        "excluded as the only nondeterministic field)"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: acceptance <criterion 1-9>\n";
    return 2;
  }
  const int crit = std::atoi(argv[1]);
  Verdict v;
  switch (crit) {
    case 1: v = criterion1(); break;
    case 2: v = criterion2(); break;
    case 3: v = criterion3(); break;
    case 4: v = criterion4(); break;
    case 5: v = criterion5(); break;
    case 6: v = criterion6(); break;
    case 7: v = criterion7(); break;
    case 8: v = criterion8(); break;
    case 9: v = criterion9(); break;
    default:
      std::cerr << "usage: acceptance <criterion 1-9>\n";
      return 2;
  }
  std::cout << "criterion " << crit << ": " << (v.pass ? "PASS" : "FAIL") << " — " << v.detail
            << std::endl;
  return v.pass ? 0 : 1;
}
