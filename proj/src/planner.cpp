#include "csp/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "csp/util.hpp"

namespace csp::planner {

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

}  // namespace

double batch_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  if (n == 0) throw std::logic_error("median of empty set");
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> score_softmax(std::span<const double> scores) {
  double temp = 0.0;
  for (double s : scores) temp += std::abs(s);
  temp /= static_cast<double>(scores.size());
  if (!(temp > 1e-300)) temp = 1.0;  // all-zero scores: uniform

  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  std::vector<double> e(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    e[i] = std::exp((scores[i] - mx) / temp);
    z += e[i];
  }
  for (double& v : e) v /= z;
  return e;
}

std::vector<int> SearchTree::samplable() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (!verts_[i].pruned) out.push_back(i);
  return out;
}

double SearchTree::prob_sum() const {
  double s = 0.0;
  for (const auto& v : verts_) s += v.prob;
  return s;
}

Planner::Planner(const sim::TaskSpec& task, const PlannerConfig& cfg)
    : task_(task), cfg_(cfg), tree_(Vertex{}), rng_(mix_seed(cfg.seed, 0x706c616eULL)) {
  Vertex root;
  root.state = task_.initial_state();
  root.flat = sim::flatten_state(root.state, task_.links_enabled);
  root.in_action.assign(task_.action_dim(), 0.0);
  root.prob = 1.0;
  tree_ = SearchTree(std::move(root));
  // Always constructed so checkpoints and hashes are available; only trained
  // and queried for proposals when use_actor_critic is set.
  policy_ = std::make_unique<policy::PolicyPair>(task_.state_dim(), task_.action_dim(),
                                                 mix_seed(cfg.seed, 0x6163ULL));
  if (cfg_.use_curiosity)
    curiosity_ = std::make_unique<curiosity::CuriosityModule>(
        curiosity::CuriosityModule::make(cfg_.metric, task_, mix_seed(cfg.seed, 0x776dULL)));
}

void Planner::load_policy_checkpoint(const nlohmann::json& j) {
  policy_ = std::make_unique<policy::PolicyPair>(policy::PolicyPair::restore(j));
  if (policy_->state_dim() != task_.state_dim() || policy_->action_dim() != task_.action_dim())
    throw std::invalid_argument("policy checkpoint dimensions do not match task");
}

void Planner::load_curiosity_checkpoint(const nlohmann::json& j) {
  curiosity_ = std::make_unique<curiosity::CuriosityModule>(curiosity::CuriosityModule::restore(j));
}

int Planner::sample_vertex() {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng_) * tree_.prob_sum();
  double acc = 0.0;
  int last = -1;
  for (int i = 0; i < tree_.size(); ++i) {
    const auto& v = tree_.at(i);
    if (v.pruned || v.prob <= 0.0) continue;
    acc += v.prob;
    last = i;
    if (u <= acc) return i;
  }
  if (last < 0) throw std::logic_error("no samplable vertices");
  return last;
}

std::vector<double> Planner::random_raw_action() {
  // Logit slots ~ N(0,1) (argmax uniform over candidates); continuous slots
  // atanh(U(-1,1)) so the tanh squash lands uniformly in the workspace box.
  const int k = task_.k();
  std::vector<double> raw(task_.action_dim());
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-0.999999, 0.999999);
  for (int i = 0; i < k * k; ++i) raw[i] = gauss(rng_);
  for (int b = 0; b < k; ++b) {
    const int base = k * k + 4 * b;
    raw[base] = gauss(rng_);
    for (int d = 1; d < 4; ++d) raw[base + d] = std::atanh(unit(rng_));
  }
  raw[task_.action_dim() - 2] = gauss(rng_);
  raw[task_.action_dim() - 1] = gauss(rng_);
  return raw;
}

void Planner::ensure_image(int vertex) {
  Vertex& v = tree_.at(vertex);
  if (v.image.empty()) v.image = sim::render(v.state, task_);
}

std::vector<int> Planner::expand_batch() {
  struct Draw {
    int parent;
    std::vector<double> raw;
    double logp = 0.0;
    sim::MacroAction macro;
    std::optional<sim::StepResult> result;
  };
  std::vector<Draw> draws;
  draws.reserve(cfg_.batch_size);
  std::vector<curiosity::Transition> trans;
  trans.reserve(cfg_.batch_size);

  const bool need_image = cfg_.use_curiosity && cfg_.metric == curiosity::Metric::SE;

  for (int i = 0; i < cfg_.batch_size && samples_ < cfg_.sample_cap; ++i) {
    Draw d;
    d.parent = sample_vertex();
    const Vertex& pv = tree_.at(d.parent);
    const double t0 = cfg_.collect_timing ? now_ms() : 0.0;
    if (cfg_.use_actor_critic) {
      auto s = policy_->select_action(pv.flat, rng_);
      d.raw = std::move(s.action);
      d.logp = s.logp;
    } else {
      d.raw = random_raw_action();
    }
    d.macro = sim::decode_action(d.raw, pv.state, task_);
    if (cfg_.collect_timing) timing_.action_select_ms.push_back(now_ms() - t0);

    const double t1 = cfg_.collect_timing ? now_ms() : 0.0;
    d.result = sim::step_macro(pv.state, d.macro, task_);
    if (cfg_.collect_timing) timing_.motion_plan_ms.push_back(now_ms() - t1);
    ++samples_;

    curiosity::Transition t;
    t.state = pv.flat;
    t.action = d.raw;
    t.feasible = d.result.has_value();
    t.next_state = t.feasible ? sim::flatten_state(d.result->next, task_.links_enabled) : pv.flat;
    if (need_image) {
      ensure_image(d.parent);
      t.image = tree_.at(d.parent).image;
    }
    trans.push_back(std::move(t));
    draws.push_back(std::move(d));
  }
  if (draws.empty()) return {};

  // Score with H before training: insertion uses pre-update novelty.
  std::vector<double> scores(draws.size(), 1.0);
  if (cfg_.use_curiosity) scores = curiosity_->novelty(trans);

  std::vector<double> feasible_scores;
  for (size_t i = 0; i < draws.size(); ++i)
    if (draws[i].result) feasible_scores.push_back(scores[i]);

  // Train the world model on this batch's feasible transitions.
  if (cfg_.use_curiosity && !feasible_scores.empty()) {
    std::vector<curiosity::Transition> feas;
    for (size_t i = 0; i < trans.size(); ++i)
      if (trans[i].feasible) feas.push_back(trans[i]);
    const double t0 = cfg_.collect_timing ? now_ms() : 0.0;
    curiosity_->train(feas, mix_seed(cfg_.seed, 0x7472ULL + iteration_));
    if (cfg_.collect_timing) timing_.wm_update_ms.push_back(now_ms() - t0);
  }

  // Actor-critic rollout storage; reward is the (pre-training) novelty score.
  if (cfg_.use_actor_critic) {
    for (size_t i = 0; i < draws.size(); ++i) {
      const Vertex& pv = tree_.at(draws[i].parent);
      const std::vector<double>& nxt = trans[i].next_state;
      buffer_.add(pv.flat, draws[i].raw, draws[i].logp, trans[i].feasible ? scores[i] : 0.0,
                  policy_->value(pv.flat), policy_->value(nxt));
      if (buffer_.full()) {
        const double t0 = cfg_.collect_timing ? now_ms() : 0.0;
        policy_->ppo_update(buffer_, mix_seed(cfg_.seed, 0x61635fULL + iteration_ + i));
        if (cfg_.collect_timing) timing_.ac_update_ms.push_back(now_ms() - t0);
      }
    }
  }

  // Insert feasible transitions whose score reaches the feasible-batch median.
  std::vector<int> inserted;
  if (!feasible_scores.empty()) {
    const double med = batch_median(feasible_scores);
    for (size_t i = 0; i < draws.size(); ++i) {
      if (!draws[i].result || scores[i] < med) continue;
      Vertex v;
      v.state = draws[i].result->next;
      v.flat = trans[i].next_state;
      v.parent = draws[i].parent;
      v.macro = draws[i].macro;
      v.prims = draws[i].result->primitives;
      v.in_action = draws[i].raw;
      v.score = scores[i];
      v.depth = tree_.at(draws[i].parent).depth + 1;
      const int id = tree_.add(std::move(v));
      inserted.push_back(id);
      if (goal_vertex_ < 0 && sim::is_goal(tree_.at(id).state, task_)) goal_vertex_ = id;
    }
  }
  ++iteration_;
  return inserted;
}

void Planner::reweight() {
  auto idx = tree_.samplable();
  std::vector<curiosity::VertexView> views(idx.size());
  const bool need_image = cfg_.use_curiosity && cfg_.metric == curiosity::Metric::SE;
  for (size_t i = 0; i < idx.size(); ++i) {
    Vertex& v = tree_.at(idx[i]);
    if (need_image) ensure_image(idx[i]);
    views[i].state = &v.flat;
    views[i].image = &v.image;
    views[i].in_state = v.parent >= 0 ? &tree_.at(v.parent).flat : &v.flat;
    views[i].in_action = &v.in_action;
  }
  std::vector<double> scores(idx.size(), 1.0);
  if (cfg_.use_curiosity) scores = curiosity_->score_vertices(views);

  const auto probs = score_softmax(scores);
  for (int i = 0; i < tree_.size(); ++i) tree_.at(i).prob = 0.0;
  for (size_t i = 0; i < idx.size(); ++i) {
    tree_.at(idx[i]).score = scores[i];
    tree_.at(idx[i]).prob = probs[i];
  }
}

void Planner::prune() {
  auto idx = tree_.samplable();
  const int keep = static_cast<int>(
      std::ceil(cfg_.keep_fraction * static_cast<double>(tree_.size())));
  if (static_cast<int>(idx.size()) <= keep) return;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return tree_.at(a).prob > tree_.at(b).prob; });
  for (size_t i = keep; i < idx.size(); ++i) {
    const int id = idx[i];
    if (id == 0 || id == goal_vertex_) continue;  // root/goal stay samplable
    tree_.at(id).pruned = true;
    tree_.at(id).prob = 0.0;
  }
  // Renormalize over what remains samplable.
  double z = tree_.prob_sum();
  if (!(z > 0.0)) {
    auto rest = tree_.samplable();
    for (int id : rest) tree_.at(id).prob = 1.0 / static_cast<double>(rest.size());
  } else {
    for (int i = 0; i < tree_.size(); ++i)
      if (!tree_.at(i).pruned) tree_.at(i).prob /= z;
  }
}

std::vector<int> Planner::extract_vertex_path(int goal_vertex) const {
  std::vector<int> path;
  for (int v = goal_vertex; v >= 0; v = tree_.at(v).parent) path.push_back(v);
  std::reverse(path.begin(), path.end());
  if (path.front() != 0) throw std::logic_error("path does not reach the root");
  return path;
}

std::vector<sim::MacroAction> Planner::extract_path(int goal_vertex) const {
  auto path = extract_vertex_path(goal_vertex);
  std::vector<sim::MacroAction> macros;
  for (size_t i = 1; i < path.size(); ++i) macros.push_back(tree_.at(path[i]).macro);
  return macros;
}

void Planner::validate_edge(int vertex) const {
  const Vertex& v = tree_.at(vertex);
  if (v.parent < 0) return;
  auto res = sim::step_macro(tree_.at(v.parent).state, v.macro, task_);
  if (!res) throw std::runtime_error("replay fault: stored edge is infeasible on replay");
  if (!sim::states_equal(res->next, v.state, 0.0))
    throw std::runtime_error("replay fault: replayed state differs from stored state");
}

void Planner::validate_path(int goal_vertex) const {
  for (int v : extract_vertex_path(goal_vertex)) validate_edge(v);
}

PlanOutcome Planner::run() {
  if (sim::is_goal(tree_.at(0).state, task_))
    throw std::invalid_argument("initial state already satisfies the goal");
  const double start = now_ms();
  std::uniform_int_distribution<int> permille(0, 999);
  while (samples_ < cfg_.sample_cap && goal_vertex_ < 0) {
    auto inserted = expand_batch();
    if (goal_vertex_ < 0) {
      reweight();
      prune();
      // Spot-check a fraction of the freshly inserted edges by replay.
      for (int id : inserted)
        if (permille(rng_) < cfg_.replay_check_permille) validate_edge(id);
    }
  }
  PlanOutcome out;
  out.samples = samples_;
  out.wall_ms = now_ms() - start;
  if (goal_vertex_ >= 0) {
    validate_path(goal_vertex_);
    Solution sol;
    sol.vertex_path = extract_vertex_path(goal_vertex_);
    sol.macros = extract_path(goal_vertex_);
    sol.samples = samples_;
    sol.wall_ms = out.wall_ms;
    sol.depth = static_cast<int>(sol.macros.size());
    out.solution = std::move(sol);
  }
  return out;
}

nlohmann::json Planner::tree_to_json() const {
  nlohmann::json verts = nlohmann::json::array();
  for (int i = 0; i < tree_.size(); ++i) {
    const Vertex& v = tree_.at(i);
    nlohmann::json jv;
    jv["id"] = i;
    jv["parent"] = v.parent;
    jv["state"] = sim::state_to_json(v.state);
    if (v.parent >= 0) jv["macro"] = sim::macro_to_json(v.macro);
    jv["score"] = v.score;
    jv["prob"] = v.prob;
    jv["pruned"] = v.pruned;
    jv["depth"] = v.depth;
    verts.push_back(std::move(jv));
  }
  nlohmann::json j;
  j["task"] = task_.to_json();
  j["vertices"] = std::move(verts);
  j["samples"] = samples_;
  j["goal_vertex"] = goal_vertex_;
  return j;
}

void replay_validate_tree_json(const nlohmann::json& j, const sim::TaskSpec& task) {
  std::vector<sim::WorldState> states;
  for (const auto& jv : j.at("vertices")) {
    sim::WorldState s = sim::state_from_json(jv.at("state"));
    const int parent = jv.at("parent").get<int>();
    if (parent >= 0) {
      sim::MacroAction m = sim::macro_from_json(jv.at("macro"));
      auto res = sim::step_macro(states.at(parent), m, task);
      if (!res) throw std::runtime_error("replay fault: exported edge infeasible");
      if (!sim::states_equal(res->next, s, 0.0))
        throw std::runtime_error("replay fault: exported state differs on replay");
    }
    states.push_back(std::move(s));
  }
}

}  // namespace csp::planner
