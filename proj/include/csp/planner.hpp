#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "csp/curiosity.hpp"
#include "csp/policy.hpp"
#include "csp/sim.hpp"

namespace csp::planner {

struct PlannerConfig {
  int batch_size = 128;
  double keep_fraction = 0.10;
  long sample_cap = 1'000'000;
  curiosity::Metric metric = curiosity::Metric::RND;
  bool use_curiosity = true;     // false: uniform vertex scores, no training
  bool use_actor_critic = true;  // false: uniform random macro proposals
  uint64_t seed = 0;
  int replay_check_permille = 10;  // per-iteration edge spot-check rate
  bool collect_timing = false;
};

struct Vertex {
  sim::WorldState state;
  std::vector<double> flat;
  std::vector<double> image;      // rendered lazily (SE metric only)
  int parent = -1;
  sim::MacroAction macro;         // incoming edge
  std::vector<sim::PrimitiveStep> prims;
  std::vector<double> in_action;  // raw action of the incoming edge
  double score = 0.0;
  double prob = 0.0;
  bool pruned = false;
  int depth = 0;
};

class SearchTree {
 public:
  explicit SearchTree(Vertex root) { verts_.push_back(std::move(root)); }

  int size() const { return static_cast<int>(verts_.size()); }
  Vertex& at(int i) { return verts_[i]; }
  const Vertex& at(int i) const { return verts_[i]; }
  int add(Vertex v) {
    verts_.push_back(std::move(v));
    return size() - 1;
  }
  std::vector<int> samplable() const;
  double prob_sum() const;

 private:
  std::vector<Vertex> verts_;
};

struct Solution {
  std::vector<int> vertex_path;  // root..goal
  std::vector<sim::MacroAction> macros;
  long samples = 0;
  double wall_ms = 0.0;
  int depth = 0;
};

struct TimingStats {
  std::vector<double> wm_update_ms;
  std::vector<double> ac_update_ms;
  std::vector<double> action_select_ms;
  std::vector<double> motion_plan_ms;
};

struct PlanOutcome {
  std::optional<Solution> solution;  // empty: Exhausted
  long samples = 0;
  double wall_ms = 0.0;
};

// Curiosity-weighted macro-action tree search (batch expansion, softmax vertex
// sampling, bottom-90% pruning, online curiosity + PPO training).
class Planner {
 public:
  Planner(const sim::TaskSpec& task, const PlannerConfig& cfg);

  void load_policy_checkpoint(const nlohmann::json& j);
  void load_curiosity_checkpoint(const nlohmann::json& j);

  PlanOutcome run();

  // Exposed phases; run() composes them.
  std::vector<int> expand_batch();
  void reweight();
  void prune();
  std::vector<sim::MacroAction> extract_path(int goal_vertex) const;
  std::vector<int> extract_vertex_path(int goal_vertex) const;

  // Replays the edge into `vertex` and checks the stored state bit-exactly.
  void validate_edge(int vertex) const;
  void validate_path(int goal_vertex) const;

  const SearchTree& tree() const { return tree_; }
  const sim::TaskSpec& task() const { return task_; }
  long samples() const { return samples_; }
  int goal_vertex() const { return goal_vertex_; }

  const policy::PolicyPair& policy() const { return *policy_; }
  const curiosity::CuriosityModule* curiosity_module() const { return curiosity_.get(); }
  const TimingStats& timing() const { return timing_; }

  nlohmann::json tree_to_json() const;

 private:
  int sample_vertex();
  std::vector<double> random_raw_action();
  void ensure_image(int vertex);

  sim::TaskSpec task_;
  PlannerConfig cfg_;
  SearchTree tree_;
  std::unique_ptr<policy::PolicyPair> policy_;
  std::unique_ptr<curiosity::CuriosityModule> curiosity_;
  policy::RolloutBuffer buffer_;
  std::mt19937_64 rng_;
  long samples_ = 0;
  long iteration_ = 0;
  int goal_vertex_ = -1;
  TimingStats timing_;
};

// Replays an exported tree JSON; throws on any replay mismatch.
void replay_validate_tree_json(const nlohmann::json& j, const sim::TaskSpec& task);

// Median with the even-count convention used for batch insertion: the mean of
// the two middle elements.
double batch_median(std::vector<double> v);

// Softmax over scores at temperature mean(|score|); degenerate all-zero
// scores fall back to the uniform distribution.
std::vector<double> score_softmax(std::span<const double> scores);

}  // namespace csp::planner
