#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csp/nn.hpp"
#include "csp/sim.hpp"

namespace csp::curiosity {

enum class Metric { SE, FD, RND };

Metric metric_from_name(const std::string& name);
std::string metric_name(Metric m);

struct Transition {
  std::vector<double> state;       // flattened s
  std::vector<double> action;      // raw action vector
  std::vector<double> next_state;  // flattened f(s, a); equals state when infeasible
  std::vector<double> image;       // rendered s, SE only
  bool feasible = true;
};

// One vertex as seen by score_vertices. in_state/in_action describe the
// incoming transition (FD); the root passes its own state with a zero action.
struct VertexView {
  const std::vector<double>* state = nullptr;
  const std::vector<double>* image = nullptr;
  const std::vector<double>* in_state = nullptr;
  const std::vector<double>* in_action = nullptr;
};

// Trainable novelty network H plus its loss rule. Scores are squared-error
// losses, always >= 0; infeasible transitions score exactly 0.
class CuriosityModule {
 public:
  static CuriosityModule make(Metric metric, const sim::TaskSpec& task, uint64_t seed);

  Metric metric() const { return kind_; }
  const nn::Network& net() const { return net_; }

  std::vector<double> novelty(std::span<const Transition> batch) const;

  // Adam steps on minibatches of 128 drawn from the feasible transitions,
  // repeated until the mean loss drops below the threshold or the step budget
  // runs out. Returns the final mean loss; no-op on an empty batch.
  double train(std::span<const Transition> batch, uint64_t seed);
  double last_loss() const { return last_loss_; }

  std::vector<double> score_vertices(std::span<const VertexView> vertices) const;

  // The fixed RND target: permutation of the standardized state vector.
  std::vector<double> apply_target_map(std::span<const double> state) const;

  double threshold() const { return threshold_; }
  void set_threshold(double t) { threshold_ = t; }
  void set_step_budget(int b) { budget_ = b; }
  void set_lr(double lr);

  uint64_t params_hash() const;
  nlohmann::json checkpoint() const;
  static CuriosityModule restore(const nlohmann::json& j);

 private:
  CuriosityModule(Metric kind, nn::Network net, std::vector<int> perm,
                  std::vector<double> scale, double lr);

  std::vector<double> input_for(const Transition& t) const;
  std::vector<double> target_for(const Transition& t) const;
  std::vector<double> standardized(std::span<const double> state) const;

  Metric kind_;
  nn::Network net_;
  nn::AdamState opt_;
  std::vector<int> perm_;       // RND only
  std::vector<double> scale_;   // per-coordinate standardization
  double threshold_ = 1e-2;
  int budget_ = 50;
  double last_loss_ = 0.0;
};

}  // namespace csp::curiosity
