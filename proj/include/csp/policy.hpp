#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "csp/nn.hpp"

namespace csp::policy {

struct RolloutBuffer {
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> actions;
  std::vector<double> logps;
  std::vector<double> rewards;
  std::vector<double> values;       // V(s) at collection time
  std::vector<double> next_values;  // V(s') at collection time
  size_t capacity = 1024;

  size_t size() const { return states.size(); }
  bool full() const { return size() >= capacity; }
  void clear();
  void add(std::vector<double> state, std::vector<double> action, double logp,
           double reward, double value, double next_value);
};

// Diagonal-Gaussian actor with a learned state-independent log-std, plus a
// scalar critic. Both are 3-layer, 64-unit tanh MLPs trained with PPO.
class PolicyPair {
 public:
  PolicyPair(int state_dim, int action_dim, uint64_t seed);

  int state_dim() const { return actor_.input_dim(); }
  int action_dim() const { return actor_.output_dim(); }

  struct Sample {
    std::vector<double> action;
    double logp;
  };
  Sample select_action(std::span<const double> state, std::mt19937_64& rng) const;
  double value(std::span<const double> state) const;
  double log_prob(std::span<const double> state, std::span<const double> action) const;

  // In deterministic-evaluation mode select_action returns the mean exactly.
  void set_deterministic(bool d) { deterministic_ = d; }
  bool deterministic() const { return deterministic_; }

  struct Diagnostics {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double clip_fraction = 0.0;
    long dropped = 0;  // transitions with non-finite advantages
  };
  // 4 epochs of 128-sized minibatches on the clipped surrogate; clears buffer.
  Diagnostics ppo_update(RolloutBuffer& buffer, uint64_t seed);

  double gamma() const { return gamma_; }

  uint64_t params_hash() const;
  nlohmann::json checkpoint() const;
  static PolicyPair restore(const nlohmann::json& j);

 private:
  nn::Network actor_, critic_;
  std::vector<double> log_std_;
  nn::AdamState opt_actor_;  // covers actor params followed by log_std
  nn::AdamState opt_critic_;
  bool deterministic_ = false;

  double gamma_ = 0.9;
  double clip_eps_ = 0.2;
  int epochs_ = 4;
  int minibatch_ = 128;
  double value_coef_ = 0.5;
  double max_grad_norm_ = 0.5;

  std::vector<double> mean_of(std::span<const double> state) const;
};

// Reward = novelty score; infeasible transitions get exactly 0.
std::vector<double> reward_from_novelty(std::span<const double> scores,
                                        std::span<const bool> feasible);

}  // namespace csp::policy
