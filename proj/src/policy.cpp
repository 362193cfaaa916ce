#include "csp/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "csp/util.hpp"

namespace csp::policy {

namespace {

constexpr double kPolicyLr = 7e-4;
constexpr double kLogStdMin = -5.0, kLogStdMax = 2.0;
constexpr double kLog2Pi = 1.8378770664093453;

}  // namespace

void RolloutBuffer::clear() {
  states.clear();
  actions.clear();
  logps.clear();
  rewards.clear();
  values.clear();
  next_values.clear();
}

void RolloutBuffer::add(std::vector<double> state, std::vector<double> action, double logp,
                        double reward, double value, double next_value) {
  states.push_back(std::move(state));
  actions.push_back(std::move(action));
  logps.push_back(logp);
  rewards.push_back(reward);
  values.push_back(value);
  next_values.push_back(next_value);
}

PolicyPair::PolicyPair(int state_dim, int action_dim, uint64_t seed)
    : actor_(nn::Network::mlp(state_dim, {64, 64}, action_dim, nn::Activation::Tanh,
                              hash_combine(seed, 1))),
      critic_(nn::Network::mlp(state_dim, {64, 64}, 1, nn::Activation::Tanh,
                               hash_combine(seed, 2))),
      log_std_(action_dim, 0.0),
      opt_actor_(actor_.param_count() + action_dim, kPolicyLr),
      opt_critic_(critic_.param_count(), kPolicyLr) {}

std::vector<double> PolicyPair::mean_of(std::span<const double> state) const {
  if (static_cast<int>(state.size()) != actor_.input_dim())
    throw std::invalid_argument("select_action: state has " + std::to_string(state.size()) +
                                " entries, actor expects " +
                                std::to_string(actor_.input_dim()));
  return actor_.forward(state);
}

PolicyPair::Sample PolicyPair::select_action(std::span<const double> state,
                                             std::mt19937_64& rng) const {
  auto mean = mean_of(state);
  Sample s;
  s.action.resize(mean.size());
  double logp = 0.0;
  std::normal_distribution<double> unit(0.0, 1.0);
  for (size_t i = 0; i < mean.size(); ++i) {
    const double ls = std::clamp(log_std_[i], kLogStdMin, kLogStdMax);
    const double sigma = std::exp(ls);
    const double a = deterministic_ ? mean[i] : mean[i] + sigma * unit(rng);
    s.action[i] = a;
    const double z = (a - mean[i]) / sigma;
    logp += -0.5 * z * z - ls - 0.5 * kLog2Pi;
  }
  s.logp = logp;
  return s;
}

double PolicyPair::log_prob(std::span<const double> state,
                            std::span<const double> action) const {
  const auto mean = mean_of(state);
  double logp = 0.0;
  for (size_t i = 0; i < mean.size(); ++i) {
    const double ls = std::clamp(log_std_[i], kLogStdMin, kLogStdMax);
    const double sigma = std::exp(ls);
    const double z = (action[i] - mean[i]) / sigma;
    logp += -0.5 * z * z - ls - 0.5 * kLog2Pi;
  }
  return logp;
}

double PolicyPair::value(std::span<const double> state) const {
  return critic_.forward(state)[0];
}

PolicyPair::Diagnostics PolicyPair::ppo_update(RolloutBuffer& buffer, uint64_t seed) {
  if (!buffer.full())
    throw std::invalid_argument("ppo_update: buffer not full (" +
                                std::to_string(buffer.size()) + "/" +
                                std::to_string(buffer.capacity) + ")");

  const size_t n = buffer.size();
  const int adim = actor_.output_dim();

  Diagnostics diag;
  std::vector<size_t> idx;
  std::vector<double> targets(n), advantages(n);
  for (size_t i = 0; i < n; ++i) {
    targets[i] = buffer.rewards[i] + gamma_ * buffer.next_values[i];
    advantages[i] = targets[i] - buffer.values[i];
    if (std::isfinite(advantages[i]) && std::isfinite(buffer.logps[i])) {
      idx.push_back(i);
    } else {
      ++diag.dropped;
    }
  }

  std::mt19937_64 rng(mix_seed(seed));
  std::vector<double> actor_grad(opt_actor_.m.size());
  std::vector<double> critic_grad(opt_critic_.m.size());
  nn::Network::Tape tape;

  long batches = 0, clip_hits = 0, ratio_count = 0;
  for (int epoch = 0; epoch < epochs_; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (size_t start = 0; start + minibatch_ <= idx.size() || start == 0;
         start += minibatch_) {
      const size_t end = std::min(idx.size(), start + minibatch_);
      if (end <= start) break;
      const double inv_b = 1.0 / static_cast<double>(end - start);

      std::fill(actor_grad.begin(), actor_grad.end(), 0.0);
      std::fill(critic_grad.begin(), critic_grad.end(), 0.0);
      double pol_loss = 0.0, val_loss = 0.0;

      for (size_t s = start; s < end; ++s) {
        const size_t i = idx[s];
        const auto& state = buffer.states[i];
        const auto& action = buffer.actions[i];
        const double adv = advantages[i];

        // Actor: clipped surrogate.
        const auto mean = actor_.forward(state, tape);
        double logp = 0.0;
        std::vector<double> z(adim), sigma(adim);
        for (int j = 0; j < adim; ++j) {
          const double ls = std::clamp(log_std_[j], kLogStdMin, kLogStdMax);
          sigma[j] = std::exp(ls);
          z[j] = (action[j] - mean[j]) / sigma[j];
          logp += -0.5 * z[j] * z[j] - ls - 0.5 * kLog2Pi;
        }
        const double ratio = std::exp(logp - buffer.logps[i]);
        const double clipped = std::clamp(ratio, 1.0 - clip_eps_, 1.0 + clip_eps_);
        pol_loss += -std::min(ratio * adv, clipped * adv);
        ++ratio_count;
        if (std::abs(ratio - 1.0) > clip_eps_) ++clip_hits;

        // d(-min)/dlogp: zero when the clipped branch is active.
        const bool unclipped_active = ratio * adv <= clipped * adv;
        if (unclipped_active && std::isfinite(ratio)) {
          const double dlogp = -ratio * adv * inv_b;
          std::vector<double> dmean(adim);
          for (int j = 0; j < adim; ++j) {
            dmean[j] = dlogp * (z[j] / sigma[j]);
            // d logp / d log_std_j = z^2 - 1 (for unclamped log-std)
            actor_grad[actor_.param_count() + j] += dlogp * (z[j] * z[j] - 1.0);
          }
          actor_.backward(tape, dmean, std::span(actor_grad).first(actor_.param_count()));
        }

        // Critic: 0.5 * value_coef * (V - target)^2 folded into the gradient.
        const auto v = critic_.forward(state, tape);
        const double verr = v[0] - targets[i];
        val_loss += verr * verr;
        const double dv[1] = {value_coef_ * 2.0 * verr * inv_b};
        critic_.backward(tape, dv, critic_grad);
      }

      nn::clip_grad_norm(actor_grad, max_grad_norm_);
      nn::clip_grad_norm(critic_grad, max_grad_norm_);

      // Adam over actor params followed by log_std.
      std::vector<double> actor_params(actor_.params().begin(), actor_.params().end());
      actor_params.insert(actor_params.end(), log_std_.begin(), log_std_.end());
      nn::adam_step(opt_actor_, actor_params, actor_grad);
      std::copy(actor_params.begin(), actor_params.begin() + actor_.param_count(),
                actor_.params().begin());
      for (int j = 0; j < adim; ++j)
        log_std_[j] = std::clamp(actor_params[actor_.param_count() + j], kLogStdMin,
                                 kLogStdMax);

      nn::adam_step(opt_critic_, critic_.params(), critic_grad);

      diag.policy_loss += pol_loss * inv_b;
      diag.value_loss += val_loss * inv_b;
      ++batches;
      if (end >= idx.size()) break;
    }
  }

  if (batches > 0) {
    diag.policy_loss /= batches;
    diag.value_loss /= batches;
  }
  diag.clip_fraction = ratio_count > 0 ? static_cast<double>(clip_hits) / ratio_count : 0.0;
  buffer.clear();
  return diag;
}

uint64_t PolicyPair::params_hash() const {
  uint64_t h = hash_doubles(actor_.params());
  h = hash_doubles(critic_.params(), h);
  return hash_doubles(log_std_, h);
}

nlohmann::json PolicyPair::checkpoint() const {
  return {{"actor", actor_.to_json()},
          {"critic", critic_.to_json()},
          {"log_std", log_std_},
          {"opt_actor", opt_actor_.to_json()},
          {"opt_critic", opt_critic_.to_json()}};
}

PolicyPair PolicyPair::restore(const nlohmann::json& j) {
  nn::Network actor = nn::Network::from_json(j.at("actor"));
  PolicyPair p(actor.input_dim(), actor.output_dim(), 0);
  p.actor_ = std::move(actor);
  p.critic_ = nn::Network::from_json(j.at("critic"));
  p.log_std_ = j.at("log_std").get<std::vector<double>>();
  p.opt_actor_ = nn::AdamState::from_json(j.at("opt_actor"));
  p.opt_critic_ = nn::AdamState::from_json(j.at("opt_critic"));
  return p;
}

std::vector<double> reward_from_novelty(std::span<const double> scores,
                                        std::span<const bool> feasible) {
  if (scores.size() != feasible.size())
    throw std::invalid_argument("reward_from_novelty: array length mismatch");
  std::vector<double> out(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) out[i] = feasible[i] ? scores[i] : 0.0;
  return out;
}

}  // namespace csp::policy
