#include "csp/curiosity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "csp/util.hpp"

namespace csp::curiosity {

namespace {

constexpr double kCuriosityLr = 5e-5;
constexpr int kMinibatch = 128;

std::vector<double> workspace_scale(const sim::TaskSpec& task) {
  const double pos = 1.0 / task.reach_radius();
  std::vector<double> scale;
  scale.reserve(task.state_dim());
  for (int i = 0; i < task.k(); ++i) {
    scale.push_back(pos);
    scale.push_back(pos);
    scale.push_back(1.0 / M_PI);
  }
  while (static_cast<int>(scale.size()) < task.state_dim()) scale.push_back(1.0);
  return scale;
}

}  // namespace

Metric metric_from_name(const std::string& name) {
  if (name == "se") return Metric::SE;
  if (name == "fd") return Metric::FD;
  if (name == "rnd") return Metric::RND;
  throw std::invalid_argument("unknown curiosity metric: " + name);
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::SE: return "se";
    case Metric::FD: return "fd";
    default: return "rnd";
  }
}

CuriosityModule::CuriosityModule(Metric kind, nn::Network net, std::vector<int> perm,
                                 std::vector<double> scale, double lr)
    : kind_(kind),
      net_(std::move(net)),
      opt_(net_.param_count(), lr),
      perm_(std::move(perm)),
      scale_(std::move(scale)) {}

CuriosityModule CuriosityModule::make(Metric metric, const sim::TaskSpec& task,
                                      uint64_t seed) {
  const int sdim = task.state_dim();
  auto scale = workspace_scale(task);
  switch (metric) {
    case Metric::RND: {
      auto net = nn::Network::mlp(sdim, {64, 64}, sdim, nn::Activation::Tanh, seed);
      std::vector<int> perm(sdim);
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(mix_seed(hash_combine(seed, 0x524e44)));
      std::shuffle(perm.begin(), perm.end(), rng);
      return CuriosityModule(metric, std::move(net), std::move(perm), std::move(scale),
                             kCuriosityLr);
    }
    case Metric::FD: {
      auto net = nn::Network::mlp(sdim + task.action_dim(), {64, 64}, sdim,
                                  nn::Activation::Tanh, seed);
      return CuriosityModule(metric, std::move(net), {}, std::move(scale), kCuriosityLr);
    }
    case Metric::SE: {
      using nn::Activation;
      std::vector<nn::LayerDesc> layers;
      layers.push_back(nn::Conv2dLayer{3, 84, 84, 8, 4, 8, Activation::Relu});
      layers.push_back(nn::Conv2dLayer{8, 20, 20, 4, 2, 16, Activation::Relu});
      layers.push_back(nn::Conv2dLayer{16, 9, 9, 3, 1, 16, Activation::Relu});
      layers.push_back(nn::DenseLayer{16 * 7 * 7, 128, Activation::Relu});
      layers.push_back(nn::DenseLayer{128, sdim, Activation::Identity});
      return CuriosityModule(metric, nn::Network(std::move(layers), seed), {},
                             std::move(scale), kCuriosityLr);
    }
  }
  throw std::invalid_argument("bad metric");
}

std::vector<double> CuriosityModule::standardized(std::span<const double> state) const {
  std::vector<double> out(state.size());
  for (size_t i = 0; i < state.size(); ++i) out[i] = state[i] * scale_[i];
  return out;
}

std::vector<double> CuriosityModule::apply_target_map(std::span<const double> state) const {
  const auto s = standardized(state);
  std::vector<double> out(s.size());
  for (size_t i = 0; i < s.size(); ++i) out[i] = s[perm_[i]];
  return out;
}

std::vector<double> CuriosityModule::input_for(const Transition& t) const {
  switch (kind_) {
    case Metric::SE:
      if (t.image.empty())
        throw std::invalid_argument("SE curiosity requires rendered images");
      return t.image;
    case Metric::FD: {
      auto in = standardized(t.state);
      in.reserve(in.size() + t.action.size());
      for (double a : t.action) in.push_back(std::tanh(a));
      return in;
    }
    default:
      return standardized(t.state);
  }
}

std::vector<double> CuriosityModule::target_for(const Transition& t) const {
  switch (kind_) {
    case Metric::SE: return standardized(t.state);
    case Metric::FD: return standardized(t.next_state);
    default: return apply_target_map(t.state);
  }
}

std::vector<double> CuriosityModule::novelty(std::span<const Transition> batch) const {
  std::vector<double> out(batch.size(), 0.0);
  for (size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i].feasible) continue;  // L(A = empty) = 0
    const auto pred = net_.forward(input_for(batch[i]));
    const auto tgt = target_for(batch[i]);
    double l = 0.0;
    for (size_t j = 0; j < pred.size(); ++j) {
      const double d = pred[j] - tgt[j];
      l += d * d;
    }
    out[i] = l;
  }
  return out;
}

void CuriosityModule::set_lr(double lr) { opt_.lr = lr; }

double CuriosityModule::train(std::span<const Transition> batch, uint64_t seed) {
  std::vector<const Transition*> feasible;
  for (const auto& t : batch)
    if (t.feasible) feasible.push_back(&t);
  if (feasible.empty()) return last_loss_;

  std::vector<std::vector<double>> xs(feasible.size()), ys(feasible.size());
  for (size_t i = 0; i < feasible.size(); ++i) {
    xs[i] = input_for(*feasible[i]);
    ys[i] = target_for(*feasible[i]);
  }

  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_int_distribution<size_t> pick(0, feasible.size() - 1);
  std::vector<std::vector<double>> mb_x(std::min<size_t>(kMinibatch, feasible.size()));
  std::vector<std::vector<double>> mb_y(mb_x.size());

  double loss = nn::mean_squared_error(net_, xs, ys);
  for (int step = 0; step < budget_ && loss >= threshold_; ++step) {
    for (size_t i = 0; i < mb_x.size(); ++i) {
      const size_t j = pick(rng);
      mb_x[i] = xs[j];
      mb_y[i] = ys[j];
    }
    auto grad = nn::gradient_squared_error(net_, mb_x, mb_y);
    nn::adam_step(opt_, net_.params(), grad);
    loss = nn::mean_squared_error(net_, xs, ys);
  }
  last_loss_ = loss;
  return loss;
}

std::vector<double> CuriosityModule::score_vertices(
    std::span<const VertexView> vertices) const {
  std::vector<double> out(vertices.size(), 0.0);
  for (size_t i = 0; i < vertices.size(); ++i) {
    Transition t;
    switch (kind_) {
      case Metric::SE:
        if (!vertices[i].image)
          throw std::invalid_argument("SE vertex scoring requires images");
        t.image = *vertices[i].image;
        t.state = *vertices[i].state;
        break;
      case Metric::FD:
        t.state = *vertices[i].in_state;
        t.action = *vertices[i].in_action;
        t.next_state = *vertices[i].state;
        break;
      default:
        t.state = *vertices[i].state;
        break;
    }
    const auto pred = net_.forward(input_for(t));
    const auto tgt = target_for(t);
    double l = 0.0;
    for (size_t j = 0; j < pred.size(); ++j) {
      const double d = pred[j] - tgt[j];
      l += d * d;
    }
    out[i] = l;
  }
  return out;
}

uint64_t CuriosityModule::params_hash() const { return hash_doubles(net_.params()); }

nlohmann::json CuriosityModule::checkpoint() const {
  return {{"metric", metric_name(kind_)},
          {"net", net_.to_json()},
          {"perm", perm_},
          {"scale", scale_},
          {"opt", opt_.to_json()},
          {"threshold", threshold_},
          {"budget", budget_}};
}

CuriosityModule CuriosityModule::restore(const nlohmann::json& j) {
  CuriosityModule m(metric_from_name(j.at("metric")), nn::Network::from_json(j.at("net")),
                    j.at("perm").get<std::vector<int>>(),
                    j.at("scale").get<std::vector<double>>(), kCuriosityLr);
  m.opt_ = nn::AdamState::from_json(j.at("opt"));
  m.opt_.lr = kCuriosityLr;
  m.threshold_ = j.at("threshold");
  m.budget_ = j.at("budget");
  return m;
}

}  // namespace csp::curiosity
