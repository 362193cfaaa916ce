#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace csp::nn {

enum class Activation { Identity, Tanh, Relu };

struct DenseLayer {
  int in = 0;
  int out = 0;
  Activation act = Activation::Identity;
};

// Input layout is channel-major (C,H,W) flattened.
struct Conv2dLayer {
  int in_c = 0, in_h = 0, in_w = 0;
  int kernel = 0;
  int stride = 1;
  int out_c = 0;
  Activation act = Activation::Relu;

  int out_h() const { return (in_h - kernel) / stride + 1; }
  int out_w() const { return (in_w - kernel) / stride + 1; }
};

using LayerDesc = std::variant<DenseLayer, Conv2dLayer>;

int layer_input_dim(const LayerDesc& l);
int layer_output_dim(const LayerDesc& l);
int layer_param_count(const LayerDesc& l);

// Feed-forward network over a flat parameter vector. Forward evaluation is
// const and may run concurrently; parameter mutation is single-writer.
class Network {
 public:
  Network() = default;
  Network(std::vector<LayerDesc> layers, uint64_t seed);

  // in -> hidden... -> out, hidden activation `act`, identity output head.
  static Network mlp(int in, const std::vector<int>& hidden, int out,
                     Activation act, uint64_t seed);

  int input_dim() const;
  int output_dim() const;
  int param_count() const { return static_cast<int>(params_.size()); }
  uint64_t seed() const { return seed_; }
  const std::vector<LayerDesc>& layers() const { return layers_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::vector<double> forward(std::span<const double> input) const;

  // Post-activation values per layer, needed to backprop.
  struct Tape {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[i] = layer i-1 output
  };
  std::vector<double> forward(std::span<const double> input, Tape& tape) const;

  // Accumulates dLoss/dParams into grad (length param_count) and returns
  // dLoss/dInput. Throws on non-finite intermediates, naming the layer.
  std::vector<double> backward(const Tape& tape, std::span<const double> dloss_dout,
                               std::span<double> grad) const;

  nlohmann::json to_json() const;
  static Network from_json(const nlohmann::json& j);

 private:
  std::vector<LayerDesc> layers_;
  std::vector<double> params_;
  uint64_t seed_ = 0;

  void init_params();
  void check_chain() const;
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long skipped = 0;  // updates dropped due to non-finite gradients

  explicit AdamState(size_t n = 0, double learning_rate = 1e-3)
      : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}

  nlohmann::json to_json() const;
  static AdamState from_json(const nlohmann::json& j);
};

// Standard Adam update in place. Non-finite gradients skip the update
// (step counter untouched) and bump state.skipped.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// Scales grads to max_norm when the global L2 norm exceeds it. Returns the norm.
double clip_grad_norm(std::span<double> grads, double max_norm);

// dLoss/dParams for L = (1/B) * sum_i ||net(x_i) - y_i||^2.
std::vector<double> gradient_squared_error(const Network& net,
                                           std::span<const std::vector<double>> xs,
                                           std::span<const std::vector<double>> ys);

double mean_squared_error(const Network& net,
                          std::span<const std::vector<double>> xs,
                          std::span<const std::vector<double>> ys);

}  // namespace csp::nn
