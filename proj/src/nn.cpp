#include "csp/nn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "csp/util.hpp"

namespace csp::nn {

namespace {

double activate(double x, Activation a) {
  switch (a) {
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    default: return x;
  }
}

// Derivative expressed in terms of the post-activation value.
double activate_grad_from_output(double y, Activation a) {
  switch (a) {
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Relu: return y > 0.0 ? 1.0 : 0.0;
    default: return 1.0;
  }
}

std::string act_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    default: return "identity";
  }
}

Activation act_from_name(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation: " + s);
}

bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

int layer_input_dim(const LayerDesc& l) {
  if (const auto* d = std::get_if<DenseLayer>(&l)) return d->in;
  const auto& c = std::get<Conv2dLayer>(l);
  return c.in_c * c.in_h * c.in_w;
}

int layer_output_dim(const LayerDesc& l) {
  if (const auto* d = std::get_if<DenseLayer>(&l)) return d->out;
  const auto& c = std::get<Conv2dLayer>(l);
  return c.out_c * c.out_h() * c.out_w();
}

int layer_param_count(const LayerDesc& l) {
  if (const auto* d = std::get_if<DenseLayer>(&l)) return d->out * d->in + d->out;
  const auto& c = std::get<Conv2dLayer>(l);
  return c.out_c * c.in_c * c.kernel * c.kernel + c.out_c;
}

Network::Network(std::vector<LayerDesc> layers, uint64_t seed)
    : layers_(std::move(layers)), seed_(seed) {
  check_chain();
  int n = 0;
  for (const auto& l : layers_) n += layer_param_count(l);
  params_.resize(n);
  init_params();
}

Network Network::mlp(int in, const std::vector<int>& hidden, int out,
                     Activation act, uint64_t seed) {
  std::vector<LayerDesc> layers;
  int prev = in;
  for (int h : hidden) {
    layers.push_back(DenseLayer{prev, h, act});
    prev = h;
  }
  layers.push_back(DenseLayer{prev, out, Activation::Identity});
  return Network(std::move(layers), seed);
}

void Network::check_chain() const {
  if (layers_.empty()) throw std::invalid_argument("network needs at least one layer");
  for (size_t i = 1; i < layers_.size(); ++i) {
    if (layer_output_dim(layers_[i - 1]) != layer_input_dim(layers_[i]))
      throw std::invalid_argument(
          "layer shape mismatch at layer " + std::to_string(i) + ": previous outputs " +
          std::to_string(layer_output_dim(layers_[i - 1])) + ", expected " +
          std::to_string(layer_input_dim(layers_[i])));
  }
}

void Network::init_params() {
  // Fan-in-scaled uniform init.
  std::mt19937_64 rng(mix_seed(seed_));
  size_t off = 0;
  for (const auto& l : layers_) {
    int fan_in, n_w, n_b;
    if (const auto* d = std::get_if<DenseLayer>(&l)) {
      fan_in = d->in;
      n_w = d->out * d->in;
      n_b = d->out;
    } else {
      const auto& c = std::get<Conv2dLayer>(l);
      fan_in = c.in_c * c.kernel * c.kernel;
      n_w = c.out_c * c.in_c * c.kernel * c.kernel;
      n_b = c.out_c;
    }
    const double bound = std::sqrt(1.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int i = 0; i < n_w; ++i) params_[off++] = dist(rng);
    for (int i = 0; i < n_b; ++i) params_[off++] = 0.0;
  }
}

int Network::input_dim() const { return layer_input_dim(layers_.front()); }
int Network::output_dim() const { return layer_output_dim(layers_.back()); }

std::vector<double> Network::forward(std::span<const double> input) const {
  Tape tape;
  return forward(input, tape);
}

std::vector<double> Network::forward(std::span<const double> input, Tape& tape) const {
  if (static_cast<int>(input.size()) != input_dim())
    throw std::invalid_argument("forward: input has " + std::to_string(input.size()) +
                                " entries, network expects " + std::to_string(input_dim()));
  tape.acts.clear();
  tape.acts.emplace_back(input.begin(), input.end());

  size_t off = 0;
  for (const auto& l : layers_) {
    const std::vector<double>& x = tape.acts.back();
    std::vector<double> y(layer_output_dim(l));
    if (const auto* d = std::get_if<DenseLayer>(&l)) {
      const double* w = params_.data() + off;
      const double* b = w + d->out * d->in;
      for (int o = 0; o < d->out; ++o) {
        double s = b[o];
        const double* wr = w + o * d->in;
        for (int i = 0; i < d->in; ++i) s += wr[i] * x[i];
        y[o] = activate(s, d->act);
      }
    } else {
      const auto& c = std::get<Conv2dLayer>(l);
      const double* w = params_.data() + off;
      const double* b = w + c.out_c * c.in_c * c.kernel * c.kernel;
      const int oh = c.out_h(), ow = c.out_w();
      for (int oc = 0; oc < c.out_c; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            double s = b[oc];
            for (int ic = 0; ic < c.in_c; ++ic) {
              const double* xin = x.data() + ic * c.in_h * c.in_w;
              const double* wk = w + ((oc * c.in_c + ic) * c.kernel) * c.kernel;
              for (int ky = 0; ky < c.kernel; ++ky) {
                const double* xr = xin + (oy * c.stride + ky) * c.in_w + ox * c.stride;
                const double* wr = wk + ky * c.kernel;
                for (int kx = 0; kx < c.kernel; ++kx) s += wr[kx] * xr[kx];
              }
            }
            y[(oc * oh + oy) * ow + ox] = activate(s, c.act);
          }
        }
      }
    }
    off += layer_param_count(l);
    tape.acts.push_back(std::move(y));
  }
  return tape.acts.back();
}

std::vector<double> Network::backward(const Tape& tape, std::span<const double> dloss_dout,
                                      std::span<double> grad) const {
  if (grad.size() != params_.size())
    throw std::invalid_argument("backward: gradient buffer size mismatch");
  if (tape.acts.size() != layers_.size() + 1)
    throw std::invalid_argument("backward: tape does not match network");

  std::vector<double> dy(dloss_dout.begin(), dloss_dout.end());

  // Parameter offsets per layer.
  std::vector<size_t> offs(layers_.size());
  size_t off = 0;
  for (size_t i = 0; i < layers_.size(); ++i) {
    offs[i] = off;
    off += layer_param_count(layers_[i]);
  }

  for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
    const auto& l = layers_[li];
    const std::vector<double>& x = tape.acts[li];
    const std::vector<double>& y = tape.acts[li + 1];
    if (!all_finite(y))
      throw std::runtime_error("non-finite values at layer " + std::to_string(li));

    std::vector<double> dx(x.size(), 0.0);
    if (const auto* d = std::get_if<DenseLayer>(&l)) {
      const double* w = params_.data() + offs[li];
      double* gw = grad.data() + offs[li];
      double* gb = gw + d->out * d->in;
      for (int o = 0; o < d->out; ++o) {
        const double dpre = dy[o] * activate_grad_from_output(y[o], d->act);
        if (!std::isfinite(dpre))
          throw std::runtime_error("non-finite gradient at layer " + std::to_string(li));
        gb[o] += dpre;
        const double* wr = w + o * d->in;
        double* gwr = gw + o * d->in;
        for (int i = 0; i < d->in; ++i) {
          gwr[i] += dpre * x[i];
          dx[i] += dpre * wr[i];
        }
      }
    } else {
      const auto& c = std::get<Conv2dLayer>(l);
      const double* w = params_.data() + offs[li];
      double* gw = grad.data() + offs[li];
      double* gb = gw + c.out_c * c.in_c * c.kernel * c.kernel;
      const int oh = c.out_h(), ow = c.out_w();
      for (int oc = 0; oc < c.out_c; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            const int oi = (oc * oh + oy) * ow + ox;
            const double dpre = dy[oi] * activate_grad_from_output(y[oi], c.act);
            if (dpre == 0.0) continue;
            gb[oc] += dpre;
            for (int ic = 0; ic < c.in_c; ++ic) {
              const double* xin = x.data() + ic * c.in_h * c.in_w;
              double* dxin = dx.data() + ic * c.in_h * c.in_w;
              const double* wk = w + ((oc * c.in_c + ic) * c.kernel) * c.kernel;
              double* gwk = gw + ((oc * c.in_c + ic) * c.kernel) * c.kernel;
              for (int ky = 0; ky < c.kernel; ++ky) {
                const int xoff = (oy * c.stride + ky) * c.in_w + ox * c.stride;
                for (int kx = 0; kx < c.kernel; ++kx) {
                  gwk[ky * c.kernel + kx] += dpre * xin[xoff + kx];
                  dxin[xoff + kx] += dpre * wk[ky * c.kernel + kx];
                }
              }
            }
          }
        }
      }
    }
    dy = std::move(dx);
  }
  return dy;
}

nlohmann::json Network::to_json() const {
  nlohmann::json jl = nlohmann::json::array();
  for (const auto& l : layers_) {
    if (const auto* d = std::get_if<DenseLayer>(&l)) {
      jl.push_back({{"type", "dense"}, {"in", d->in}, {"out", d->out}, {"act", act_name(d->act)}});
    } else {
      const auto& c = std::get<Conv2dLayer>(l);
      jl.push_back({{"type", "conv2d"}, {"in_c", c.in_c}, {"in_h", c.in_h}, {"in_w", c.in_w},
                    {"kernel", c.kernel}, {"stride", c.stride}, {"out_c", c.out_c},
                    {"act", act_name(c.act)}});
    }
  }
  return {{"layers", jl}, {"params", params_}, {"seed", seed_}};
}

Network Network::from_json(const nlohmann::json& j) {
  std::vector<LayerDesc> layers;
  for (const auto& jl : j.at("layers")) {
    const std::string type = jl.at("type");
    if (type == "dense") {
      layers.push_back(DenseLayer{jl.at("in"), jl.at("out"), act_from_name(jl.at("act"))});
    } else if (type == "conv2d") {
      layers.push_back(Conv2dLayer{jl.at("in_c"), jl.at("in_h"), jl.at("in_w"), jl.at("kernel"),
                                   jl.at("stride"), jl.at("out_c"), act_from_name(jl.at("act"))});
    } else {
      throw std::invalid_argument("unknown layer type: " + type);
    }
  }
  Network net(std::move(layers), j.at("seed").get<uint64_t>());
  std::vector<double> params = j.at("params").get<std::vector<double>>();
  if (params.size() != net.params_.size())
    throw std::invalid_argument("checkpoint parameter count mismatch");
  net.params_ = std::move(params);
  return net;
}

nlohmann::json AdamState::to_json() const {
  return {{"m", m}, {"v", v}, {"step", step}, {"lr", lr},
          {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}};
}

AdamState AdamState::from_json(const nlohmann::json& j) {
  AdamState s;
  s.m = j.at("m").get<std::vector<double>>();
  s.v = j.at("v").get<std::vector<double>>();
  s.step = j.at("step");
  s.lr = j.at("lr");
  s.beta1 = j.at("beta1");
  s.beta2 = j.at("beta2");
  s.eps = j.at("eps");
  return s;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw std::invalid_argument("adam_step: array length mismatch");
  if (!all_finite(grads)) {
    ++state.skipped;
    return;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

double clip_grad_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

std::vector<double> gradient_squared_error(const Network& net,
                                           std::span<const std::vector<double>> xs,
                                           std::span<const std::vector<double>> ys) {
  if (xs.size() != ys.size() || xs.empty())
    throw std::invalid_argument("gradient_squared_error: batch mismatch");
  std::vector<double> grad(net.param_count(), 0.0);
  Network::Tape tape;
  const double inv_b = 1.0 / static_cast<double>(xs.size());
  std::vector<double> dy;
  for (size_t i = 0; i < xs.size(); ++i) {
    const auto out = net.forward(xs[i], tape);
    dy.resize(out.size());
    for (size_t o = 0; o < out.size(); ++o)
      dy[o] = 2.0 * (out[o] - ys[i][o]) * inv_b;
    net.backward(tape, dy, grad);
  }
  return grad;
}

double mean_squared_error(const Network& net,
                          std::span<const std::vector<double>> xs,
                          std::span<const std::vector<double>> ys) {
  double total = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const auto out = net.forward(xs[i]);
    for (size_t o = 0; o < out.size(); ++o) {
      const double d = out[o] - ys[i][o];
      total += d * d;
    }
  }
  return total / static_cast<double>(xs.size());
}

}  // namespace csp::nn
