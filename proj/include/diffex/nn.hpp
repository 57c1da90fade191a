#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffex/rng.hpp"
#include "diffex/tensor.hpp"

namespace diffex {

enum class Activation { linear, relu, tanh, softplus };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
  }
  throw std::logic_error("activation_name: bad enum");
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  throw std::invalid_argument("unknown activation: " + s);
}

inline double apply_activation(Activation a, double z) {
  switch (a) {
    case Activation::linear: return z;
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::softplus: return z > 30.0 ? z : std::log1p(std::exp(z));
  }
  throw std::logic_error("apply_activation: bad enum");
}

// Derivative as a function of the pre-activation. Relu subgradient at 0 is 0.
inline double activation_derivative(Activation a, double z) {
  switch (a) {
    case Activation::linear: return 1.0;
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double y = std::tanh(z);
      return 1.0 - y * y;
    }
    case Activation::softplus:
      return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                      : std::exp(z) / (1.0 + std::exp(z));
  }
  throw std::logic_error("activation_derivative: bad enum");
}

// One affine layer: w is out x in, row-major.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;
  std::vector<double> b;
  Activation act = Activation::linear;
};

struct LayerGrads {
  std::vector<double> dw;
  std::vector<double> db;
};

using GradSet = std::vector<LayerGrads>;

// Cached intermediate values of one forward pass, reused by backward passes.
// x[0] is the network input, x[i+1] the output of layer i; pre[i] holds the
// pre-activation of layer i.
struct DenseTrace {
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> pre;
};

struct DenseNet {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("DenseNet: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const DenseLayer& l = layers[i];
      if (l.in == 0 || l.out == 0) throw std::invalid_argument("DenseNet: zero dimension");
      if (l.w.size() != l.in * l.out || l.b.size() != l.out)
        throw std::invalid_argument("DenseNet: parameter size mismatch");
      if (i > 0 && layers[i - 1].out != l.in)
        throw std::invalid_argument("DenseNet: layer dimensions do not chain");
      for (double v : l.w)
        if (!std::isfinite(v)) throw std::invalid_argument("DenseNet: non-finite weight");
      for (double v : l.b)
        if (!std::isfinite(v)) throw std::invalid_argument("DenseNet: non-finite bias");
    }
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const DenseLayer& l : layers) n += l.w.size() + l.b.size();
    return n;
  }

  std::vector<double> forward(const std::vector<double>& x) const {
    if (x.size() != input_dim())
      throw std::invalid_argument("DenseNet::forward: input dimension mismatch");
    std::vector<double> cur = x;
    std::vector<double> next;
    for (const DenseLayer& l : layers) {
      next.assign(l.out, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double* wrow = l.w.data() + o * l.in;
        double s = l.b[o];
        for (std::size_t i = 0; i < l.in; ++i) s += wrow[i] * cur[i];
        next[o] = apply_activation(l.act, s);
      }
      cur.swap(next);
    }
    return cur;
  }

  // Forward over a batch of B row-major inputs; trace-free.
  std::vector<double> forward_batch(const std::vector<double>& xs, std::size_t batch) const {
    const std::size_t din = input_dim();
    if (xs.size() != batch * din)
      throw std::invalid_argument("DenseNet::forward_batch: input size mismatch");
    std::vector<double> cur = xs;
    std::vector<double> next;
    std::size_t cur_dim = din;
    for (const DenseLayer& l : layers) {
      next.assign(batch * l.out, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double* wrow = l.w.data() + o * l.in;
        for (std::size_t b = 0; b < batch; ++b) {
          const double* xrow = cur.data() + b * cur_dim;
          double s = l.b[o];
          for (std::size_t i = 0; i < l.in; ++i) s += wrow[i] * xrow[i];
          next[b * l.out + o] = apply_activation(l.act, s);
        }
      }
      cur.swap(next);
      cur_dim = l.out;
    }
    return cur;
  }

  std::vector<double> forward_trace(const std::vector<double>& x, DenseTrace& trace) const {
    if (x.size() != input_dim())
      throw std::invalid_argument("DenseNet::forward_trace: input dimension mismatch");
    trace.x.assign(layers.size() + 1, {});
    trace.pre.assign(layers.size(), {});
    trace.x[0] = x;
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const DenseLayer& l = layers[li];
      const std::vector<double>& cur = trace.x[li];
      std::vector<double>& pre = trace.pre[li];
      std::vector<double>& post = trace.x[li + 1];
      pre.assign(l.out, 0.0);
      post.assign(l.out, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double* wrow = l.w.data() + o * l.in;
        double s = l.b[o];
        for (std::size_t i = 0; i < l.in; ++i) s += wrow[i] * cur[i];
        pre[o] = s;
        post[o] = apply_activation(l.act, s);
      }
    }
    return trace.x.back();
  }

  // Input cotangent for an output cotangent dy (reverse mode).
  std::vector<double> backward_input(const DenseTrace& trace, const std::vector<double>& dy) const {
    if (dy.size() != output_dim())
      throw std::invalid_argument("DenseNet::backward_input: cotangent dimension mismatch");
    std::vector<double> grad = dy;
    for (std::size_t li = layers.size(); li-- > 0;) {
      const DenseLayer& l = layers[li];
      std::vector<double> dz(l.out);
      for (std::size_t o = 0; o < l.out; ++o)
        dz[o] = grad[o] * activation_derivative(l.act, trace.pre[li][o]);
      std::vector<double> dx(l.in, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double* wrow = l.w.data() + o * l.in;
        const double g = dz[o];
        if (g == 0.0) continue;
        for (std::size_t i = 0; i < l.in; ++i) dx[i] += wrow[i] * g;
      }
      grad.swap(dx);
    }
    return grad;
  }

  GradSet zero_grads() const {
    GradSet g(layers.size());
    for (std::size_t li = 0; li < layers.size(); ++li) {
      g[li].dw.assign(layers[li].w.size(), 0.0);
      g[li].db.assign(layers[li].b.size(), 0.0);
    }
    return g;
  }

  // Accumulates parameter gradients for output cotangent dy into grads and
  // returns the input cotangent.
  std::vector<double> backward_params(const DenseTrace& trace, const std::vector<double>& dy,
                                      GradSet& grads) const {
    if (grads.size() != layers.size())
      throw std::invalid_argument("DenseNet::backward_params: grad set size mismatch");
    std::vector<double> grad = dy;
    for (std::size_t li = layers.size(); li-- > 0;) {
      const DenseLayer& l = layers[li];
      const std::vector<double>& x = trace.x[li];
      std::vector<double> dz(l.out);
      for (std::size_t o = 0; o < l.out; ++o)
        dz[o] = grad[o] * activation_derivative(l.act, trace.pre[li][o]);
      std::vector<double> dx(l.in, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double g = dz[o];
        grads[li].db[o] += g;
        double* dwrow = grads[li].dw.data() + o * l.in;
        const double* wrow = l.w.data() + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) {
          dwrow[i] += g * x[i];
          dx[i] += wrow[i] * g;
        }
      }
      grad.swap(dx);
    }
    return grad;
  }
};

// He init for relu/softplus, Xavier otherwise.
inline DenseNet make_dense_net(const std::vector<std::size_t>& dims,
                               const std::vector<Activation>& acts, Rng& rng) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1)
    throw std::invalid_argument("make_dense_net: dims/acts mismatch");
  DenseNet net;
  for (std::size_t li = 0; li + 1 < dims.size(); ++li) {
    DenseLayer l;
    l.in = dims[li];
    l.out = dims[li + 1];
    l.act = acts[li];
    const bool he = l.act == Activation::relu || l.act == Activation::softplus;
    const double std = std::sqrt((he ? 2.0 : 1.0) / static_cast<double>(l.in));
    l.w.resize(l.in * l.out);
    for (double& v : l.w) v = std * rng.gaussian();
    l.b.assign(l.out, 0.0);
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

inline double log_sum_exp(const std::vector<double>& logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return m + std::log(z);
}

inline double log_softmax_at(const std::vector<double>& logits, std::size_t k) {
  return logits[k] - log_sum_exp(logits);
}

// Scalar objectives composed with a network output, for input-gradient queries.
struct Objective {
  enum class Kind { half_squared_norm, log_softmax_target, l1_to } kind;
  std::size_t target = 0;            // log_softmax_target
  std::vector<double> reference;     // l1_to

  static Objective half_squared_norm() { return {Kind::half_squared_norm, 0, {}}; }
  static Objective log_softmax_target(std::size_t k) { return {Kind::log_softmax_target, k, {}}; }
  static Objective l1_to(std::vector<double> ref) {
    return {Kind::l1_to, 0, std::move(ref)};
  }
};

inline double evaluate_objective(const Objective& obj, const std::vector<double>& y) {
  switch (obj.kind) {
    case Objective::Kind::half_squared_norm:
      return 0.5 * squared_norm(y);
    case Objective::Kind::log_softmax_target:
      if (obj.target >= y.size()) throw std::invalid_argument("objective: target out of range");
      return log_softmax_at(y, obj.target);
    case Objective::Kind::l1_to: {
      if (obj.reference.size() != y.size())
        throw std::invalid_argument("objective: reference size mismatch");
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - obj.reference[i]);
      return s;
    }
  }
  throw std::logic_error("evaluate_objective: bad enum");
}

inline std::vector<double> objective_output_gradient(const Objective& obj,
                                                     const std::vector<double>& y) {
  std::vector<double> dy(y.size(), 0.0);
  switch (obj.kind) {
    case Objective::Kind::half_squared_norm:
      dy = y;
      break;
    case Objective::Kind::log_softmax_target: {
      std::vector<double> p = softmax(y);
      for (std::size_t i = 0; i < y.size(); ++i) dy[i] = -p[i];
      dy[obj.target] += 1.0;
      break;
    }
    case Objective::Kind::l1_to:
      // l1 subgradient at 0 is 0.
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - obj.reference[i];
        dy[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      }
      break;
  }
  return dy;
}

// d objective(net(x)) / dx via reverse-mode accumulation.
inline std::vector<double> grad_wrt_input(const DenseNet& net, const std::vector<double>& x,
                                          const Objective& obj) {
  DenseTrace trace;
  std::vector<double> y = net.forward_trace(x, trace);
  return net.backward_input(trace, objective_output_gradient(obj, y));
}

// Mean squared-error parameter gradients over a batch:
// L = (1/B) sum_b ||net(x_b) - y_b||^2.
inline GradSet grad_wrt_params_mse(const DenseNet& net,
                                   const std::vector<std::vector<double>>& inputs,
                                   const std::vector<std::vector<double>>& targets,
                                   double* loss_out = nullptr) {
  if (inputs.empty()) throw std::invalid_argument("grad_wrt_params_mse: empty batch");
  if (inputs.size() != targets.size())
    throw std::invalid_argument("grad_wrt_params_mse: inputs/targets mismatch");
  GradSet grads = net.zero_grads();
  const double scale = 1.0 / static_cast<double>(inputs.size());
  double loss = 0.0;
  DenseTrace trace;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    std::vector<double> y = net.forward_trace(inputs[b], trace);
    if (y.size() != targets[b].size())
      throw std::invalid_argument("grad_wrt_params_mse: target size mismatch");
    std::vector<double> dy(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double r = y[i] - targets[b][i];
      loss += r * r * scale;
      dy[i] = 2.0 * r * scale;
    }
    net.backward_params(trace, dy, grads);
  }
  if (loss_out) *loss_out = loss;
  return grads;
}

}  // namespace diffex
