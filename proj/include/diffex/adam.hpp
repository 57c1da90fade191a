#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "diffex/nn.hpp"

namespace diffex {

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates for one optimized variable.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step_count = 0;
  AdamParams params;

  explicit AdamState(std::size_t dim, AdamParams p = {})
      : m(dim, 0.0), v(dim, 0.0), params(p) {}
};

// One bias-corrected update. Mutates state, returns the additive update
// -lr * m_hat / (sqrt(v_hat) + eps).
inline std::vector<double> adam_step(AdamState& state, const std::vector<double>& grad) {
  if (grad.size() != state.m.size())
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  const AdamParams& p = state.params;
  state.step_count += 1;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.step_count));
  std::vector<double> update(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    state.m[i] = p.beta1 * state.m[i] + (1.0 - p.beta1) * grad[i];
    state.v[i] = p.beta2 * state.v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    update[i] = -p.lr * m_hat / (std::sqrt(v_hat) + p.eps);
  }
  return update;
}

// Adam over the parameter tensors of one DenseNet; one moment pair per
// weight/bias vector, step counts advance together.
class DenseNetAdam {
 public:
  DenseNetAdam(const DenseNet& net, AdamParams p) {
    for (const DenseLayer& l : net.layers) {
      states_.emplace_back(l.w.size(), p);
      states_.emplace_back(l.b.size(), p);
    }
  }

  void apply(DenseNet& net, const GradSet& grads) {
    if (grads.size() != net.layers.size())
      throw std::invalid_argument("DenseNetAdam::apply: grad set mismatch");
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
      std::vector<double> uw = adam_step(states_[2 * li], grads[li].dw);
      std::vector<double> ub = adam_step(states_[2 * li + 1], grads[li].db);
      DenseLayer& l = net.layers[li];
      for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] += uw[i];
      for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] += ub[i];
    }
  }

 private:
  std::vector<AdamState> states_;
};

}  // namespace diffex
