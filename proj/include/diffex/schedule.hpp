#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffex {

// Pre-computed beta_t, alpha_t, alpha_bar_t and forward-posterior variances
// for T diffusion steps. Arrays are indexed t-1 for step t in [1, T];
// alpha_bar(0) is 1 by convention.
struct NoiseSchedule {
  std::size_t steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> posterior_var;  // beta_tilde, 0 at t = 1

  double abar(std::size_t t) const {
    check_step_or_zero(t);
    return t == 0 ? 1.0 : alpha_bar[t - 1];
  }
  double beta_at(std::size_t t) const {
    check_step(t);
    return beta[t - 1];
  }
  double alpha_at(std::size_t t) const {
    check_step(t);
    return alpha[t - 1];
  }
  double posterior_var_at(std::size_t t) const {
    check_step(t);
    return posterior_var[t - 1];
  }

  void check_step(std::size_t t) const {
    if (t < 1 || t > steps)
      throw std::invalid_argument("NoiseSchedule: step " + std::to_string(t) + " out of range");
  }
  void check_step_or_zero(std::size_t t) const {
    if (t > steps)
      throw std::invalid_argument("NoiseSchedule: step " + std::to_string(t) + " out of range");
  }

  void validate() const {
    if (steps == 0) throw std::invalid_argument("NoiseSchedule: need at least one step");
    if (beta.size() != steps || alpha.size() != steps || alpha_bar.size() != steps ||
        posterior_var.size() != steps)
      throw std::invalid_argument("NoiseSchedule: array length mismatch");
    double prev = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
      if (!(beta[i] > 0.0 && beta[i] < 1.0))
        throw std::invalid_argument("NoiseSchedule: beta out of (0, 1)");
      if (!(alpha_bar[i] < prev))
        throw std::invalid_argument("NoiseSchedule: alpha_bar not strictly decreasing");
      prev = alpha_bar[i];
    }
  }

  static NoiseSchedule from_betas(std::vector<double> betas) {
    NoiseSchedule s;
    s.steps = betas.size();
    s.beta = std::move(betas);
    s.alpha.resize(s.steps);
    s.alpha_bar.resize(s.steps);
    s.posterior_var.resize(s.steps);
    double prod = 1.0;
    for (std::size_t i = 0; i < s.steps; ++i) {
      s.alpha[i] = 1.0 - s.beta[i];
      const double abar_prev = prod;
      prod *= s.alpha[i];
      s.alpha_bar[i] = prod;
      s.posterior_var[i] = s.beta[i] * (1.0 - abar_prev) / (1.0 - prod);
    }
    s.validate();
    return s;
  }

  static NoiseSchedule linear(std::size_t steps, double beta_start, double beta_end) {
    if (steps == 0) throw std::invalid_argument("NoiseSchedule::linear: steps must be >= 1");
    std::vector<double> betas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
      const double frac = steps == 1 ? 0.0
                                     : static_cast<double>(i) / static_cast<double>(steps - 1);
      betas[i] = beta_start + (beta_end - beta_start) * frac;
    }
    return from_betas(std::move(betas));
  }
};

}  // namespace diffex
