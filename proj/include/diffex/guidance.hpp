#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "diffex/adam.hpp"
#include "diffex/classifier.hpp"
#include "diffex/diffusion.hpp"
#include "diffex/rng.hpp"

namespace diffex {

// Which pull terms steer the reverse process and how hard. The class term
// pushes the one-step data estimate toward target_class under the frozen
// classifier; the closeness term pulls it toward the reference example.
struct GuidanceConfig {
  bool use_validity = true;
  bool use_closeness = true;
  double lambda = 0.3;
  double base_scale = 1.0;
  AdamParams adam{1.0, 0.9, 0.999, 1e-8};
  std::size_t target_class = 0;
  std::vector<double> reference;

  void validate(std::size_t data_dim, std::size_t num_classes) const {
    if (use_validity && target_class >= num_classes)
      throw std::invalid_argument("GuidanceConfig: target_class out of range");
    if (use_closeness && reference.size() != data_dim)
      throw std::invalid_argument("GuidanceConfig: reference size mismatch");
    if (lambda < 0.0) throw std::invalid_argument("GuidanceConfig: lambda must be >= 0");
  }
};

// Ascent gradient of lambda * log p_cl(y | x0_hat) - |x0_hat - x*|_1 with
// respect to x_t, where x0_hat is the clamped one-step estimate. The clamp
// zeroes the cotangent outside the data range; the rest is the chain rule
// through the denoiser.
inline std::vector<double> guidance_gradient(const DiffusionModel& model, const Classifier& clf,
                                             const std::vector<double>& x_t, std::size_t t,
                                             const GuidanceConfig& cfg) {
  const std::size_t dim = model.data_dim;
  const auto in = model.net_input(x_t, t);
  DenseTrace trace;
  const std::vector<double> eps_hat = model.denoiser.forward_trace(in, trace);

  const auto x0_raw = predict_x0_raw(model.schedule, x_t, t, eps_hat);
  std::vector<double> x0_clamped(dim);
  for (std::size_t i = 0; i < dim; ++i)
    x0_clamped[i] = std::min(1.0, std::max(-1.0, x0_raw[i]));

  std::vector<double> v(dim, 0.0);
  if (cfg.use_validity) {
    const auto g = clf.grad_log_prob_input(x0_clamped, cfg.target_class);
    for (std::size_t i = 0; i < dim; ++i) v[i] += cfg.lambda * g[i];
  }
  if (cfg.use_closeness) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = x0_clamped[i] - cfg.reference[i];
      v[i] -= d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    }
  }
  for (std::size_t i = 0; i < dim; ++i)
    if (!(x0_raw[i] > -1.0 && x0_raw[i] < 1.0)) v[i] = 0.0;

  const double abar = model.schedule.abar(t);
  const double inv_sqrt = 1.0 / std::sqrt(abar);
  const double chain = -std::sqrt(1.0 - abar) * inv_sqrt;
  std::vector<double> dout(model.denoiser.output_dim());
  for (std::size_t i = 0; i < dim; ++i) dout[i] = chain * v[i];
  const auto din = model.denoiser.backward_input(trace, dout);

  std::vector<double> g(dim);
  for (std::size_t i = 0; i < dim; ++i) g[i] = inv_sqrt * v[i] + din[i];
  return g;
}

// One guided reverse transition. The adapted gradient shifts the posterior
// mean by base_scale * Sigma(t) * d, with Sigma(t) the step's posterior
// variance, so the shift vanishes at t = 1. Feeding the negated ascent
// gradient through adam_step makes the returned update point uphill.
// Draws the same noise as reverse_step; guidance itself consumes no rng.
inline std::vector<double> guided_reverse_step(const DiffusionModel& model, const Classifier& clf,
                                               const std::vector<double>& x_t, std::size_t t,
                                               const GuidanceConfig& cfg, AdamState& adam,
                                               Rng& rng, double noise_scale = 1.0) {
  if (!cfg.use_validity && !cfg.use_closeness)
    return reverse_step(model, x_t, t, rng, noise_scale);

  auto mu = posterior_mean_from_eps(model.schedule, x_t, t, model.eps_hat(x_t, t));
  std::vector<double> g = guidance_gradient(model, clf, x_t, t, cfg);
  for (double& gi : g) gi = -gi;
  const std::vector<double> d = adam_step(adam, g);
  const double sigma = t >= 2 ? model.schedule.posterior_var_at(t) : 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += cfg.base_scale * sigma * d[i];
  if (t >= 2) {
    const double sd = std::sqrt(model.schedule.posterior_var_at(t));
    for (double& v : mu) v += noise_scale * sd * rng.gaussian();
  }
  return mu;
}

// Guided ancestral sampling from full noise: count chains, chain i seeded
// with seed + i exactly like ddpm_sample. Adam moments are fresh per chain
// and persist across its T steps. Outputs are clamped to the data range.
inline std::vector<std::vector<double>> guided_generate(const DiffusionModel& model,
                                                        const Classifier& clf,
                                                        const GuidanceConfig& cfg,
                                                        std::size_t count, std::uint64_t seed,
                                                        double noise_scale = 1.0) {
  cfg.validate(model.data_dim, clf.num_classes);
  if (clf.input_size() != model.data_dim)
    throw std::invalid_argument("guided_generate: classifier input != data_dim");
  std::vector<std::vector<double>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(seed + i);
    std::vector<double> x = rng.gaussian_vector(model.data_dim);
    AdamState adam(model.data_dim, cfg.adam);
    for (std::size_t t = model.schedule.steps; t >= 1; --t)
      x = guided_reverse_step(model, clf, x, t, cfg, adam, rng, noise_scale);
    for (double& v : x) v = std::min(1.0, std::max(-1.0, v));
    out.push_back(std::move(x));
  }
  return out;
}

struct AdversarialResult {
  std::vector<double> x;
  bool flipped = false;
  std::size_t steps_used = 0;
};

// Plain pixel-space attack used as the adversarial baseline:
// x <- clamp(x + step_size * grad log p_cl(y | x)), stopping as soon as the
// argmax reaches the target or the step budget runs out. An input already
// classified as the target comes back untouched.
inline AdversarialResult pixel_adversarial(const Classifier& clf,
                                           const std::vector<double>& x_init,
                                           std::size_t target_class, double step_size,
                                           std::size_t n_steps) {
  if (x_init.size() != clf.input_size())
    throw std::invalid_argument("pixel_adversarial: input size mismatch");
  if (target_class >= clf.num_classes)
    throw std::invalid_argument("pixel_adversarial: target_class out of range");
  AdversarialResult r;
  r.x = x_init;
  for (std::size_t s = 0;; ++s) {
    if (clf.predict(r.x) == target_class) {
      r.flipped = true;
      break;
    }
    if (s == n_steps) break;
    const auto g = clf.grad_log_prob_input(r.x, target_class);
    for (std::size_t i = 0; i < r.x.size(); ++i)
      r.x[i] = std::min(1.0, std::max(-1.0, r.x[i] + step_size * g[i]));
    r.steps_used = s + 1;
  }
  return r;
}

}  // namespace diffex
