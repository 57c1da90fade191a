#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "diffex/adam.hpp"
#include "diffex/nn.hpp"
#include "diffex/rng.hpp"
#include "diffex/schedule.hpp"
#include "diffex/tensor.hpp"
#include "diffex/time_embedding.hpp"

namespace diffex {

// How the decoder term of the ELBO treats x0: as a continuous density
// (2-D toy data) or as a discretized Gaussian over the 256 pixel levels.
enum class DecoderMode { continuous, discrete_256 };

// Epsilon-prediction diffusion model over flat vectors in [-1, 1]^D.
// The denoiser eats x_t concatenated with a sinusoidal embedding of t.
struct DiffusionModel {
  NoiseSchedule schedule;
  TimeEmbedding embed;
  DenseNet denoiser;
  std::size_t data_dim = 0;
  DecoderMode decoder = DecoderMode::continuous;

  void validate() const {
    schedule.validate();
    denoiser.validate();
    if (data_dim == 0) throw std::invalid_argument("DiffusionModel: data_dim must be positive");
    if (denoiser.input_dim() != data_dim + embed.dim)
      throw std::invalid_argument("DiffusionModel: denoiser input != data_dim + embed dim");
    if (denoiser.output_dim() != data_dim)
      throw std::invalid_argument("DiffusionModel: denoiser output != data_dim");
  }

  std::vector<double> net_input(const std::vector<double>& x_t, std::size_t t) const {
    std::vector<double> in(data_dim + embed.dim);
    for (std::size_t i = 0; i < data_dim; ++i) in[i] = x_t[i];
    embed.write(t, &in[data_dim]);
    return in;
  }

  std::vector<double> eps_hat(const std::vector<double>& x_t, std::size_t t) const {
    return denoiser.forward(net_input(x_t, t));
  }
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps. t = 0 returns x0 itself.
inline std::vector<double> forward_sample(const NoiseSchedule& sched,
                                          const std::vector<double>& x0, std::size_t t,
                                          const std::vector<double>& eps) {
  sched.check_step_or_zero(t);
  if (eps.size() != x0.size())
    throw std::invalid_argument("forward_sample: eps size mismatch");
  const double a = std::sqrt(sched.abar(t));
  const double b = std::sqrt(1.0 - sched.abar(t));
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

// One-step data estimate (x_t - sqrt(1-abar) eps_hat) / sqrt(abar), unclamped.
inline std::vector<double> predict_x0_raw(const NoiseSchedule& sched,
                                          const std::vector<double>& x_t, std::size_t t,
                                          const std::vector<double>& eps_hat) {
  sched.check_step(t);
  const double abar = sched.abar(t);
  const double inv = 1.0 / std::sqrt(abar);
  const double c = std::sqrt(1.0 - abar);
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) out[i] = inv * (x_t[i] - c * eps_hat[i]);
  return out;
}

inline std::vector<double> posterior_mean_from_eps(const NoiseSchedule& sched,
                                                   const std::vector<double>& x_t, std::size_t t,
                                                   const std::vector<double>& eps_hat) {
  sched.check_step(t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
  const double coef = sched.beta_at(t) / std::sqrt(1.0 - sched.abar(t));
  std::vector<double> mu(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i)
    mu[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]);
  return mu;
}

// Mean of the exact forward posterior q(x_{t-1} | x_t, x0).
inline std::vector<double> posterior_mean_from_x0(const NoiseSchedule& sched,
                                                  const std::vector<double>& x_t, std::size_t t,
                                                  const std::vector<double>& x0) {
  sched.check_step(t);
  const double abar_t = sched.abar(t);
  const double abar_prev = sched.abar(t - 1);
  const double beta_t = sched.beta_at(t);
  const double c0 = std::sqrt(abar_prev) * beta_t / (1.0 - abar_t);
  const double ct = std::sqrt(sched.alpha_at(t)) * (1.0 - abar_prev) / (1.0 - abar_t);
  std::vector<double> mu(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) mu[i] = c0 * x0[i] + ct * x_t[i];
  return mu;
}

// Clamped one-step data estimate used by guidance and reporting.
inline std::vector<double> predict_x0(const DiffusionModel& model, const std::vector<double>& x_t,
                                      std::size_t t) {
  auto x0 = predict_x0_raw(model.schedule, x_t, t, model.eps_hat(x_t, t));
  for (double& v : x0) v = std::min(1.0, std::max(-1.0, v));
  return x0;
}

// Single reverse transition x_t -> x_{t-1}. Draws D gaussians for t >= 2 and
// none at t = 1, where the posterior variance is zero. noise_scale rescales
// the injected noise (0 gives the deterministic mean recurrence).
inline std::vector<double> reverse_step(const DiffusionModel& model,
                                        const std::vector<double>& x_t, std::size_t t, Rng& rng,
                                        double noise_scale = 1.0) {
  auto mu = posterior_mean_from_eps(model.schedule, x_t, t, model.eps_hat(x_t, t));
  if (t >= 2) {
    const double sd = std::sqrt(model.schedule.posterior_var_at(t));
    for (double& v : mu) v += noise_scale * sd * rng.gaussian();
  }
  return mu;
}

// One optimizer step on the simplified objective mean_b |eps - eps_hat|^2.
// Per batch element: draw t uniform on [1, T], then D noise gaussians.
inline double ddpm_train_step(DiffusionModel& model,
                              const std::vector<const std::vector<double>*>& batch, Rng& rng,
                              DenseNetAdam& opt) {
  if (batch.empty()) throw std::invalid_argument("ddpm_train_step: empty batch");
  const std::size_t dim = model.data_dim;
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;
  inputs.reserve(batch.size());
  targets.reserve(batch.size());
  for (const auto* x0 : batch) {
    if (!x0 || x0->size() != dim)
      throw std::invalid_argument("ddpm_train_step: bad batch element");
    const std::size_t t = 1 + rng.bounded(model.schedule.steps);
    std::vector<double> eps = rng.gaussian_vector(dim);
    inputs.push_back(model.net_input(forward_sample(model.schedule, *x0, t, eps), t));
    targets.push_back(std::move(eps));
  }
  double loss = 0.0;
  GradSet grads = grad_wrt_params_mse(model.denoiser, inputs, targets, &loss);
  opt.apply(model.denoiser, grads);
  return loss;
}

// Unconditional ancestral sampling: n chains, chain i seeded with seed + i.
// Consumption per chain: D gaussians for x_T, then the reverse steps.
// Outputs are clamped to the data range unless clamp_output is false.
inline std::vector<std::vector<double>> ddpm_sample(const DiffusionModel& model, std::size_t n,
                                                    std::uint64_t seed, double noise_scale = 1.0,
                                                    bool clamp_output = true) {
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed + i);
    std::vector<double> x = rng.gaussian_vector(model.data_dim);
    for (std::size_t t = model.schedule.steps; t >= 1; --t)
      x = reverse_step(model, x, t, rng, noise_scale);
    if (clamp_output)
      for (double& v : x) v = std::min(1.0, std::max(-1.0, v));
    out.push_back(std::move(x));
  }
  return out;
}

inline double log_normal_pdf(double x, double mu, double var) {
  static const double kLog2Pi = std::log(2.0 * 3.14159265358979323846);
  const double d = x - mu;
  return -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Log-likelihood of one pixel under a Gaussian integrated over its
// quantization bin. Levels live at 2k/255 - 1 with half-width 1/255; the
// edge bins absorb the tails.
inline double discrete_gaussian_log_prob(double x, double mu, double sd) {
  const double half = 1.0 / 255.0;
  const double hi = x >= 1.0 - half ? 1.0 : normal_cdf((x + half - mu) / sd);
  const double lo = x <= -1.0 + half ? 0.0 : normal_cdf((x - half - mu) / sd);
  return std::log(std::max(hi - lo, 1e-12));
}

// Full variational bound in nats for one example, generic over the noise
// predictor. Estimated with 4 noise draws per timestep term from a dedicated
// Rng(seed), so the value is a pure function of (predictor, x0, seed): t = 1
// decoder draws first, then t = 2..T in order, then the closed-form prior KL.
// eps_batch(xts, t) returns the kDraws*dim predicted-noise block for the
// given noisy draws; swapping in an analytic predictor turns the same
// estimator into a likelihood reference.
template <typename EpsBatchFn>
double elbo_nats_with(const NoiseSchedule& sched, DecoderMode decoder, std::size_t dim,
                      const std::vector<double>& x0, std::uint64_t seed, EpsBatchFn&& eps_batch) {
  if (x0.size() != dim) throw std::invalid_argument("elbo_nats: dim mismatch");
  constexpr std::size_t kDraws = 4;
  Rng rng(seed);

  std::vector<std::vector<double>> xts(kDraws);
  auto fill_draws = [&](std::size_t t) {
    for (std::size_t k = 0; k < kDraws; ++k)
      xts[k] = forward_sample(sched, x0, t, rng.gaussian_vector(dim));
    return eps_batch(xts, t);
  };

  double total = 0.0;

  {  // decoder term -log p(x0 | x1), Gaussian with variance beta_1
    const std::vector<double> eps_hat = fill_draws(1);
    const double var = sched.beta_at(1);
    const double sd = std::sqrt(var);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(1));
    const double coef = sched.beta_at(1) / std::sqrt(1.0 - sched.abar(1));
    double acc = 0.0;
    for (std::size_t k = 0; k < kDraws; ++k) {
      double lp = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double mu = inv_sqrt_alpha * (xts[k][i] - coef * eps_hat[k * dim + i]);
        lp += decoder == DecoderMode::discrete_256 ? discrete_gaussian_log_prob(x0[i], mu, sd)
                                                   : log_normal_pdf(x0[i], mu, var);
      }
      acc += -lp;
    }
    total += acc / kDraws;
  }

  for (std::size_t t = 2; t <= sched.steps; ++t) {
    // Equal variances on both sides, so the KL is |mu_tilde - mu_theta|^2
    // over twice the posterior variance.
    const std::vector<double> eps_hat = fill_draws(t);
    const double denom = 2.0 * sched.posterior_var_at(t);
    const double abar_t = sched.abar(t);
    const double abar_prev = sched.abar(t - 1);
    const double beta_t = sched.beta_at(t);
    const double c0 = std::sqrt(abar_prev) * beta_t / (1.0 - abar_t);
    const double ct = std::sqrt(sched.alpha_at(t)) * (1.0 - abar_prev) / (1.0 - abar_t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
    const double coef = beta_t / std::sqrt(1.0 - abar_t);
    double acc = 0.0;
    for (std::size_t k = 0; k < kDraws; ++k) {
      double sq = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double mu_q = c0 * x0[i] + ct * xts[k][i];
        const double mu_p = inv_sqrt_alpha * (xts[k][i] - coef * eps_hat[k * dim + i]);
        const double d = mu_q - mu_p;
        sq += d * d;
      }
      acc += sq / denom;
    }
    total += acc / kDraws;
  }

  {  // KL(q(x_T | x0) || N(0, I)) in closed form
    const double abar_T = sched.abar(sched.steps);
    double sq = 0.0;
    for (double v : x0) sq += v * v;
    const double d = static_cast<double>(dim);
    total += 0.5 * (abar_T * sq + d * ((1.0 - abar_T) - 1.0 - std::log(1.0 - abar_T)));
  }
  return total;
}

inline double elbo_nats(const DiffusionModel& model, const std::vector<double>& x0,
                        std::uint64_t seed) {
  const std::size_t dim = model.data_dim;
  const std::size_t in_dim = dim + model.embed.dim;
  constexpr std::size_t kDraws = 4;
  std::vector<double> flat(kDraws * in_dim);
  auto eps_batch = [&](const std::vector<std::vector<double>>& xts, std::size_t t) {
    for (std::size_t k = 0; k < kDraws; ++k) {
      double* row = &flat[k * in_dim];
      for (std::size_t i = 0; i < dim; ++i) row[i] = xts[k][i];
      model.embed.write(t, row + dim);
    }
    return model.denoiser.forward_batch(flat, kDraws);
  };
  return elbo_nats_with(model.schedule, model.decoder, dim, x0, seed, eps_batch);
}

constexpr std::uint64_t kElboSeed = 1234567;

inline double elbo_bpd(const DiffusionModel& model, const std::vector<double>& x0,
                       std::uint64_t seed = kElboSeed) {
  return elbo_nats(model, x0, seed) /
         (static_cast<double>(model.data_dim) * std::log(2.0));
}

inline DiffusionModel make_diffusion_model(std::size_t data_dim,
                                           const std::vector<std::size_t>& hidden,
                                           const NoiseSchedule& schedule, DecoderMode decoder,
                                           Rng& rng, std::size_t embed_dim = 16) {
  DiffusionModel m;
  m.schedule = schedule;
  m.embed = TimeEmbedding{embed_dim};
  m.data_dim = data_dim;
  m.decoder = decoder;
  std::vector<std::size_t> dims;
  dims.push_back(data_dim + embed_dim);
  for (std::size_t h : hidden) dims.push_back(h);
  dims.push_back(data_dim);
  std::vector<Activation> acts(dims.size() - 1, Activation::softplus);
  acts.back() = Activation::linear;
  m.denoiser = make_dense_net(dims, acts, rng);
  m.validate();
  return m;
}

}  // namespace diffex
