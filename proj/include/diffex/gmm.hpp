#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "diffex/nn.hpp"
#include "diffex/rng.hpp"

namespace diffex {

// Diagonal-covariance 2-D Gaussian mixture. Exists as an analytic
// likelihood oracle: the diffusion bound gets checked against
// gmm_logpdf, which is exact.
struct GmmComponent {
  double weight = 1.0;
  double mean[2] = {0.0, 0.0};
  double var[2] = {1.0, 1.0};
};

struct Gmm2dSpec {
  std::vector<GmmComponent> components;

  void validate() const {
    if (components.empty()) throw std::invalid_argument("Gmm2dSpec: no components");
    double sum = 0.0;
    for (const auto& c : components) {
      if (!(c.weight > 0.0)) throw std::invalid_argument("Gmm2dSpec: weights must be positive");
      if (!(c.var[0] > 0.0 && c.var[1] > 0.0))
        throw std::invalid_argument("Gmm2dSpec: variances must be positive");
      sum += c.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("Gmm2dSpec: weights must sum to 1");
  }
};

inline double gmm_logpdf(const Gmm2dSpec& spec, const double* p) {
  static const double kLog2Pi = std::log(2.0 * 3.14159265358979323846);
  std::vector<double> terms;
  terms.reserve(spec.components.size());
  for (const auto& c : spec.components) {
    double lp = std::log(c.weight);
    for (int d = 0; d < 2; ++d) {
      const double diff = p[d] - c.mean[d];
      lp += -0.5 * (kLog2Pi + std::log(c.var[d])) - diff * diff / (2.0 * c.var[d]);
    }
    terms.push_back(lp);
  }
  return log_sum_exp(terms);
}

inline double gmm_logpdf(const Gmm2dSpec& spec, const std::vector<double>& p) {
  if (p.size() != 2) throw std::invalid_argument("gmm_logpdf: point must be 2-D");
  return gmm_logpdf(spec, p.data());
}

// Component draw by cumulative weight, then a diagonal Gaussian draw.
// Consumes 1 uniform + 2 gaussians per point.
inline std::vector<std::vector<double>> gmm_sample(const Gmm2dSpec& spec, std::size_t n,
                                                   Rng& rng) {
  spec.validate();
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = spec.components.size() - 1;
    for (std::size_t c = 0; c < spec.components.size(); ++c) {
      acc += spec.components[c].weight;
      if (u <= acc) {
        k = c;
        break;
      }
    }
    const GmmComponent& comp = spec.components[k];
    std::vector<double> p(2);
    for (int d = 0; d < 2; ++d)
      p[d] = comp.mean[d] + std::sqrt(comp.var[d]) * rng.gaussian();
    out.push_back(std::move(p));
  }
  return out;
}

// Index of the component whose mean is nearest (euclidean); used for
// crude mode-occupancy counts on sampled points.
inline std::size_t gmm_nearest_mode(const Gmm2dSpec& spec, const std::vector<double>& p) {
  if (p.size() != 2) throw std::invalid_argument("gmm_nearest_mode: point must be 2-D");
  std::size_t best = 0;
  double best_d = 0.0;
  for (std::size_t c = 0; c < spec.components.size(); ++c) {
    const double dx = p[0] - spec.components[c].mean[0];
    const double dy = p[1] - spec.components[c].mean[1];
    const double d = dx * dx + dy * dy;
    if (c == 0 || d < best_d) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

}  // namespace diffex
