#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffex/classifier.hpp"
#include "diffex/diffusion.hpp"
#include "diffex/png.hpp"

namespace diffex {

// Mean absolute per-dimension difference. Callers feed [0,1]-scale pixels;
// the function itself is scale-agnostic.
inline double closeness(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("closeness: shape mismatch");
  if (a.empty()) throw std::invalid_argument("closeness: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / a.size();
}

// Target-class confidence under the classifier.
inline double validity(const Classifier& clf, const std::vector<double>& x,
                       std::size_t y_target) {
  if (y_target >= clf.num_classes)
    throw std::invalid_argument("validity: label out of range");
  return clf.probabilities(x)[y_target];
}

// bpd(x_hat) - bpd(x_star) with both bounds evaluated on the same noise
// draws, so identical inputs give exactly zero.
inline double fidelity_extra_bpd(const DiffusionModel& model, const std::vector<double>& x_hat,
                                 const std::vector<double>& x_star,
                                 std::uint64_t seed = kElboSeed) {
  return elbo_bpd(model, x_hat, seed) - elbo_bpd(model, x_star, seed);
}

struct Thresholds {
  double delta = 0.25;
  double epsilon_bpd = 0.0;

  void validate() const {
    if (!(delta > 0.0) || !std::isfinite(delta))
      throw std::invalid_argument("Thresholds: delta must be positive and finite");
    if (!(epsilon_bpd > 0.0) || !std::isfinite(epsilon_bpd))
      throw std::invalid_argument("Thresholds: epsilon_bpd must be positive and finite");
  }
};

// mean + 2 * population std of the calibration bpds.
inline double threshold_from_bpds(const std::vector<double>& bpds) {
  if (bpds.empty()) throw std::invalid_argument("threshold_from_bpds: empty input");
  double mean = 0.0;
  for (double v : bpds) mean += v;
  mean /= bpds.size();
  double var = 0.0;
  for (double v : bpds) var += (v - mean) * (v - mean);
  var /= bpds.size();
  return mean + 2.0 * std::sqrt(var);
}

// Fidelity threshold from held-out real data: examples costing more bits
// than epsilon_bpd count as low-fidelity. delta stays user-configured.
inline Thresholds calibrate_thresholds(const DiffusionModel& model,
                                       const std::vector<std::vector<double>>& calibration,
                                       double delta = 0.25, std::uint64_t seed = kElboSeed) {
  if (calibration.size() < 200)
    throw std::invalid_argument("calibrate_thresholds: need at least 200 examples");
  std::vector<double> bpds;
  bpds.reserve(calibration.size());
  for (const auto& x : calibration) bpds.push_back(elbo_bpd(model, x, seed));
  Thresholds t;
  t.delta = delta;
  t.epsilon_bpd = threshold_from_bpds(bpds);
  t.validate();
  return t;
}

enum class Verdict { counterfactual, adversarial, affirmative, none };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::counterfactual: return "counterfactual";
    case Verdict::adversarial: return "adversarial";
    case Verdict::affirmative: return "affirmative";
    case Verdict::none: return "none";
  }
  return "?";
}

// Whether the example is judged as an explanation of x_star (counterfactual
// family) or of a previous counterfactual (affirmative).
enum class QueryKind { counterfactual, affirmative };

struct ExampleVerdict {
  bool close = false;
  bool valid = false;
  bool high_fidelity = false;
  Verdict verdict = Verdict::none;
};

// The decision core: a pure function of the three criterion booleans plus
// the query context. Flipping high_fidelity alone swaps counterfactual and
// adversarial; nothing else moves.
inline Verdict verdict_from_flags(bool close, bool valid, bool high_fidelity,
                                  bool targets_differ, QueryKind kind) {
  if (kind == QueryKind::affirmative)
    return close && valid && high_fidelity ? Verdict::affirmative : Verdict::none;
  if (!targets_differ) return Verdict::none;  // a counterfactual must change the class
  if (close && valid) return high_fidelity ? Verdict::counterfactual : Verdict::adversarial;
  return Verdict::none;
}

// Verdict from already-measured metric values.
inline ExampleVerdict classify_example(double closeness_value, bool argmax_on_target, double bpd,
                                       bool targets_differ, const Thresholds& thr,
                                       QueryKind kind = QueryKind::counterfactual) {
  thr.validate();
  ExampleVerdict v;
  v.close = closeness_value <= thr.delta;
  v.valid = argmax_on_target;
  v.high_fidelity = bpd <= thr.epsilon_bpd;
  v.verdict = verdict_from_flags(v.close, v.valid, v.high_fidelity, targets_differ, kind);
  return v;
}

// Everything the report needs for one generated example. Inputs are on the
// model scale; closeness is measured after mapping to [0,1].
struct ExampleMetrics {
  double closeness = 0.0;
  double validity = 0.0;
  double extra_bpd = 0.0;
  double bpd = 0.0;
  ExampleVerdict verdict;
};

inline ExampleMetrics evaluate_example(const DiffusionModel& model, const Classifier& clf,
                                       const std::vector<double>& x_hat,
                                       const std::vector<double>& reference,
                                       std::size_t y_target, std::size_t y_original,
                                       const Thresholds& thr,
                                       QueryKind kind = QueryKind::counterfactual,
                                       std::uint64_t seed = kElboSeed) {
  thr.validate();
  ExampleMetrics m;
  m.closeness = closeness(model_to_unit(x_hat), model_to_unit(reference));
  m.validity = validity(clf, x_hat, y_target);
  m.bpd = elbo_bpd(model, x_hat, seed);
  m.extra_bpd = m.bpd - elbo_bpd(model, reference, seed);
  m.verdict.close = m.closeness <= thr.delta;
  m.verdict.valid = clf.predict(x_hat) == y_target;
  m.verdict.high_fidelity = m.bpd <= thr.epsilon_bpd;
  m.verdict.verdict = verdict_from_flags(m.verdict.close, m.verdict.valid,
                                         m.verdict.high_fidelity, y_target != y_original, kind);
  return m;
}

// Verdict straight from the example; reference is x_star for counterfactual
// queries and the prior counterfactual for affirmative ones.
inline ExampleVerdict classify_example(const DiffusionModel& model, const Classifier& clf,
                                       const std::vector<double>& x_hat,
                                       const std::vector<double>& reference, std::size_t y_target,
                                       std::size_t y_original, const Thresholds& thr,
                                       QueryKind kind = QueryKind::counterfactual,
                                       std::uint64_t seed = kElboSeed) {
  return evaluate_example(model, clf, x_hat, reference, y_target, y_original, thr, kind, seed)
      .verdict;
}

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("aggregate: empty input");
  Aggregate a;
  for (double v : values) a.mean += v;
  a.mean /= values.size();
  double var = 0.0;
  for (double v : values) var += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(var / values.size());
  return a;
}

}  // namespace diffex
