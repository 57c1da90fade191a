#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffex/classifier.hpp"
#include "diffex/diffusion.hpp"
#include "diffex/guidance.hpp"

namespace diffex {

// What to generate against a given original. The ablation modes drop one
// guidance term each; the adversarial baseline skips the diffusion model
// entirely and attacks the classifier in pixel space.
enum class ExplainMode {
  counterfactual,
  affirmative,
  cf_no_closeness,
  cf_no_validity,
  adversarial_baseline,
};

inline const char* to_string(ExplainMode m) {
  switch (m) {
    case ExplainMode::counterfactual: return "counterfactual";
    case ExplainMode::affirmative: return "affirmative";
    case ExplainMode::cf_no_closeness: return "cf_no_closeness";
    case ExplainMode::cf_no_validity: return "cf_no_validity";
    case ExplainMode::adversarial_baseline: return "adversarial_baseline";
  }
  return "?";
}

inline ExplainMode parse_explain_mode(const std::string& s) {
  if (s == "counterfactual" || s == "cf") return ExplainMode::counterfactual;
  if (s == "affirmative") return ExplainMode::affirmative;
  if (s == "cf_no_closeness") return ExplainMode::cf_no_closeness;
  if (s == "cf_no_validity") return ExplainMode::cf_no_validity;
  if (s == "adversarial_baseline" || s == "adversarial") return ExplainMode::adversarial_baseline;
  throw std::invalid_argument("unknown explain mode: " + s);
}

struct ExplanationJob {
  std::vector<double> x_star;  // original example, model scale [-1, 1]
  std::size_t original_label = 0;
  std::size_t target_label = 1;
  ExplainMode mode = ExplainMode::counterfactual;
  std::size_t count = 16;
  GuidanceConfig config;
  std::uint64_t seed = 0;
  // Affirmative mode explains a previously generated counterfactual; this is
  // that counterfactual, used as the closeness reference.
  std::vector<double> cf_reference;
  // Pixel-space baseline knobs.
  double adv_step_size = 0.01;
  std::size_t adv_steps = 500;

  void validate(std::size_t data_dim, std::size_t num_classes) const {
    if (x_star.size() != data_dim)
      throw std::invalid_argument("ExplanationJob: x_star size mismatch");
    if (original_label >= num_classes || target_label >= num_classes)
      throw std::invalid_argument("ExplanationJob: label out of range");
    if (count == 0) throw std::invalid_argument("ExplanationJob: count must be positive");
    const bool cf_family = mode == ExplainMode::counterfactual ||
                           mode == ExplainMode::cf_no_closeness ||
                           mode == ExplainMode::cf_no_validity ||
                           mode == ExplainMode::adversarial_baseline;
    if (cf_family && target_label == original_label)
      throw std::invalid_argument("ExplanationJob: target label must differ from the original");
    if (mode == ExplainMode::affirmative && cf_reference.size() != data_dim)
      throw std::invalid_argument("ExplanationJob: affirmative mode needs a counterfactual reference");
  }
};

// The class the generated examples are steered toward (and judged against):
// the target label, except for affirmatives, which steer back to the original.
inline std::size_t validity_target(const ExplanationJob& job) {
  return job.mode == ExplainMode::affirmative ? job.original_label : job.target_label;
}

// The example the generated outputs should stay close to.
inline const std::vector<double>& closeness_reference(const ExplanationJob& job) {
  return job.mode == ExplainMode::affirmative ? job.cf_reference : job.x_star;
}

inline GuidanceConfig job_guidance_config(const ExplanationJob& job) {
  GuidanceConfig cfg = job.config;
  cfg.target_class = validity_target(job);
  cfg.reference = closeness_reference(job);
  cfg.use_validity = job.mode != ExplainMode::cf_no_validity;
  cfg.use_closeness = job.mode != ExplainMode::cf_no_closeness;
  return cfg;
}

// Run one job. Every mode returns `count` examples in [-1, 1]; the pixel
// baseline is deterministic given x_star, so its examples are all equal.
inline std::vector<std::vector<double>> generate(const DiffusionModel& model,
                                                 const Classifier& clf,
                                                 const ExplanationJob& job) {
  job.validate(model.data_dim, clf.num_classes);
  if (job.mode == ExplainMode::adversarial_baseline) {
    const AdversarialResult r =
        pixel_adversarial(clf, job.x_star, job.target_label, job.adv_step_size, job.adv_steps);
    return std::vector<std::vector<double>>(job.count, r.x);
  }
  return guided_generate(model, clf, job_guidance_config(job), job.count, job.seed);
}

}  // namespace diffex
