#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "diffex/classifier.hpp"
#include "diffex/diffusion.hpp"
#include "diffex/explainer.hpp"
#include "diffex/gmm.hpp"
#include "diffex/guidance.hpp"
#include "diffex/rng.hpp"

using namespace diffex;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Denoiser that always outputs zero, so predict_x0 is x_t / sqrt(abar).
DiffusionModel zero_denoiser_model(std::size_t dim, std::size_t steps) {
  DiffusionModel m;
  m.schedule = NoiseSchedule::linear(steps, 1e-4, 0.02);
  m.embed = TimeEmbedding{8};
  m.data_dim = dim;
  m.decoder = DecoderMode::continuous;
  DenseLayer l;
  l.in = dim + 8;
  l.out = dim;
  l.act = Activation::linear;
  l.w.assign(l.out * l.in, 0.0);
  l.b.assign(l.out, 0.0);
  m.denoiser.layers.push_back(l);
  m.validate();
  return m;
}

// Scalar objective the guidance gradient claims to differentiate.
double guidance_objective(const DiffusionModel& m, const Classifier& clf,
                          const std::vector<double>& x_t, std::size_t t,
                          const GuidanceConfig& cfg) {
  const auto x0 = predict_x0(m, x_t, t);
  double J = 0.0;
  if (cfg.use_validity) J += cfg.lambda * clf.log_prob(x0, cfg.target_class);
  if (cfg.use_closeness)
    for (std::size_t i = 0; i < x0.size(); ++i) J -= std::abs(x0[i] - cfg.reference[i]);
  return J;
}

struct TrainedToy {
  DiffusionModel model;
  std::vector<std::vector<double>> data;
};

const TrainedToy& trained_toy() {
  static TrainedToy* fixture = [] {
    auto* f = new TrainedToy;
    Gmm2dSpec spec;
    spec.components.push_back(GmmComponent{0.2, {-0.6, -0.6}, {0.02, 0.02}});
    spec.components.push_back(GmmComponent{0.3, {0.6, -0.6}, {0.02, 0.02}});
    spec.components.push_back(GmmComponent{0.5, {0.0, 0.6}, {0.02, 0.02}});
    Rng data_rng(11);
    f->data = gmm_sample(spec, 2048, data_rng);
    Rng init(12);
    f->model = make_diffusion_model(2, {32, 32}, NoiseSchedule::linear(200, 1e-4, 0.02),
                                    DecoderMode::continuous, init);
    DenseNetAdam opt(f->model.denoiser, AdamParams{1e-3, 0.9, 0.999, 1e-8});
    Rng tr(13);
    std::vector<const std::vector<double>*> batch(32);
    for (int s = 0; s < 4000; ++s) {
      for (auto& p : batch) p = &f->data[tr.bounded(f->data.size())];
      ddpm_train_step(f->model, batch, tr, opt);
    }
    return f;
  }();
  return *fixture;
}

}  // namespace

TEST_CASE("guidance config: validation errors") {
  GuidanceConfig cfg;
  cfg.reference.assign(2, 0.0);
  CHECK_NOTHROW(cfg.validate(2, 2));

  GuidanceConfig bad_target = cfg;
  bad_target.target_class = 5;
  CHECK_THROWS_AS(bad_target.validate(2, 2), std::invalid_argument);

  GuidanceConfig bad_ref = cfg;
  bad_ref.reference.assign(3, 0.0);
  CHECK_THROWS_AS(bad_ref.validate(2, 2), std::invalid_argument);

  GuidanceConfig bad_lambda = cfg;
  bad_lambda.lambda = -0.1;
  CHECK_THROWS_AS(bad_lambda.validate(2, 2), std::invalid_argument);
}

TEST_CASE("guidance gradient: closeness term alone vanishes when x0_hat equals the reference") {
  auto m = zero_denoiser_model(2, 50);
  Rng rng(21);
  auto clf = make_vector_classifier(2, 2, rng);
  const std::size_t t = 10;
  const std::vector<double> x_star{0.3, -0.4};
  std::vector<double> x_t(2);
  const double s = std::sqrt(m.schedule.abar(t));
  for (int i = 0; i < 2; ++i) x_t[i] = s * x_star[i];

  GuidanceConfig cfg;
  cfg.use_validity = false;
  cfg.reference = x_star;
  const auto g = guidance_gradient(m, clf, x_t, t, cfg);
  for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("guidance gradient: lambda zero isolates the closeness term") {
  Rng rng(22);
  auto m = make_diffusion_model(3, {16}, NoiseSchedule::linear(60, 1e-4, 0.02),
                                DecoderMode::continuous, rng, 8);
  auto clf = make_vector_classifier(3, 2, rng);
  const std::vector<double> x_t{0.2, -0.5, 0.1};
  const std::size_t t = 30;

  GuidanceConfig with_lambda0;
  with_lambda0.lambda = 0.0;
  with_lambda0.target_class = 1;
  with_lambda0.reference = {0.05, 0.0, -0.07};

  GuidanceConfig closeness_only = with_lambda0;
  closeness_only.use_validity = false;

  const auto a = guidance_gradient(m, clf, x_t, t, with_lambda0);
  const auto b = guidance_gradient(m, clf, x_t, t, closeness_only);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Catch::Approx(b[i]).margin(1e-14));
}

TEST_CASE("guidance gradient: matches central finite differences away from kinks") {
  Rng rng(23);
  const std::size_t dim = 4;
  auto m = make_diffusion_model(dim, {24, 24}, NoiseSchedule::linear(80, 1e-4, 0.02),
                                DecoderMode::continuous, rng, 8);
  auto clf = make_vector_classifier(dim, 3, rng);

  const double h = 1e-6;
  double worst = 0.0;
  int accepted = 0;
  for (int probe = 0; accepted < 100 && probe < 1000; ++probe) {
    const std::size_t t = 1 + rng.bounded(m.schedule.steps);
    std::vector<double> x_t(dim);
    for (auto& v : x_t) v = 0.6 * rng.gaussian();

    GuidanceConfig cfg;
    cfg.lambda = 0.3;
    cfg.target_class = rng.bounded(3);
    cfg.reference.assign(dim, 0.0);
    for (auto& v : cfg.reference) v = 0.5 * (rng.uniform() - 0.5);

    // Keep the probe away from the clamp boundary and the l1 kink, where
    // the one-sided subgradients make finite differences meaningless.
    const auto x0 = predict_x0_raw(m.schedule, x_t, t, m.eps_hat(x_t, t));
    bool ok = true;
    for (std::size_t i = 0; i < dim; ++i) {
      if (std::abs(x0[i]) > 0.95) ok = false;
      if (std::abs(std::min(1.0, std::max(-1.0, x0[i])) - cfg.reference[i]) < 1e-3) ok = false;
    }
    if (!ok) continue;
    ++accepted;

    const auto g = guidance_gradient(m, clf, x_t, t, cfg);
    for (std::size_t i = 0; i < dim; ++i) {
      auto xp = x_t, xm = x_t;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (guidance_objective(m, clf, xp, t, cfg) -
                         guidance_objective(m, clf, xm, t, cfg)) /
                        (2 * h);
      worst = std::max(worst, rel_err(g[i], fd));
    }
  }
  REQUIRE(accepted == 100);
  CHECK(worst < 1e-4);
}

TEST_CASE("guided step: both terms off reproduces reverse_step bitwise") {
  Rng rng(24);
  auto m = make_diffusion_model(2, {16}, NoiseSchedule::linear(40, 1e-4, 0.02),
                                DecoderMode::continuous, rng, 8);
  auto clf = make_vector_classifier(2, 2, rng);
  GuidanceConfig cfg;
  cfg.use_validity = false;
  cfg.use_closeness = false;

  for (std::size_t t : {std::size_t(1), std::size_t(2), std::size_t(20), std::size_t(40)}) {
    const std::vector<double> x_t{0.4, -0.9};
    Rng ra(100 + t), rb(100 + t);
    AdamState adam(2, cfg.adam);
    const auto guided = guided_reverse_step(m, clf, x_t, t, cfg, adam, ra);
    const auto plain = reverse_step(m, x_t, t, rb);
    for (std::size_t i = 0; i < 2; ++i) CHECK(guided[i] == plain[i]);
  }
}

TEST_CASE("guided step: identically zero gradient reproduces reverse_step bitwise") {
  // Zero denoiser and x0_hat == reference force g = 0; adam maps a zero
  // gradient to a zero update, so the shifted mean equals the plain mean.
  auto m = zero_denoiser_model(2, 50);
  Rng rng(25);
  auto clf = make_vector_classifier(2, 2, rng);
  const std::size_t t = 12;
  const std::vector<double> x_star{-0.2, 0.6};
  std::vector<double> x_t(2);
  for (int i = 0; i < 2; ++i) x_t[i] = std::sqrt(m.schedule.abar(t)) * x_star[i];

  GuidanceConfig cfg;
  cfg.use_validity = false;
  cfg.reference = x_star;
  AdamState adam(2, cfg.adam);
  Rng ra(7), rb(7);
  const auto guided = guided_reverse_step(m, clf, x_t, t, cfg, adam, ra);
  const auto plain = reverse_step(m, x_t, t, rb);
  for (std::size_t i = 0; i < 2; ++i) CHECK(guided[i] == plain[i]);
}

TEST_CASE("guided step: zero posterior variance leaves exactly the plain mean") {
  // t = 1 has Sigma = 0 and draws no noise, so the guided output must be
  // the posterior mean itself no matter what the gradient says.
  Rng rng(26);
  auto m = make_diffusion_model(2, {16}, NoiseSchedule::linear(40, 1e-4, 0.02),
                                DecoderMode::continuous, rng, 8);
  auto clf = make_vector_classifier(2, 2, rng);
  GuidanceConfig cfg;
  cfg.lambda = 5.0;
  cfg.target_class = 1;
  cfg.reference = {0.9, -0.9};

  const std::vector<double> x_t{0.1, 0.2};
  AdamState adam(2, cfg.adam);
  Rng ra(8);
  const auto guided = guided_reverse_step(m, clf, x_t, 1, cfg, adam, ra);
  const auto mu = posterior_mean_from_eps(m.schedule, x_t, 1, m.eps_hat(x_t, 1));
  for (std::size_t i = 0; i < 2; ++i) CHECK(guided[i] == mu[i]);
}

TEST_CASE("guided step: closeness-only guidance pulls x0_hat toward the reference") {
  const auto& f = trained_toy();
  const auto& m = f.model;
  Rng rng(27);
  auto clf = make_vector_classifier(2, 2, rng);

  const std::size_t t = 100;
  GuidanceConfig cfg;
  cfg.use_validity = false;

  // Paired comparison: from the same mid-chain state, a guided step vs a
  // plain step with the same noise; measure the l1 gap of the next x0_hat
  // to the reference. One-sided test at 3 standard errors over 1000 trials.
  double sum = 0.0, sumsq = 0.0;
  const int trials = 1000;
  Rng trial_rng(28);
  for (int k = 0; k < trials; ++k) {
    const auto& x0 = f.data[trial_rng.bounded(f.data.size())];
    const auto& x_ref = f.data[trial_rng.bounded(f.data.size())];
    cfg.reference = x_ref;
    const auto x_t = forward_sample(m.schedule, x0, t, trial_rng.gaussian_vector(2));

    const std::uint64_t noise_seed = child_seed(4242, k);
    Rng ra(noise_seed), rb(noise_seed);
    AdamState adam(2, cfg.adam);
    const auto xg = guided_reverse_step(m, clf, x_t, t, cfg, adam, ra);
    const auto xp = reverse_step(m, x_t, t, rb);

    const auto x0g = predict_x0(m, xg, t - 1);
    const auto x0p = predict_x0(m, xp, t - 1);
    double lg = 0.0, lp = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      lg += std::abs(x0g[i] - x_ref[i]);
      lp += std::abs(x0p[i] - x_ref[i]);
    }
    const double d = lg - lp;
    sum += d;
    sumsq += d * d;
  }
  const double mean = sum / trials;
  const double var = sumsq / trials - mean * mean;
  const double se = std::sqrt(var / trials);
  CHECK(mean < -3.0 * se);
}

TEST_CASE("guided generate: deterministic and clamped") {
  const auto& f = trained_toy();
  Rng rng(29);
  auto clf = make_vector_classifier(2, 2, rng);
  GuidanceConfig cfg;
  cfg.target_class = 1;
  cfg.reference = {0.0, 0.6};

  const auto a = guided_generate(f.model, clf, cfg, 4, 777);
  const auto b = guided_generate(f.model, clf, cfg, 4, 777);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      CHECK(a[i][j] == b[i][j]);
      CHECK(a[i][j] <= 1.0);
      CHECK(a[i][j] >= -1.0);
    }
}

TEST_CASE("pixel adversarial: already at the target returns the input untouched") {
  Rng rng(30);
  auto clf = make_vector_classifier(2, 2, rng);
  const std::vector<double> x{0.25, -0.75};
  const std::size_t label = clf.predict(x);
  const auto r = pixel_adversarial(clf, x, label, 0.05, 100);
  CHECK(r.flipped);
  CHECK(r.steps_used == 0);
  CHECK(r.x == x);
}

TEST_CASE("pixel adversarial: linear classifier moves along the weight difference") {
  // Two-class linear classifier: logits = W x + b. The log-prob gradient for
  // class 1 is (1 - p1) (w1 - w0), so every step is parallel to w1 - w0.
  Classifier clf;
  clf.num_classes = 2;
  DenseLayer l;
  l.in = 2;
  l.out = 2;
  l.act = Activation::linear;
  l.w = {1.0, -0.5, -0.2, 0.8};  // w0 = (1, -0.5), w1 = (-0.2, 0.8)
  l.b = {0.3, -0.3};
  clf.head.layers.push_back(l);
  clf.validate();

  const std::vector<double> start{0.4, -0.1};
  REQUIRE(clf.predict(start) == 0);

  const double wdiff[2] = {-0.2 - 1.0, 0.8 + 0.5};
  const double wnorm = std::sqrt(wdiff[0] * wdiff[0] + wdiff[1] * wdiff[1]);

  std::vector<double> x = start;
  for (int s = 0; s < 5; ++s) {
    const auto g = clf.grad_log_prob_input(x, 1);
    const double gnorm = std::sqrt(g[0] * g[0] + g[1] * g[1]);
    REQUIRE(gnorm > 0.0);
    const double cosine = (g[0] * wdiff[0] + g[1] * wdiff[1]) / (gnorm * wnorm);
    CHECK(cosine == Catch::Approx(1.0).epsilon(1e-9));
    for (int i = 0; i < 2; ++i) x[i] += 0.05 * g[i];
  }

  const auto r = pixel_adversarial(clf, start, 1, 0.05, 10000);
  CHECK(r.flipped);
  // The iterates stay on the start + span(w1 - w0) line.
  const double dx[2] = {r.x[0] - start[0], r.x[1] - start[1]};
  const double cross = dx[0] * wdiff[1] - dx[1] * wdiff[0];
  CHECK(std::abs(cross) < 1e-9);
}

TEST_CASE("explainer: job validation and mode wiring") {
  GuidanceConfig cfg;
  ExplanationJob job;
  job.x_star = {0.1, 0.2};
  job.original_label = 0;
  job.target_label = 1;
  job.config = cfg;

  CHECK_NOTHROW(job.validate(2, 2));
  CHECK(validity_target(job) == 1);
  CHECK(&closeness_reference(job) == &job.x_star);

  ExplanationJob same_label = job;
  same_label.target_label = 0;
  CHECK_THROWS_AS(same_label.validate(2, 2), std::invalid_argument);

  ExplanationJob aff = job;
  aff.mode = ExplainMode::affirmative;
  CHECK_THROWS_AS(aff.validate(2, 2), std::invalid_argument);  // no cf reference
  aff.cf_reference = {0.0, 0.0};
  CHECK_NOTHROW(aff.validate(2, 2));
  CHECK(validity_target(aff) == 0);
  CHECK(&closeness_reference(aff) == &aff.cf_reference);

  const auto wired = job_guidance_config(aff);
  CHECK(wired.target_class == 0);
  CHECK(wired.use_validity);
  CHECK(wired.use_closeness);

  ExplanationJob no_val = job;
  no_val.mode = ExplainMode::cf_no_validity;
  CHECK_FALSE(job_guidance_config(no_val).use_validity);
  ExplanationJob no_close = job;
  no_close.mode = ExplainMode::cf_no_closeness;
  CHECK_FALSE(job_guidance_config(no_close).use_closeness);
}

TEST_CASE("explainer: mode names round-trip") {
  for (ExplainMode m : {ExplainMode::counterfactual, ExplainMode::affirmative,
                        ExplainMode::cf_no_closeness, ExplainMode::cf_no_validity,
                        ExplainMode::adversarial_baseline})
    CHECK(parse_explain_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_explain_mode("bogus"), std::invalid_argument);
}

TEST_CASE("explainer: adversarial baseline returns count identical examples") {
  const auto& f = trained_toy();
  Rng rng(32);
  auto clf = make_vector_classifier(2, 2, rng);
  ExplanationJob job;
  job.x_star = f.data[0];
  job.original_label = clf.predict(job.x_star);
  job.target_label = 1 - job.original_label;
  job.mode = ExplainMode::adversarial_baseline;
  job.count = 5;

  const auto out = generate(f.model, clf, job);
  REQUIRE(out.size() == 5);
  for (const auto& x : out) CHECK(x == out[0]);
}
