#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "diffex/gmm.hpp"
#include "diffex/rng.hpp"

using namespace diffex;

namespace {

Gmm2dSpec standard_normal_spec() {
  Gmm2dSpec s;
  s.components.push_back(GmmComponent{1.0, {0.0, 0.0}, {1.0, 1.0}});
  return s;
}

Gmm2dSpec three_mode_spec() {
  Gmm2dSpec s;
  s.components.push_back(GmmComponent{0.2, {-0.6, -0.6}, {0.02, 0.02}});
  s.components.push_back(GmmComponent{0.3, {0.6, -0.6}, {0.02, 0.02}});
  s.components.push_back(GmmComponent{0.5, {0.0, 0.6}, {0.02, 0.02}});
  return s;
}

}  // namespace

TEST_CASE("gmm: validate rejects bad specs") {
  Gmm2dSpec empty;
  CHECK_THROWS_AS(empty.validate(), std::invalid_argument);

  Gmm2dSpec bad_sum;
  bad_sum.components.push_back(GmmComponent{0.5, {0, 0}, {1, 1}});
  CHECK_THROWS_AS(bad_sum.validate(), std::invalid_argument);

  Gmm2dSpec neg_var;
  neg_var.components.push_back(GmmComponent{1.0, {0, 0}, {-1, 1}});
  CHECK_THROWS_AS(neg_var.validate(), std::invalid_argument);

  CHECK_NOTHROW(three_mode_spec().validate());
}

TEST_CASE("gmm: single standard normal at the origin gives -ln(2 pi)") {
  const auto s = standard_normal_spec();
  const std::vector<double> origin{0.0, 0.0};
  CHECK(gmm_logpdf(s, origin) == Catch::Approx(-std::log(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("gmm: two-component symmetric mixture at the midpoint, by hand") {
  // Components at (-a, 0) and (a, 0), unit variance, equal weight. At the
  // origin both densities equal (2 pi)^-1 exp(-a^2/2), so the mixture is
  // that same value and the half weights cancel.
  const double a = 1.5;
  Gmm2dSpec s;
  s.components.push_back(GmmComponent{0.5, {-a, 0.0}, {1.0, 1.0}});
  s.components.push_back(GmmComponent{0.5, {a, 0.0}, {1.0, 1.0}});
  const std::vector<double> mid{0.0, 0.0};
  const double by_hand = -std::log(2.0 * M_PI) - 0.5 * a * a;
  CHECK(gmm_logpdf(s, mid) == Catch::Approx(by_hand).epsilon(1e-12));
}

TEST_CASE("gmm: logpdf matches a direct two-term sum on a random spec") {
  Gmm2dSpec s;
  s.components.push_back(GmmComponent{0.35, {0.4, -0.2}, {0.5, 0.25}});
  s.components.push_back(GmmComponent{0.65, {-0.7, 0.9}, {2.0, 0.75}});
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> p{3.0 * (rng.uniform() - 0.5), 3.0 * (rng.uniform() - 0.5)};
    double direct = 0.0;
    for (const auto& c : s.components) {
      double dens = c.weight;
      for (int i = 0; i < 2; ++i) {
        const double d = p[i] - c.mean[i];
        dens *= std::exp(-0.5 * d * d / c.var[i]) / std::sqrt(2.0 * M_PI * c.var[i]);
      }
      direct += dens;
    }
    CHECK(gmm_logpdf(s, p) == Catch::Approx(std::log(direct)).epsilon(1e-10));
  }
}

TEST_CASE("gmm: density integrates to 1 over a wide grid") {
  const auto s = three_mode_spec();
  // +-6 sigma around every mode is covered by [-2, 2]^2 here
  // (sigma about 0.14, means within +-0.6).
  const int n = 400;
  const double lo = -2.0, hi = 2.0;
  const double h = (hi - lo) / n;
  double mass = 0.0;
  std::vector<double> p(2);
  for (int i = 0; i < n; ++i) {
    p[0] = lo + (i + 0.5) * h;
    for (int j = 0; j < n; ++j) {
      p[1] = lo + (j + 0.5) * h;
      mass += std::exp(gmm_logpdf(s, p)) * h * h;
    }
  }
  CHECK(std::abs(mass - 1.0) < 1e-3);
}

TEST_CASE("gmm: sampling is deterministic under a fixed seed") {
  const auto s = three_mode_spec();
  Rng a(99), b(99);
  const auto xs = gmm_sample(s, 32, a);
  const auto ys = gmm_sample(s, 32, b);
  REQUIRE(xs.size() == ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CHECK(xs[i][0] == ys[i][0]);
    CHECK(xs[i][1] == ys[i][1]);
  }
}

TEST_CASE("gmm: component occupancy matches the weights over 100k samples") {
  const auto s = three_mode_spec();
  Rng rng(7);
  const auto xs = gmm_sample(s, 100000, rng);
  std::map<std::size_t, std::size_t> counts;
  for (const auto& x : xs) counts[gmm_nearest_mode(s, x)]++;
  // Modes are ~8 sigma apart, so nearest-mode assignment recovers the
  // drawing component essentially always.
  for (std::size_t c = 0; c < s.components.size(); ++c) {
    const double frac = static_cast<double>(counts[c]) / xs.size();
    CHECK(std::abs(frac - s.components[c].weight) < 0.01);
  }
}

TEST_CASE("gmm: nearest mode picks the component with the highest density") {
  const auto s = three_mode_spec();
  CHECK(gmm_nearest_mode(s, {-0.6, -0.6}) == 0);
  CHECK(gmm_nearest_mode(s, {0.6, -0.6}) == 1);
  CHECK(gmm_nearest_mode(s, {0.05, 0.55}) == 2);
}
