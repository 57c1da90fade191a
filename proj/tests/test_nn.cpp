#include "catch_amalgamated.hpp"

#include <cmath>
#include <vector>

#include "diffex/adam.hpp"
#include "diffex/classifier.hpp"
#include "diffex/nn.hpp"
#include "diffex/rng.hpp"

using namespace diffex;

namespace {

DenseLayer layer(std::size_t in, std::size_t out, std::vector<double> w, std::vector<double> b,
                 Activation act) {
  DenseLayer l;
  l.in = in;
  l.out = out;
  l.w = std::move(w);
  l.b = std::move(b);
  l.act = act;
  return l;
}

// Central finite differences of objective(net(x)) wrt x.
std::vector<double> fd_input_grad(const DenseNet& net, std::vector<double> x,
                                  const Objective& obj, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = evaluate_objective(obj, net.forward(x));
    x[i] = keep - h;
    const double dn = evaluate_objective(obj, net.forward(x));
    x[i] = keep;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

double batch_mse(const DenseNet& net, const std::vector<std::vector<double>>& xs,
                 const std::vector<std::vector<double>>& ys) {
  double loss = 0.0;
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const auto out = net.forward(xs[b]);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double r = out[i] - ys[b][i];
      loss += r * r;
    }
  }
  return loss / static_cast<double>(xs.size());
}

double max_rel_err(const std::vector<double>& got, const std::vector<double>& want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double denom = std::max(1e-8, std::abs(want[i]));
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("forward: identity linear layer") {
  DenseNet net;
  net.layers.push_back(layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::linear));
  const auto y = net.forward({1.0, 2.0});
  REQUIRE(y == std::vector<double>{1.0, 2.0});
}

TEST_CASE("forward: relu sign gating") {
  DenseNet net;
  net.layers.push_back(layer(1, 2, {1, -1}, {0, 0}, Activation::relu));
  const auto y = net.forward({3.0});
  REQUIRE(y == std::vector<double>{3.0, 0.0});
}

TEST_CASE("forward: two layers against hand-computed affine maps") {
  // W1 (2x3), b1, then W2 (2x2), b2, both linear.
  DenseNet net;
  net.layers.push_back(layer(3, 2, {1, 2, 3, -1, 0.5, 4}, {0.1, -0.2}, Activation::linear));
  net.layers.push_back(layer(2, 2, {2, -1, 0.5, 0.25}, {1, -1}, Activation::linear));
  const std::vector<double> x = {0.3, -0.7, 0.2};
  const double h1 = 1 * 0.3 + 2 * -0.7 + 3 * 0.2 + 0.1;
  const double h2 = -1 * 0.3 + 0.5 * -0.7 + 4 * 0.2 - 0.2;
  const double y1 = 2 * h1 - 1 * h2 + 1;
  const double y2 = 0.5 * h1 + 0.25 * h2 - 1;
  const auto y = net.forward(x);
  CHECK(std::abs(y[0] - y1) < 1e-12);
  CHECK(std::abs(y[1] - y2) < 1e-12);
}

TEST_CASE("forward: repeated calls are pure") {
  Rng rng(11);
  const auto net = make_dense_net({4, 8, 3}, {Activation::tanh, Activation::linear}, rng);
  const std::vector<double> x = {0.1, -0.4, 0.9, 0.0};
  REQUIRE(net.forward(x) == net.forward(x));
}

TEST_CASE("grad_wrt_input: quadratic through identity net") {
  DenseNet net;
  net.layers.push_back(layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::linear));
  const auto g = grad_wrt_input(net, {3.0, -1.0}, Objective::half_squared_norm());
  REQUIRE(g == std::vector<double>{3.0, -1.0});
}

TEST_CASE("grad_wrt_input: log-softmax target on a 2-class linear classifier") {
  DenseNet net;
  net.layers.push_back(layer(3, 2, {0.7, -0.3, 0.2, -0.1, 0.9, 0.4}, {0.05, -0.6},
                             Activation::linear));
  const std::vector<double> x = {0.4, -1.2, 0.33};
  const Objective obj = Objective::log_softmax_target(1);
  const auto g = grad_wrt_input(net, x, obj);
  const auto fd = fd_input_grad(net, x, obj);
  REQUIRE(max_rel_err(g, fd) < 1e-6);
}

TEST_CASE("grad_wrt_input: l1 distance with x strictly above the reference") {
  DenseNet net;
  net.layers.push_back(layer(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0}, Activation::linear));
  const auto g = grad_wrt_input(net, {1.0, 2.0, 3.0}, Objective::l1_to({0.0, 1.0, 2.5}));
  REQUIRE(g == std::vector<double>(3, 1.0));
}

TEST_CASE("grad_wrt_params: zero-residual batch gives zero gradients") {
  DenseNet net;
  net.layers.push_back(layer(2, 1, {2, -1}, {0.5}, Activation::linear));
  const std::vector<std::vector<double>> xs = {{1.0, 1.0}, {-2.0, 0.5}};
  std::vector<std::vector<double>> ys;
  for (const auto& x : xs) ys.push_back(net.forward(x));
  const GradSet grads = grad_wrt_params_mse(net, xs, ys);
  for (const auto& lg : grads) {
    for (double v : lg.dw) CHECK(v == 0.0);
    for (double v : lg.db) CHECK(v == 0.0);
  }
}

TEST_CASE("grad_wrt_params: single linear neuron, squared loss closed form") {
  DenseNet net;
  net.layers.push_back(layer(3, 1, {0.2, -0.5, 1.1}, {0.3}, Activation::linear));
  const std::vector<double> x = {1.5, -0.4, 0.8};
  const std::vector<double> y = {2.0};
  const double residual = net.forward(x)[0] - y[0];
  const GradSet grads = grad_wrt_params_mse(net, {x}, {y});
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::abs(grads[0].dw[i] - 2.0 * residual * x[i]) < 1e-12);
  CHECK(std::abs(grads[0].db[0] - 2.0 * residual) < 1e-12);
}

TEST_CASE("grad_wrt_params: random 2-layer net matches finite differences") {
  Rng rng(7);
  DenseNet net = make_dense_net({3, 5, 2}, {Activation::tanh, Activation::linear}, rng);
  std::vector<std::vector<double>> xs, ys;
  for (int b = 0; b < 4; ++b) {
    xs.push_back(rng.gaussian_vector(3));
    ys.push_back(rng.gaussian_vector(2));
  }
  const GradSet grads = grad_wrt_params_mse(net, xs, ys);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    for (std::size_t i = 0; i < net.layers[li].w.size(); ++i) {
      double& p = net.layers[li].w[i];
      const double keep = p;
      p = keep + h;
      const double up = batch_mse(net, xs, ys);
      p = keep - h;
      const double dn = batch_mse(net, xs, ys);
      p = keep;
      const double fd = (up - dn) / (2.0 * h);
      worst = std::max(worst,
                       std::abs(grads[li].dw[i] - fd) / std::max(1e-8, std::abs(fd)));
    }
    for (std::size_t i = 0; i < net.layers[li].b.size(); ++i) {
      double& p = net.layers[li].b[i];
      const double keep = p;
      p = keep + h;
      const double up = batch_mse(net, xs, ys);
      p = keep - h;
      const double dn = batch_mse(net, xs, ys);
      p = keep;
      const double fd = (up - dn) / (2.0 * h);
      worst = std::max(worst,
                       std::abs(grads[li].db[i] - fd) / std::max(1e-8, std::abs(fd)));
    }
  }
  REQUIRE(worst < 1e-5);
}

TEST_CASE("softmax is a probability vector") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = softmax(rng.gaussian_vector(6));
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("adam: first step moves by about -lr in the gradient's sign") {
  AdamState s(3, AdamParams{0.01, 0.9, 0.999, 1e-8});
  const auto u = adam_step(s, {5.0, -2.0, 0.7});
  for (std::size_t i = 0; i < 3; ++i) {
    const double want = i == 1 ? 0.01 : -0.01;
    CHECK(std::abs(u[i] - want) < 1e-6);
  }
  CHECK(s.step_count == 1);
}

TEST_CASE("adam: zero gradient at step one yields zero update") {
  AdamState s(2, AdamParams{0.1, 0.9, 0.999, 1e-8});
  const auto u = adam_step(s, {0.0, 0.0});
  CHECK(u == std::vector<double>{0.0, 0.0});
}

TEST_CASE("adam: 100 steps on x^2 from x=1 against a scalar reference recurrence") {
  // Independent simulation of the same update rule, scalars only.
  double rx = 1.0, rm = 0.0, rv = 0.0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int k = 1; k <= 100; ++k) {
    const double g = 2.0 * rx;
    rm = b1 * rm + (1 - b1) * g;
    rv = b2 * rv + (1 - b2) * g * g;
    rx += -lr * (rm / (1 - std::pow(b1, k))) / (std::sqrt(rv / (1 - std::pow(b2, k))) + eps);
  }
  AdamState s(1, AdamParams{0.1, 0.9, 0.999, 1e-8});
  double x = 1.0;
  for (int k = 0; k < 100; ++k) x += adam_step(s, {2.0 * x})[0];
  CHECK(std::abs(x - rx) < 1e-12);
  CHECK(std::abs(x) < 0.05);
}

TEST_CASE("adam: identical gradient streams keep two states bitwise equal") {
  AdamState a(4, AdamParams{0.003, 0.9, 0.999, 1e-8});
  AdamState b(4, AdamParams{0.003, 0.9, 0.999, 1e-8});
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const auto g = rng.gaussian_vector(4);
    const auto ua = adam_step(a, g);
    const auto ub = adam_step(b, g);
    REQUIRE(ua == ub);
  }
  REQUIRE(a.m == b.m);
  REQUIRE(a.v == b.v);
}

TEST_CASE("input gradients match finite differences on random dense nets") {
  Rng rng(2024);
  const auto net =
      make_dense_net({6, 10, 10, 4}, {Activation::softplus, Activation::tanh, Activation::linear},
                     rng);
  const Objective obj = Objective::half_squared_norm();
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = rng.gaussian_vector(6);
    const auto g = grad_wrt_input(net, x, obj);
    const auto fd = fd_input_grad(net, x, obj);
    REQUIRE(max_rel_err(g, fd) < 1e-4);
  }
}

TEST_CASE("classifier gradient of the target log-probability matches finite differences") {
  Rng rng(31);
  Classifier clf = make_vector_classifier(5, 3, rng);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = rng.gaussian_vector(5);
    const auto g = clf.grad_log_prob_input(x, 2);
    std::vector<double> fd(x.size());
    auto xx = x;
    const double h = 1e-5;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double keep = xx[i];
      xx[i] = keep + h;
      const double up = clf.log_prob(xx, 2);
      xx[i] = keep - h;
      const double dn = clf.log_prob(xx, 2);
      xx[i] = keep;
      fd[i] = (up - dn) / (2.0 * h);
    }
    REQUIRE(max_rel_err(g, fd) < 1e-4);
  }
}
