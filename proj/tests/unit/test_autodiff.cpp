#include <doctest.h>

#include <cmath>
#include <random>

#include "sceneprior/autodiff.hpp"
#include "sceneprior/optim.hpp"

using namespace sceneprior;
using namespace sceneprior::ad;

namespace {

// Phi(x) from its Maclaurin series in long double.
long double normal_cdf_series(long double x) {
  long double term = x, sum = x;
  for (int n = 1; n < 80; ++n) {
    term *= -x * x / (2.0L * n);
    sum += term / (2.0L * n + 1.0L);
  }
  return 0.5L + sum / std::sqrt(2.0L * 3.14159265358979323846264338327950288L);
}

ParamTensor tensor(const std::string& name, std::size_t r, std::size_t c,
                   std::vector<double> values) {
  ParamTensor p(name, {r, c});
  p.values = std::move(values);
  return p;
}

}  // namespace

TEST_CASE("softplus(0) is ln 2") {
  Tape t;
  CHECK(softplus(t.scalar(0.0)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(softplus_value(0.0) == doctest::Approx(0.6931).epsilon(1e-4));
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape t;
  for (double a : {-3.0, 0.0, 7.5}) {
    Var s = softmax_rows(t.constant(1, 3, {a, a, a}));
    for (double v : s.value()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
}

TEST_CASE("gelu matches the series form of x * Phi(x)") {
  for (double x : {-2.5, -1.0, -0.3, 0.0, 0.5, 1.0, 2.0}) {
    const long double oracle = x * normal_cdf_series(x);
    CHECK(std::abs(gelu_value(x) - static_cast<double>(oracle)) < 1e-15);
  }
}

TEST_CASE("sigmoid derivative at zero is 1/4") {
  ParamTensor x = tensor("x", 1, 1, {0.0});
  Tape t;
  t.backward(sigmoid(t.param(x)));
  CHECK(x.grad[0] == 0.25);
}

TEST_CASE("softplus derivative equals sigmoid") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int i = 0; i < 5; ++i) {
    ParamTensor x = tensor("x", 1, 1, {normal(rng)});
    Tape t;
    t.backward(softplus(t.param(x)));
    CHECK(relative_error(x.grad[0], sigmoid_value(x.values[0])) < 1e-10);
  }
}

TEST_CASE("gradient_check: sum of squares is exact") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  ParamTensor x("x", {3, 4});
  for (double& v : x.values) v = u(rng);
  auto f = [&](Tape& t) { return sum(square(t.param(x))); };
  CHECK(gradient_check(f, x, 1e-5) < 1e-9);
}

TEST_CASE("gradient_check: softmax cross-entropy") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.5);
  for (int trial = 0; trial < 10; ++trial) {
    ParamTensor x("x", {1, 6});
    for (double& v : x.values) v = normal(rng);
    auto f = [&](Tape& t) { return cross_entropy_logits(t.param(x), trial % 6); };
    CHECK(gradient_check(f, x, 1e-5) < 1e-6);
  }
}

TEST_CASE("cross entropy is stable for large logits") {
  Tape t;
  Var l = cross_entropy_logits(t.constant(1, 3, {1000.0, 0.0, -1000.0}), 1);
  CHECK(l.item() == doctest::Approx(1000.0));
  CHECK(std::isfinite(l.item()));
}

TEST_CASE("shape mismatch names both shapes") {
  Tape t;
  Var a = t.constant(2, 3, std::vector<double>(6, 1.0));
  Var b = t.constant(4, 5, std::vector<double>(20, 1.0));
  try {
    matmul(a, b);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == "shape-mismatch");
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x5") != std::string::npos);
  }
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape t;
  Var a = t.constant(1, 2, {1.0, 2.0});
  CHECK_THROWS_AS(t.backward(a), Error);
}

TEST_CASE("zero_grad then backward equals a fresh backward") {
  ParamTensor w = tensor("w", 2, 2, {0.3, -1.2, 0.7, 2.0});
  ParamTensor x = tensor("x", 1, 2, {0.5, -0.25});
  auto run = [&] {
    Tape t;
    t.backward(sum(gelu(matmul(t.param(x), t.param(w)))));
  };
  run();
  const std::vector<double> fresh = w.grad;
  run();  // accumulates
  CHECK(w.grad != fresh);
  w.zero_grad();
  for (double g : w.grad) CHECK(g == 0.0);
  run();
  CHECK(w.grad == fresh);
}

TEST_CASE("forward values and gradients are bit-reproducible") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal;
  ParamTensor a("a", {4, 5}), b("b", {5, 3});
  for (double& v : a.values) v = normal(rng);
  for (double& v : b.values) v = normal(rng);
  std::vector<double> v1, v2, g1, g2;
  for (int run = 0; run < 2; ++run) {
    a.zero_grad();
    Tape t;
    Var y = softmax_rows(matmul(t.param(a), t.param(b)));
    Var loss = sum(mul(y, y));
    t.backward(loss);
    (run == 0 ? v1 : v2) = y.to_vector();
    (run == 0 ? g1 : g2) = a.grad;
  }
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("broadcasting over rows, columns and scalars") {
  Tape t;
  Var a = t.constant(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(add(a, t.constant(1, 3, {10, 20, 30})).to_vector() ==
        std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK(sub(a, t.constant(2, 1, {1, 2})).to_vector() == std::vector<double>{0, 1, 2, 2, 3, 4});
  CHECK(mul(a, t.scalar(2)).to_vector() == std::vector<double>{2, 4, 6, 8, 10, 12});
}

TEST_CASE("bce against targets and with logits agree") {
  const std::vector<double> target{1, 0, 0.3};
  const std::vector<double> logits{0.4, -1.3, 2.2};
  Tape t;
  Var a = bce(sigmoid(t.constant(1, 3, logits)), target);
  Var b = bce_with_logits(t.constant(1, 3, logits), target);
  CHECK(a.item() == doctest::Approx(b.item()).epsilon(1e-12));
}

TEST_CASE("Adam first step moves each coordinate by lr against the gradient sign") {
  ParamTensor x = tensor("x", 1, 3, {1.0, -2.0, 0.5});
  Adam adam({&x});
  Tape t;
  t.backward(sum(square(t.param(x))));
  adam.step(0.1);
  // Bias-corrected first step is lr * g / (|g| + eps').
  CHECK(x.values[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(x.values[1] == doctest::Approx(-1.9).epsilon(1e-7));
  CHECK(x.values[2] == doctest::Approx(0.4).epsilon(1e-7));
  CHECK(adam.steps() == 1);
}

TEST_CASE("RMSProp step matches the update rule") {
  ParamTensor x = tensor("x", 1, 1, {2.0});
  RmsProp opt({&x});
  Tape t;
  t.backward(square(t.param(x)));
  const double g = 4.0;
  opt.step(0.01);
  const double sq = 0.01 * g * g;
  CHECK(x.values[0] == doctest::Approx(2.0 - 0.01 * g / (std::sqrt(sq) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("step decay schedule") {
  CHECK(step_decay_lr(1e-4, 0.1, 300, 299) == doctest::Approx(1e-4));
  CHECK(step_decay_lr(1e-4, 0.1, 300, 301) == doctest::Approx(1e-5));
  CHECK(step_decay_lr(1e-4, 0.1, 300, 300) == doctest::Approx(1e-5));
}
