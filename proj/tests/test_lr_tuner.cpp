#include <doctest.h>

#include <cmath>

#include "swapsched/lr_tuner.hpp"
#include "swapsched/synthetic.hpp"

using namespace swapsched;

namespace {

LrConfig cfg(double alpha, double c, double mu, long long iters, double q) {
  LrConfig l;
  l.alpha_base = alpha;
  l.convexity = c;
  l.mu = mu;
  l.iters_base = iters;
  l.q = q;
  return l;
}

// exact solution of the contraction equality for alpha*
double solve_equality(double alpha, double c, double mu, long long iters,
                      double q) {
  const double exponent = (static_cast<double>(iters) - 1.0) /
                          (static_cast<double>(iters) / q - 1.0);
  return (1.0 - std::pow(1.0 - alpha * c * mu, exponent)) / (c * mu);
}

}  // namespace

TEST_CASE("q of one returns the base learning rate bit-exactly") {
  for (double alpha : {0.05, 0.1, 0.3}) {
    CHECK(adapted_learning_rate(cfg(alpha, 1.0, 1.0, 1000, 1.0)) == alpha);
    CHECK(adapted_learning_rate(cfg(alpha, 2.5, 1.0, 1000, 1.0)) == alpha);
  }
}

TEST_CASE("doubling the minibatch gives the closed-form rate") {
  const double a = adapted_learning_rate(cfg(0.1, 1.0, 1.0, 1000, 2.0));
  CHECK(a == doctest::Approx(0.19).epsilon(1e-12));
  // the exact equality solution agrees closely at this iteration count
  const double exact = solve_equality(0.1, 1.0, 1.0, 1000, 2.0);
  CHECK(std::abs(exact - a) < 1e-3);
}

TEST_CASE("the adapted rate saturates at 1/c for large q") {
  const double a = adapted_learning_rate(cfg(0.1, 1.0, 1.0, 1000, 4000.0));
  CHECK(a == doctest::Approx(1.0).epsilon(1e-9));
  const double b = adapted_learning_rate(cfg(0.1, 2.0, 1.0, 1000, 4000.0));
  CHECK(b == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("invalid contractions and shrinking minibatches are rejected") {
  CHECK_THROWS_AS(adapted_learning_rate(cfg(1.0, 1.0, 1.0, 1000, 2.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(adapted_learning_rate(cfg(0.5, 3.0, 1.0, 1000, 2.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(adapted_learning_rate(cfg(0.1, 1.0, 1.0, 1000, 0.5)),
                  std::invalid_argument);
}

TEST_CASE("the contraction residual vanishes when nothing changes") {
  LrConfig c = cfg(0.1, 1.0, 1.0, 1000, 1.0);
  CHECK(contraction_residual(c, 0.1) == 0.0);
}

TEST_CASE("the residual stays small at the closed-form rate") {
  LrConfig c2 = cfg(0.1, 1.0, 1.0, 1000, 2.0);
  CHECK(std::abs(contraction_residual(c2, 0.19)) < 1e-3);

  // halving mu halves the effective contraction on both sides
  LrConfig cmu = cfg(0.1, 1.0, 0.5, 1000, 2.0);
  const double astar = adapted_learning_rate(cmu);
  CHECK(std::abs(contraction_residual(cmu, astar)) < 1e-3);

  CHECK_THROWS_AS(contraction_residual(c2, 2.0), std::invalid_argument);
}

TEST_CASE("the adapted rate grows with q and stays below 1/c") {
  Rng rng{0xa1fa};
  for (int trial = 0; trial < 200; ++trial) {
    const double c = rng.uniform(0.5, 3.0);
    const double alpha = rng.uniform(0.01, 0.29) / c;
    double prev = 0.0;
    for (double q : {1.0, 1.5, 2.0, 4.0, 8.0}) {
      const double a = adapted_learning_rate(cfg(alpha, c, 1.0, 1000, q));
      CHECK(a > prev);
      CHECK(a < 1.0 / c + 1e-15);
      prev = a;
    }
  }
}

TEST_CASE("integer q satisfies the contraction identity algebraically") {
  Rng rng{0x1de1};
  for (int trial = 0; trial < 500; ++trial) {
    const double c = rng.uniform(0.5, 3.0);
    const double alpha = rng.uniform(0.01, 0.3) / c;
    const double q = static_cast<double>(rng.range(1, 8));
    const double astar = adapted_learning_rate(cfg(alpha, c, 1.0, 1000, q));
    // 1 - alpha*c == (1 - alpha_base*c)^q up to rounding
    const double lhs = 1.0 - astar * c;
    const double rhs = std::pow(1.0 - alpha * c, q);
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
}
