#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "cords/lbfgs.hpp"

using cords::LbfgsConfig;
using Catch::Matchers::WithinAbs;

namespace {

// Anisotropic quadratic with minimum at x*.
struct Quadratic {
  Eigen::VectorXd scales;
  Eigen::VectorXd target;
  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    const Eigen::VectorXd r = x - target;
    grad = 2.0 * scales.cwiseProduct(r);
    return scales.dot(r.cwiseProduct(r));
  }
};

}  // namespace

TEST_CASE("quadratics are solved in at most d plus two iterations", "[lbfgs]") {
  const int d = 5;
  Quadratic f;
  f.scales.resize(d);
  f.scales << 1.0, 2.0, 3.0, 3.5, 4.0;
  f.target.resize(d);
  f.target << 0.3, -0.7, 1.1, 0.0, -2.2;
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(d, 2.0);
  const auto res = cords::lbfgs_minimize(f, x0, {});
  REQUIRE(res.converged);
  REQUIRE(res.iterations <= d + 2);
  REQUIRE(res.value < 1e-10);
  REQUIRE((res.x - f.target).norm() < 1e-5);
}

TEST_CASE("a stationary start returns immediately", "[lbfgs]") {
  Quadratic f;
  f.scales = Eigen::VectorXd::Ones(3);
  f.target.resize(3);
  f.target << 1.0, 2.0, 3.0;
  const auto res = cords::lbfgs_minimize(f, f.target, {});
  REQUIRE(res.converged);
  REQUIRE(res.iterations <= 1);
  REQUIRE(res.x == f.target);
}

TEST_CASE("accepted steps never increase the objective", "[lbfgs]") {
  // Rosenbrock's valley forces plenty of curvature corrections.
  const auto rosenbrock = [](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    grad.resize(2);
    grad[0] = -2.0 * a - 400.0 * x[0] * b;
    grad[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  LbfgsConfig cfg;
  cfg.max_iter = 200;
  const auto res = cords::lbfgs_minimize(rosenbrock, x0, cfg);
  REQUIRE(res.converged);
  REQUIRE_THAT(res.x[0], WithinAbs(1.0, 1e-6));
  REQUIRE_THAT(res.x[1], WithinAbs(1.0, 1e-6));
  for (size_t i = 1; i < res.trace.size(); ++i)
    REQUIRE(res.trace[i].value <= res.trace[i - 1].value);
  REQUIRE(res.trace.front().iteration == 0);
}

TEST_CASE("line-search failure is reported, not thrown", "[lbfgs]") {
  // |x| has unit slope everywhere, so the strong-Wolfe curvature condition
  // with c2 < 1 is unsatisfiable away from the kink.
  const auto absf = [](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    grad.resize(1);
    grad[0] = x[0] >= 0.0 ? 1.0 : -1.0;
    return std::abs(x[0]);
  };
  Eigen::VectorXd x0(1);
  x0 << 1.3;
  const auto res = cords::lbfgs_minimize(absf, x0, {});
  REQUIRE(res.line_search_failed);
  REQUIRE_FALSE(res.converged);
  REQUIRE(std::isfinite(res.value));
}

TEST_CASE("an all-NaN neighborhood raises divergence with the last iterate", "[lbfgs]") {
  Eigen::VectorXd x0(2);
  x0 << 0.5, -0.5;
  const auto poisoned = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    grad = Eigen::VectorXd::Ones(2);
    if (x == x0) return 1.0;
    return std::numeric_limits<double>::quiet_NaN();
  };
  try {
    cords::lbfgs_minimize(poisoned, x0, {});
    FAIL("expected OptimizationDiverged");
  } catch (const cords::OptimizationDiverged& e) {
    REQUIRE(e.last_iterate.size() == 2);
    REQUIRE(e.last_iterate[0] == x0[0]);
    REQUIRE(e.last_iterate[1] == x0[1]);
  }
}

TEST_CASE("input validation", "[lbfgs]") {
  Quadratic f;
  f.scales = Eigen::VectorXd::Ones(2);
  f.target = Eigen::VectorXd::Zero(2);
  REQUIRE_THROWS_AS(cords::lbfgs_minimize(f, Eigen::VectorXd(), {}),
                    cords::InvalidArgument);
  Eigen::VectorXd bad(2);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(cords::lbfgs_minimize(f, bad, {}), cords::InvalidArgument);
  LbfgsConfig cfg;
  cfg.c1 = 0.95;
  cfg.c2 = 0.9;
  REQUIRE_THROWS_AS(cords::lbfgs_minimize(f, Eigen::VectorXd::Zero(2), cfg),
                    cords::InvalidArgument);
  cfg = {};
  cfg.memory = 0;
  REQUIRE_THROWS_AS(cords::lbfgs_minimize(f, Eigen::VectorXd::Zero(2), cfg),
                    cords::InvalidArgument);
}
