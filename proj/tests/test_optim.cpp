#include "doctest.h"

#include <cmath>

#include "prevfuse/optim.hpp"

using namespace prevfuse;

TEST_CASE("numerical gradient on a smooth function") {
  const ObjectiveFn f = [](const VectorXd& x) {
    return std::sin(x[0]) + x[1] * x[1] * x[0];
  };
  VectorXd x(2);
  x << 0.7, -1.3;
  const VectorXd g = numerical_gradient(f, x);
  CHECK(g[0] == doctest::Approx(std::cos(0.7) + 1.69).epsilon(1e-7));
  CHECK(g[1] == doctest::Approx(2.0 * -1.3 * 0.7).epsilon(1e-7));
}

TEST_CASE("numerical hessian is symmetric and accurate") {
  const ObjectiveFn f = [](const VectorXd& x) {
    return x[0] * x[0] * x[1] + std::exp(0.5 * x[1]);
  };
  VectorXd x(2);
  x << 1.2, 0.4;
  const MatrixXd h = numerical_hessian(f, x);
  CHECK(h(0, 1) == h(1, 0));
  CHECK(h(0, 0) == doctest::Approx(2.0 * 0.4).epsilon(1e-4));
  CHECK(h(0, 1) == doctest::Approx(2.0 * 1.2).epsilon(1e-4));
  CHECK(h(1, 1) == doctest::Approx(0.25 * std::exp(0.2)).epsilon(1e-4));
}

TEST_CASE("bfgs minimizes the rosenbrock valley") {
  const ObjectiveFn f = [](const VectorXd& x) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    return a * a + 100.0 * b * b;
  };
  VectorXd x0(2);
  x0 << -1.2, 1.0;
  const MinimizeResult r = minimize_bfgs(f, x0);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("bfgs tolerates infeasible regions returning +inf") {
  const ObjectiveFn f = [](const VectorXd& x) {
    if (x[0] > 2.0) return std::numeric_limits<double>::infinity();
    return (x[0] - 1.5) * (x[0] - 1.5);
  };
  const MinimizeResult r = minimize_bfgs(f, VectorXd::Zero(1));
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.5).epsilon(1e-5));

  CHECK_THROWS_AS(
      minimize_bfgs([](const VectorXd&) { return std::numeric_limits<double>::infinity(); },
                    VectorXd::Zero(1)),
      std::invalid_argument);
}
