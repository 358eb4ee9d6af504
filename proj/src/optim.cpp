#include "prevfuse/optim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace prevfuse {

VectorXd numerical_gradient(const ObjectiveFn& f, const VectorXd& x, double rel_step) {
  const Eigen::Index d = x.size();
  VectorXd g(d);
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

MatrixXd numerical_hessian(const ObjectiveFn& f, const VectorXd& x, double rel_step) {
  const Eigen::Index d = x.size();
  VectorXd h(d);
  for (Eigen::Index i = 0; i < d; ++i) h[i] = rel_step * std::max(1.0, std::abs(x[i]));

  MatrixXd hess(d, d);
  const double f0 = f(x);
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < d; ++i) {
    xp[i] = x[i] + h[i];
    const double fp = f(xp);
    xp[i] = x[i] - h[i];
    const double fm = f(xp);
    xp[i] = x[i];
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      VectorXd xq = x;
      xq[i] += h[i]; xq[j] += h[j];
      const double fpp = f(xq);
      xq[j] -= 2.0 * h[j];
      const double fpm = f(xq);
      xq[i] -= 2.0 * h[i];
      const double fmm = f(xq);
      xq[j] += 2.0 * h[j];
      const double fmp = f(xq);
      hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
    }
  }
  return hess;
}

MinimizeResult minimize_bfgs(const ObjectiveFn& f, const VectorXd& x0,
                             const MinimizeOptions& opts) {
  const Eigen::Index d = x0.size();
  const double inf = std::numeric_limits<double>::infinity();

  auto clamp_box = [&](VectorXd v) {
    for (Eigen::Index i = 0; i < d; ++i)
      v[i] = std::min(std::max(v[i], -opts.box), opts.box);
    return v;
  };

  MinimizeResult res;
  VectorXd x = clamp_box(x0);
  int evals = 0;
  auto eval = [&](const VectorXd& v) {
    ++evals;
    const double val = f(v);
    return std::isnan(val) ? inf : val;
  };

  double fx = eval(x);
  if (!std::isfinite(fx))
    throw std::invalid_argument("minimize_bfgs: objective infinite at the start point");

  VectorXd g = numerical_gradient([&](const VectorXd& v) { return eval(v); }, x,
                                  opts.rel_step);
  MatrixXd hinv = MatrixXd::Identity(d, d);

  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it;
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      break;
    }
    VectorXd dir = -(hinv * g);
    if (dir.dot(g) >= 0) {  // not a descent direction, reset curvature
      hinv.setIdentity();
      dir = -g;
    }

    // backtracking Armijo search; infeasible (infinite) points just back off
    double t = 1.0;
    const double slope = g.dot(dir);
    double fn = inf;
    VectorXd xn;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      xn = clamp_box(x + t * dir);
      fn = eval(xn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      res.converged = g.lpNorm<Eigen::Infinity>() < 1e2 * opts.grad_tol;
      break;
    }

    VectorXd gn = numerical_gradient([&](const VectorXd& v) { return eval(v); }, xn,
                                     opts.rel_step);
    VectorXd s = xn - x;
    VectorXd yv = gn - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      // BFGS inverse update
      const double rho = 1.0 / sy;
      MatrixXd eye = MatrixXd::Identity(d, d);
      MatrixXd left = eye - rho * s * yv.transpose();
      hinv = left * hinv * left.transpose() + rho * s * s.transpose();
    }
    const double step_norm = s.lpNorm<Eigen::Infinity>();
    x = xn;
    fx = fn;
    g = gn;
    if (step_norm < opts.step_tol) {
      res.converged = true;
      break;
    }
  }

  res.x = x;
  res.value = fx;
  res.evaluations = evals;
  return res;
}

}  // namespace prevfuse
