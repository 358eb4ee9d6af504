#pragma once

#include <functional>

#include "prevfuse/types.hpp"

namespace prevfuse {

using ObjectiveFn = std::function<double(const VectorXd&)>;

/// Central-difference gradient. Steps are relative to max(1, |x_i|).
VectorXd numerical_gradient(const ObjectiveFn& f, const VectorXd& x,
                            double rel_step = 1e-6);

/// Central-difference Hessian (symmetrized).
MatrixXd numerical_hessian(const ObjectiveFn& f, const VectorXd& x,
                           double rel_step = 5e-4);

struct MinimizeOptions {
  int max_iterations = 200;
  double grad_tol = 1e-6;    // infinity norm of the gradient
  double step_tol = 1e-10;   // infinity norm of the accepted step
  double rel_step = 1e-6;    // finite-difference step for gradients
  double box = 30.0;         // clamp |x_i| to this bound (transformed scales)
};

struct MinimizeResult {
  VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// BFGS with backtracking line search and numerical gradients. The objective
/// may return +inf (infeasible point); the line search backs off. Minimizes.
MinimizeResult minimize_bfgs(const ObjectiveFn& f, const VectorXd& x0,
                             const MinimizeOptions& opts = {});

}  // namespace prevfuse
