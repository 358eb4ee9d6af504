#pragma once

#include <stdexcept>

#include "prevfuse/types.hpp"

namespace prevfuse {

inline double inv_logit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

/// log g^{-1}(t) for the logistic link.
inline double log_inv_logit(double t) { return -softplus(-t); }

/// Stacked design matrix. Shared columns (intercept + covariates) cover all
/// rows; each biased survey contributes a masked copy of the shared columns,
/// nonzero only on its own rows. For r=2 with survey 2 biased and a full
/// mask this is the block form [[D1, 0], [D2, D2]].
MatrixXd build_design_matrix(const SurveyDataset& data, const ModelSpec& spec);

/// Number of columns build_design_matrix will produce.
int design_columns(const SurveyDataset& data, const ModelSpec& spec);

/// Names for the design columns ("beta1", "beta2", ...) in column order.
std::vector<std::string> design_column_names(const SurveyDataset& data,
                                             const ModelSpec& spec);

/// Binomial log-likelihood sum_ij [ y log g^{-1}(t) + (m-y) log(1-g^{-1}(t))
/// + log C(m,y) ], stable at extreme t.
double binomial_loglik(const Eigen::Ref<const VectorXd>& y,
                       const Eigen::Ref<const VectorXd>& m,
                       const Eigen::Ref<const VectorXd>& t);

/// Gradient y - m g^{-1}(t) and negative second derivative m p (1-p).
void loglik_derivs(const Eigen::Ref<const VectorXd>& y,
                   const Eigen::Ref<const VectorXd>& m,
                   const Eigen::Ref<const VectorXd>& t,
                   VectorXd& grad, VectorXd& curvature);

/// Plug-in curvature diag{y(1-y/m)} with y clamped to [0.5, m-0.5] so the
/// Gaussian approximation stays nondegenerate at y=0 and y=m.
VectorXd empirical_lambda(const Eigen::Ref<const VectorXd>& y,
                          const Eigen::Ref<const VectorXd>& m);

/// Curvature m p(1-p) evaluated at t, the alternative to the plug-in form.
VectorXd lambda_at(const Eigen::Ref<const VectorXd>& m,
                   const Eigen::Ref<const VectorXd>& t);

struct ModeResult {
  VectorXd t_hat;
  double grad_norm = 0.0;
  int iterations = 0;
};

/// Thrown when the mode search stalls; carries the last iterate.
class ModeError : public std::runtime_error {
 public:
  ModeError(const std::string& msg, VectorXd last)
      : std::runtime_error(msg), last_iterate(std::move(last)) {}
  VectorXd last_iterate;
};

/// Mode of h(t | mean, V) f(y|t) by damped Newton iterations. chol_v is the
/// lower factor of V. Converges when the gradient norm drops below
/// 1e-6 * sqrt(n).
ModeResult find_mode(const Eigen::Ref<const VectorXd>& y,
                     const Eigen::Ref<const VectorXd>& m,
                     const Eigen::Ref<const VectorXd>& mean,
                     const Eigen::Ref<const MatrixXd>& chol_v,
                     int max_iterations = 100);

}  // namespace prevfuse
