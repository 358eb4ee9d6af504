#pragma once

#include <optional>

#include "prevfuse/types.hpp"

namespace prevfuse {

/// Exponential correlation exp(-u/range). Throws std::invalid_argument for
/// negative or non-finite inputs.
double exp_corr(double u, double range);

/// Correlation matrix between two location sets under the exponential model.
MatrixXd correlation_matrix(const Eigen::Ref<const MatrixXd>& loc_a,
                            const Eigen::Ref<const MatrixXd>& loc_b,
                            double range);

/// Joint covariance of the stacked latent vector T across surveys.
/// Block (i,i)  = sigma2*R_ii(phi) + nu_i2*R_b(delta) [if biased] + tau_i2*I
/// Block (i,i') = sigma2*alpha_ii'*R_ii'(phi), alpha_ii' = 1 for surveys
/// sharing a time period.
MatrixXd build_joint_covariance(const CovParams& params, const ModelSpec& spec,
                                const SurveyDataset& data);

/// Effective cross-correlation between surveys i and j (1 on shared fields).
double alpha_between_surveys(const CovParams& params, const ModelSpec& spec,
                             int i, int j);

/// Lower Cholesky factor, or nullopt when the matrix is not positive
/// definite. Non-PD is an expected outcome for some alpha combinations and
/// is mapped to likelihood zero by callers, so it is a result, not an error.
std::optional<MatrixXd> cholesky_lower(const Eigen::Ref<const MatrixXd>& v);

/// log-density of MVN(mean, L*L^T) at x given the lower factor L.
double mvn_logpdf(const Eigen::Ref<const VectorXd>& x,
                  const Eigen::Ref<const VectorXd>& mean,
                  const Eigen::Ref<const MatrixXd>& chol_lower);

}  // namespace prevfuse
