#include "prevfuse/covariance.hpp"

#include <cmath>
#include <stdexcept>

namespace prevfuse {

double exp_corr(double u, double range) {
  if (!std::isfinite(u) || u < 0) throw std::invalid_argument("distance must be finite and >= 0");
  if (!std::isfinite(range) || range <= 0)
    throw std::invalid_argument("range must be finite and positive");
  return std::exp(-u / range);
}

MatrixXd correlation_matrix(const Eigen::Ref<const MatrixXd>& loc_a,
                            const Eigen::Ref<const MatrixXd>& loc_b,
                            double range) {
  if (!std::isfinite(range) || range <= 0)
    throw std::invalid_argument("range must be finite and positive");
  MatrixXd r(loc_a.rows(), loc_b.rows());
  for (Eigen::Index j = 0; j < loc_b.rows(); ++j) {
    for (Eigen::Index i = 0; i < loc_a.rows(); ++i) {
      const double dx = loc_a(i, 0) - loc_b(j, 0);
      const double dy = loc_a(i, 1) - loc_b(j, 1);
      r(i, j) = std::exp(-std::sqrt(dx * dx + dy * dy) / range);
    }
  }
  return r;
}

double alpha_between_surveys(const CovParams& params, const ModelSpec& spec,
                             int i, int j) {
  const int fi = spec.field_of_survey(i);
  const int fj = spec.field_of_survey(j);
  if (fi == fj) return 1.0;
  return params.alpha[spec.alpha_index(fi, fj)];
}

MatrixXd build_joint_covariance(const CovParams& params, const ModelSpec& spec,
                                const SurveyDataset& data) {
  params.validate(spec);
  const int n = data.total_n();
  const int r = data.n_surveys();
  MatrixXd v(n, n);

  int bias_counter = 0;
  std::vector<int> bias_idx(r, -1);
  for (int i = 0; i < r; ++i)
    if (spec.biased[i]) bias_idx[i] = bias_counter++;

  for (int i = 0; i < r; ++i) {
    const int oi = data.survey_offset(i);
    const int ni = data.n_per_survey[i];
    const auto loc_i = data.loc.middleRows(oi, ni);
    for (int j = i; j < r; ++j) {
      const int oj = data.survey_offset(j);
      const int nj = data.n_per_survey[j];
      const auto loc_j = data.loc.middleRows(oj, nj);

      MatrixXd block =
          params.sigma2 * alpha_between_surveys(params, spec, i, j) *
          correlation_matrix(loc_i, loc_j, params.phi);
      if (i == j) {
        if (spec.biased[i])
          block += params.nu2[bias_idx[i]] * correlation_matrix(loc_i, loc_i, params.delta);
        block.diagonal().array() += spec.tau2_of_survey(params.tau2, i);
      }
      v.block(oi, oj, ni, nj) = block;
      if (i != j) v.block(oj, oi, nj, ni) = block.transpose();
    }
  }
  return v;
}

std::optional<MatrixXd> cholesky_lower(const Eigen::Ref<const MatrixXd>& v) {
  if (v.rows() != v.cols()) throw std::invalid_argument("matrix must be square");
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v.data()[i])) throw std::invalid_argument("non-finite matrix entry");
  Eigen::LLT<MatrixXd> llt(v);
  if (llt.info() != Eigen::Success) return std::nullopt;
  MatrixXd l = llt.matrixL();
  // LLT can succeed with junk on semi-definite input; reject non-finite factors.
  for (Eigen::Index i = 0; i < l.rows(); ++i)
    if (!(l(i, i) > 0) || !std::isfinite(l(i, i))) return std::nullopt;
  return l;
}

double mvn_logpdf(const Eigen::Ref<const VectorXd>& x,
                  const Eigen::Ref<const VectorXd>& mean,
                  const Eigen::Ref<const MatrixXd>& chol_lower) {
  const Eigen::Index n = x.size();
  VectorXd z = chol_lower.triangularView<Eigen::Lower>().solve(x - mean);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(chol_lower(i, i));
  return -0.5 * static_cast<double>(n) * std::log(2.0 * M_PI) - logdet -
         0.5 * z.squaredNorm();
}

}  // namespace prevfuse
