#include "prevfuse/model.hpp"

#include <cmath>

namespace prevfuse {

int design_columns(const SurveyDataset& data, const ModelSpec& spec) {
  const int shared = 1 + data.n_covariates();
  return shared + spec.n_biased() * static_cast<int>(spec.bias_mask.size());
}

MatrixXd build_design_matrix(const SurveyDataset& data, const ModelSpec& spec) {
  data.validate();
  spec.validate();
  if (spec.n_surveys != data.n_surveys())
    throw std::invalid_argument("model spec and data disagree on survey count");
  const int n = data.total_n();
  const int shared = 1 + data.n_covariates();
  for (int c : spec.bias_mask)
    if (c >= shared)
      throw std::invalid_argument("bias mask column exceeds shared design width");

  MatrixXd d = MatrixXd::Zero(n, design_columns(data, spec));
  d.col(0).setOnes();
  if (data.n_covariates() > 0) d.middleCols(1, data.n_covariates()) = data.covariates;

  int col = shared;
  for (int i = 0; i < spec.n_surveys; ++i) {
    if (!spec.biased[i]) continue;
    const int oi = data.survey_offset(i);
    const int ni = data.n_per_survey[i];
    for (int c : spec.bias_mask) {
      d.block(oi, col, ni, 1) = d.block(oi, c, ni, 1);
      ++col;
    }
  }
  return d;
}

std::vector<std::string> design_column_names(const SurveyDataset& data,
                                             const ModelSpec& spec) {
  std::vector<std::string> shared_names;
  shared_names.push_back("intercept");
  for (const auto& nm : data.covariate_names) shared_names.push_back(nm);

  std::vector<std::string> names = shared_names;
  for (int i = 0; i < spec.n_surveys; ++i) {
    if (!spec.biased[i]) continue;
    for (int c : spec.bias_mask)
      names.push_back("bias" + std::to_string(i + 1) + ":" + shared_names[c]);
  }
  return names;
}

double binomial_loglik(const Eigen::Ref<const VectorXd>& y,
                       const Eigen::Ref<const VectorXd>& m,
                       const Eigen::Ref<const VectorXd>& t) {
  const Eigen::Index n = y.size();
  if (m.size() != n || t.size() != n)
    throw std::invalid_argument("binomial_loglik: length mismatch");
  double ll = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!std::isfinite(t[j])) throw std::invalid_argument("non-finite linear predictor");
    ll += y[j] * log_inv_logit(t[j]) + (m[j] - y[j]) * log_inv_logit(-t[j]);
    ll += std::lgamma(m[j] + 1.0) - std::lgamma(y[j] + 1.0) - std::lgamma(m[j] - y[j] + 1.0);
  }
  return ll;
}

void loglik_derivs(const Eigen::Ref<const VectorXd>& y,
                   const Eigen::Ref<const VectorXd>& m,
                   const Eigen::Ref<const VectorXd>& t,
                   VectorXd& grad, VectorXd& curvature) {
  const Eigen::Index n = y.size();
  grad.resize(n);
  curvature.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double p = inv_logit(t[j]);
    grad[j] = y[j] - m[j] * p;
    curvature[j] = m[j] * p * (1.0 - p);
  }
}

VectorXd empirical_lambda(const Eigen::Ref<const VectorXd>& y,
                          const Eigen::Ref<const VectorXd>& m) {
  VectorXd lam(y.size());
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    const double yc = std::min(std::max(y[j], 0.5), m[j] - 0.5);
    lam[j] = yc * (1.0 - yc / m[j]);
  }
  return lam;
}

VectorXd lambda_at(const Eigen::Ref<const VectorXd>& m,
                   const Eigen::Ref<const VectorXd>& t) {
  VectorXd lam(m.size());
  for (Eigen::Index j = 0; j < m.size(); ++j) {
    const double p = inv_logit(t[j]);
    lam[j] = m[j] * p * (1.0 - p);
  }
  return lam;
}

ModeResult find_mode(const Eigen::Ref<const VectorXd>& y,
                     const Eigen::Ref<const VectorXd>& m,
                     const Eigen::Ref<const VectorXd>& mean,
                     const Eigen::Ref<const MatrixXd>& chol_v,
                     int max_iterations) {
  const Eigen::Index n = y.size();
  const double tol = 1e-6 * std::sqrt(static_cast<double>(n));

  auto vinv = [&](const VectorXd& u) -> VectorXd {
    VectorXd z = chol_v.triangularView<Eigen::Lower>().solve(u);
    return chol_v.transpose().triangularView<Eigen::Upper>().solve(z);
  };
  auto objective = [&](const VectorXd& t) {
    VectorXd z = chol_v.triangularView<Eigen::Lower>().solve(t - mean);
    return -0.5 * z.squaredNorm() + binomial_loglik(y, m, t);
  };

  MatrixXd vinv_mat;
  {
    MatrixXd linv = chol_v.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(n, n));
    vinv_mat = linv.transpose() * linv;
  }

  VectorXd t = mean;
  double f = objective(t);
  VectorXd grad, curv;
  ModeResult res;
  for (int it = 0; it < max_iterations; ++it) {
    loglik_derivs(y, m, t, grad, curv);
    VectorXd g = grad - vinv(t - mean);
    res.grad_norm = g.norm();
    res.iterations = it;
    if (res.grad_norm < tol) {
      res.t_hat = t;
      return res;
    }
    // Newton system (V^{-1} + Lambda(t)) step = g
    MatrixXd h = vinv_mat;
    h.diagonal() += curv;
    VectorXd step = h.llt().solve(g);
    double s = 1.0;
    for (int half = 0; half < 60; ++half) {
      VectorXd cand = t + s * step;
      const double fc = objective(cand);
      if (fc > f) {
        t = cand;
        f = fc;
        break;
      }
      s *= 0.5;
      if (half == 59) {
        throw ModeError("find_mode: step halving stalled, gradient norm " +
                            std::to_string(res.grad_norm),
                        t);
      }
    }
  }
  loglik_derivs(y, m, t, grad, curv);
  const double gn = (grad - vinv(t - mean)).norm();
  if (gn < tol) {
    res.t_hat = t;
    res.grad_norm = gn;
    res.iterations = max_iterations;
    return res;
  }
  throw ModeError("find_mode: no convergence after " + std::to_string(max_iterations) +
                      " iterations, gradient norm " + std::to_string(gn),
                  t);
}

}  // namespace prevfuse
