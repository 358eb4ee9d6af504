#include "prevfuse/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "prevfuse/covariance.hpp"
#include "prevfuse/model.hpp"

namespace prevfuse {

void ChainConfig::validate() const {
  if (burnin < 0 || burnin >= total)
    throw std::invalid_argument("burn-in must be shorter than the chain");
  if (thin < 1) throw std::invalid_argument("thinning stride must be >= 1");
  if (step < 0) throw std::invalid_argument("step size must be positive");
  if (target_accept <= 0 || target_accept >= 1)
    throw std::invalid_argument("target acceptance must lie in (0,1)");
}

GaussianApprox gaussian_approx(const Eigen::Ref<const MatrixXd>& v,
                               const Eigen::Ref<const VectorXd>& lambda_diag,
                               bool literal_form) {
  const Eigen::Index n = v.rows();
  if (lambda_diag.size() != n) throw std::invalid_argument("lambda length mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (lambda_diag[i] < 0) throw std::invalid_argument("lambda must be nonnegative");

  MatrixXd inner;
  if (literal_form) {
    // the printed form {V + Lambda}^{-1}, kept for comparison runs
    inner = v;
    inner.diagonal() += lambda_diag;
  } else {
    auto lv = cholesky_lower(v);
    if (!lv) throw std::runtime_error("gaussian_approx: V is not positive definite");
    MatrixXd linv = lv->triangularView<Eigen::Lower>().solve(MatrixXd::Identity(n, n));
    inner = linv.transpose() * linv;
    inner.diagonal() += lambda_diag;
  }
  auto li = cholesky_lower(inner);
  if (!li) throw std::runtime_error("gaussian_approx: V^{-1} + Lambda not positive definite");
  MatrixXd inner_inv_chol =
      li->triangularView<Eigen::Lower>().solve(MatrixXd::Identity(n, n));
  GaussianApprox out;
  out.cov = inner_inv_chol.transpose() * inner_inv_chol;
  auto lc = cholesky_lower(out.cov);
  if (!lc) throw std::runtime_error("gaussian_approx: approximation not positive definite");
  out.chol = *lc;
  return out;
}

CentredConditional::CentredConditional(VectorXd y, VectorXd m, VectorXd mean,
                                       const Eigen::Ref<const MatrixXd>& chol_v,
                                       const Eigen::Ref<const MatrixXd>& centring_factor)
    : y_(std::move(y)), m_(std::move(m)), mean_(std::move(mean)), factor_(centring_factor) {
  MatrixXd w = chol_v.triangularView<Eigen::Lower>().solve(factor_);  // L_V^{-1} F
  prior_quad_ = w.transpose() * w;
}

VectorXd CentredConditional::to_centred(const VectorXd& t) const {
  return factor_.triangularView<Eigen::Lower>().solve(t - mean_);
}

double CentredConditional::logpdf(const VectorXd& z, VectorXd& grad) const {
  VectorXd pz = prior_quad_ * z;
  VectorXd t = factor_ * z + mean_;
  VectorXd gl(y_.size());
  double ll = 0.0;
  for (Eigen::Index j = 0; j < y_.size(); ++j) {
    ll += y_[j] * log_inv_logit(t[j]) + (m_[j] - y_[j]) * log_inv_logit(-t[j]);
    gl[j] = y_[j] - m_[j] * inv_logit(t[j]);
  }
  grad = factor_.transpose() * gl - pz;
  return -0.5 * z.dot(pz) + ll;
}

double log_hastings_ratio(double step, const VectorXd& a, double logpdf_a,
                          const VectorXd& grad_a, const VectorXd& b,
                          double logpdf_b, const VectorXd& grad_b) {
  // q(x | y) = N(x; y + (h/2) grad(y), h I)
  const VectorXd fwd = b - a - 0.5 * step * grad_a;   // move a -> b
  const VectorXd bwd = a - b - 0.5 * step * grad_b;   // move b -> a
  return (logpdf_b - logpdf_a) +
         (fwd.squaredNorm() - bwd.squaredNorm()) / (2.0 * step);
}

bool langevin_step(const LogDensity& target, double step, Rng& rng, VectorXd& z,
                   double& cur_logpdf, VectorXd& cur_grad) {
  const int n = target.dim();
  VectorXd noise(n);
  for (int i = 0; i < n; ++i) noise[i] = rng.normal();
  VectorXd prop = z + 0.5 * step * cur_grad + std::sqrt(step) * noise;

  VectorXd prop_grad(n);
  const double prop_logpdf = target.logpdf(prop, prop_grad);
  if (!std::isfinite(prop_logpdf) || !prop_grad.allFinite())
    throw std::runtime_error("langevin_step: non-finite target at proposal");

  const double log_ratio =
      log_hastings_ratio(step, z, cur_logpdf, cur_grad, prop, prop_logpdf, prop_grad);
  const double u = rng.uniform();
  if (std::log(std::max(u, 1e-300)) < log_ratio) {
    z = prop;
    cur_logpdf = prop_logpdf;
    cur_grad = prop_grad;
    return true;
  }
  return false;
}

GenericChainResult run_mala(const LogDensity& target, const VectorXd& init,
                            const ChainConfig& config) {
  config.validate();
  const int n = target.dim();
  Rng rng(config.seed);

  double step = config.step > 0
                    ? config.step
                    : 1.65 * 1.65 / std::pow(static_cast<double>(n), 1.0 / 3.0);
  double log_step = std::log(step);

  VectorXd z = init;
  VectorXd grad(n);
  double logp = target.logpdf(z, grad);
  if (!std::isfinite(logp)) throw std::runtime_error("run_mala: non-finite initial state");

  GenericChainResult out;
  out.states.reserve(static_cast<size_t>(config.n_samples()));
  long accepted = 0;
  long counted = 0;
  for (long it = 0; it < config.total; ++it) {
    const bool acc = langevin_step(target, step, rng, z, logp, grad);
    if (it < config.burnin) {
      if (config.adapt) {
        // Robbins-Monro on log h toward the target acceptance rate
        const double gain = 1.0 / std::pow(static_cast<double>(it + 1), 0.6);
        log_step += gain * ((acc ? 1.0 : 0.0) - config.target_accept);
        step = std::exp(std::clamp(log_step, -20.0, 10.0));
      }
    } else {
      accepted += acc ? 1 : 0;
      ++counted;
      if ((it - config.burnin) % config.thin == config.thin - 1)
        out.states.push_back(z);
    }
  }
  out.acceptance_rate = counted > 0 ? static_cast<double>(accepted) / counted : 0.0;
  out.final_step = step;
  return out;
}

ChainResult run_chain(const Eigen::Ref<const VectorXd>& y,
                      const Eigen::Ref<const VectorXd>& m,
                      const Eigen::Ref<const VectorXd>& mean,
                      const Eigen::Ref<const MatrixXd>& v,
                      const Eigen::Ref<const VectorXd>& lambda_diag,
                      const ChainConfig& config) {
  config.validate();
  auto lv = cholesky_lower(v);
  if (!lv) throw std::runtime_error("run_chain: covariance not positive definite");

  GaussianApprox approx = gaussian_approx(v, lambda_diag);
  CentredConditional target(y, m, mean, *lv, approx.chol);

  // start at the conditional mode for a short warm-up
  ModeResult mode = find_mode(y, m, mean, *lv);
  VectorXd z0 = target.to_centred(mode.t_hat);

  GenericChainResult raw = run_mala(target, z0, config);

  ChainResult out;
  out.samples.reserve(raw.states.size());
  for (const auto& z : raw.states) out.samples.push_back(target.to_latent(z));
  out.acceptance_rate = raw.acceptance_rate;
  out.final_step = raw.final_step;
  out.acceptance_in_band = raw.acceptance_rate >= 0.3 && raw.acceptance_rate <= 0.8;
  return out;
}

ChainDiagnostics chain_diagnostics(const std::vector<LatentSample>& samples,
                                   int max_lag) {
  const int m = static_cast<int>(samples.size());
  if (m < 4) throw std::invalid_argument("chain_diagnostics needs at least 4 samples");

  VectorXd path(m);
  for (int h = 0; h < m; ++h) path[h] = samples[h].mean();

  const double mu = path.mean();
  VectorXd c = path.array() - mu;
  const double var = c.squaredNorm() / m;

  ChainDiagnostics d;
  const int lags = std::min(max_lag, m - 1);
  d.autocorrelation.resize(lags);
  for (int k = 1; k <= lags; ++k) {
    double s = 0.0;
    for (int h = 0; h + k < m; ++h) s += c[h] * c[h + k];
    d.autocorrelation[k - 1] = var > 0 ? s / (m * var) : 0.0;
  }

  // two-half ECDF distance over the pooled sample points
  const int half = m / 2;
  std::vector<double> first(path.data(), path.data() + half);
  std::vector<double> second(path.data() + half, path.data() + m);
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  double ks = 0.0;
  for (double x : first) {
    const double f1 = (std::upper_bound(first.begin(), first.end(), x) - first.begin()) /
                      static_cast<double>(first.size());
    const double f2 = (std::upper_bound(second.begin(), second.end(), x) - second.begin()) /
                      static_cast<double>(second.size());
    ks = std::max(ks, std::abs(f1 - f2));
  }
  for (double x : second) {
    const double f1 = (std::upper_bound(first.begin(), first.end(), x) - first.begin()) /
                      static_cast<double>(first.size());
    const double f2 = (std::upper_bound(second.begin(), second.end(), x) - second.begin()) /
                      static_cast<double>(second.size());
    ks = std::max(ks, std::abs(f1 - f2));
  }
  d.ks_distance = ks;
  return d;
}

}  // namespace prevfuse
