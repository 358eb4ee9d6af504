#pragma once

#include <cstdint>
#include <vector>

#include "prevfuse/rng.hpp"
#include "prevfuse/types.hpp"

namespace prevfuse {

struct ChainConfig {
  long total = 110000;   // total iterations
  long burnin = 10000;   // discarded, step size adapted here
  int thin = 20;         // keep every thin-th post-burn-in state
  double step = 0.0;     // initial MALA step h; 0 selects 1.65^2 / n^{1/3}
  double target_accept = 0.574;
  bool adapt = true;     // adapt h during burn-in, frozen afterwards
  std::uint64_t seed = 1;

  long n_samples() const { return (total - burnin) / thin; }
  void validate() const;
};

/// Log-density with gradient, the target a MALA chain runs on.
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual double logpdf(const VectorXd& z, VectorXd& grad) const = 0;
  virtual int dim() const = 0;
};

/// Gaussian approximation to T|y: covariance (V^{-1} + Lambda)^{-1} and its
/// lower Cholesky factor, which defines the centring transform
/// T~ = F^{-1}(T - mean). literal_form selects the printed (V + Lambda)^{-1}
/// variant for comparison runs.
struct GaussianApprox {
  MatrixXd cov;
  MatrixXd chol;
};
GaussianApprox gaussian_approx(const Eigen::Ref<const MatrixXd>& v,
                               const Eigen::Ref<const VectorXd>& lambda_diag,
                               bool literal_form = false);

/// Conditional law of the centred latent vector given binomial data;
/// log pi(z) = -0.5 |L_V^{-1} F z|^2 + loglik(y, m, F z + mean) + const.
class CentredConditional : public LogDensity {
 public:
  CentredConditional(VectorXd y, VectorXd m, VectorXd mean,
                     const Eigen::Ref<const MatrixXd>& chol_v,
                     const Eigen::Ref<const MatrixXd>& centring_factor);
  double logpdf(const VectorXd& z, VectorXd& grad) const override;
  int dim() const override { return static_cast<int>(y_.size()); }

  /// Map a centred state back to the linear-predictor scale.
  VectorXd to_latent(const VectorXd& z) const { return factor_ * z + mean_; }
  /// Inverse of to_latent.
  VectorXd to_centred(const VectorXd& t) const;

 private:
  VectorXd y_, m_, mean_;
  MatrixXd factor_;     // F
  MatrixXd prior_quad_; // F^T V^{-1} F
};

/// One Metropolis-adjusted Langevin step. cur_logpdf/cur_grad must hold the
/// values at z and are updated in place on acceptance.
bool langevin_step(const LogDensity& target, double step, Rng& rng, VectorXd& z,
                   double& cur_logpdf, VectorXd& cur_grad);

/// log of the Hastings ratio for a move a -> b; exactly antisymmetric under
/// exchanging the two states.
double log_hastings_ratio(double step, const VectorXd& a, double logpdf_a,
                          const VectorXd& grad_a, const VectorXd& b,
                          double logpdf_b, const VectorXd& grad_b);

struct ChainResult {
  std::vector<LatentSample> samples;  // on the T scale
  double acceptance_rate = 0.0;
  double final_step = 0.0;
  bool acceptance_in_band = true;  // [0.3, 0.8] check
};

/// Run the centred Langevin-Hastings chain for T | y under
/// MVN(mean, V) x binomial(y, m). Deterministic given config.seed.
ChainResult run_chain(const Eigen::Ref<const VectorXd>& y,
                      const Eigen::Ref<const VectorXd>& m,
                      const Eigen::Ref<const VectorXd>& mean,
                      const Eigen::Ref<const MatrixXd>& v,
                      const Eigen::Ref<const VectorXd>& lambda_diag,
                      const ChainConfig& config);

/// Generic driver for an arbitrary target, used by tests and diagnostics.
struct GenericChainResult {
  std::vector<VectorXd> states;
  double acceptance_rate = 0.0;
  double final_step = 0.0;
};
GenericChainResult run_mala(const LogDensity& target, const VectorXd& init,
                            const ChainConfig& config);

struct ChainDiagnostics {
  VectorXd autocorrelation;  // lag 1..max_lag of the per-sample mean
  double ks_distance = 0.0;  // first half vs second half ECDF distance
};

/// Diagnostics on the sample-path average: lag autocorrelations and the
/// two-half Kolmogorov-Smirnov distance. Needs at least 4 samples.
ChainDiagnostics chain_diagnostics(const std::vector<LatentSample>& samples,
                                   int max_lag = 40);

}  // namespace prevfuse
