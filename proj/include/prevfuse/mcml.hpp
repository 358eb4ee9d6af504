#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "prevfuse/sampler.hpp"
#include "prevfuse/types.hpp"

namespace prevfuse {

/// Conditional samples drawn at reference parameters (beta0, theta0),
/// together with the cached reference MVN log-densities log h~(t_h).
/// Holds copies of the data and model spec so it is self-contained.
struct ImportanceDensity {
  ParamSet ref;
  SurveyDataset data;
  ModelSpec spec;
  MatrixXd design;           // D, rows stacked across surveys
  MatrixXd samples;          // n x m, one conditional draw per column
  VectorXd log_ref_density;  // log h(t_h | D beta0, V(theta0))
  double chain_acceptance = 0.0;

  int n() const { return static_cast<int>(samples.rows()); }
  int m() const { return static_cast<int>(samples.cols()); }
};

/// Draws m = config.n_samples() conditional samples at ref via the centred
/// Langevin-Hastings sampler. lambda_at_mode switches the preconditioner
/// curvature from the data plug-in diag{y(1-y/m)} to m p(1-p) at the mode.
ImportanceDensity make_importance(const SurveyDataset& data, const ModelSpec& spec,
                                  const ParamSet& ref, const ChainConfig& config,
                                  bool lambda_at_mode = false);

/// Monte Carlo log-likelihood approximation
///   log L_m(beta, theta) = log (1/m) sum_h h(t_h|D beta, V(theta)) / h~(t_h),
/// computed by log-sum-exp. Returns -inf when V(theta) is not positive
/// definite (likelihood-zero rule for inadmissible alpha combinations).
double mcml_objective(const VectorXd& beta, const CovParams& cov,
                      const ImportanceDensity& imp);

// ---------------------------------------------------------------------------
// psi parameterization: V(theta) = sigma2 * V(psi),
// psi = (nu2/sigma2 ..., tau2/sigma2 ..., phi, delta, alpha ...)
// ---------------------------------------------------------------------------

struct PsiLayout {
  int n_nu = 0;
  int n_tau = 0;  // 0 when tau2 is held fixed
  bool has_delta = false;
  int n_alpha = 0;

  static PsiLayout from_spec(const ModelSpec& spec);
  int size() const { return n_nu + n_tau + 1 + (has_delta ? 1 : 0) + n_alpha; }
  int phi_index() const { return n_nu + n_tau; }
  int delta_index() const { return phi_index() + 1; }
  int alpha_index(int k) const { return phi_index() + 1 + (has_delta ? 1 : 0) + k; }
};

VectorXd pack_psi(const CovParams& cov, const ModelSpec& spec);
CovParams unpack_psi(const VectorXd& psi, double sigma2, const ModelSpec& spec);

/// Log transform for ratios and ranges (ratios clamped at 1e-8 first),
/// log{(1+a)/(1-a)} for cross-correlations. Bijective away from the clamp.
VectorXd transform_psi(const VectorXd& psi, const PsiLayout& layout);
VectorXd untransform_psi(const VectorXd& v, const PsiLayout& layout);

/// Profiled objective at fixed psi: log L_m as a function of (beta, sigma2)
/// with analytic derivatives and a Newton-Raphson maximizer.
class ProfiledObjective {
 public:
  ProfiledObjective(const ImportanceDensity& imp, const VectorXd& psi);

  /// False when V(psi) failed to factorize; the profiled value is then -inf.
  bool valid() const { return valid_; }

  double loglik(const VectorXd& beta, double sigma2) const;

  /// Analytic gradient of log L_m in (beta, sigma2); optionally the Hessian
  /// ordered [beta..., sigma2].
  void derivs(const VectorXd& beta, double sigma2, VectorXd& grad_beta,
              double& grad_sigma2, MatrixXd* hessian = nullptr) const;

  struct Maximum {
    VectorXd beta;
    double sigma2 = 1.0;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
  };
  /// Damped Newton-Raphson; throws std::runtime_error if the gradient norm
  /// cannot be pushed below tol.
  Maximum maximize(double tol = 1e-8) const;

  const MatrixXd& whitened_design() const { return g_; }

 private:
  const ImportanceDensity* imp_;
  bool valid_ = false;
  double logdet_psi_ = 0.0;
  MatrixXd a_;  // L_psi^{-1} [t_1 ... t_m]
  MatrixXd g_;  // L_psi^{-1} D
};

/// Convenience wrapper: maximize the profiled objective at a fixed psi.
ProfiledObjective::Maximum profile_beta_sigma(const VectorXd& psi,
                                              const ImportanceDensity& imp);

// ---------------------------------------------------------------------------
// full fit
// ---------------------------------------------------------------------------

struct FitConfig {
  ChainConfig chain;       // m = chain.n_samples() importance draws per refresh
  int refresh_cap = 10;
  double refresh_tol = 1e-3;  // max relative change of transformed parameters
  int starts = 3;             // psi-stage starting values on the first refresh
  bool lambda_at_mode = false;
  std::uint64_t seed = 1;
};

struct FitResult {
  ParamSet estimate;
  bool converged = false;
  int refreshes = 0;
  double final_loglik = 0.0;  // psi-stage objective at the last refresh
  std::vector<bool> boundary;     // psi components pinned at a transform bound
  ImportanceDensity importance;   // samples drawn at the final estimate
};

/// Heuristic starting point: logistic regression on the gold-standard rows
/// for beta, unit variances and 10% of the maximum pairwise distance for the
/// ranges.
ParamSet default_init(const SurveyDataset& data, const ModelSpec& spec);

/// Full MCML fit: alternate importance-density refreshes with maximization
/// of the profiled objective over transformed psi until the parameters stop
/// moving. Deterministic given config.seed.
FitResult fit(const SurveyDataset& data, const ModelSpec& spec,
              const ParamSet& init, const FitConfig& config);

// ---------------------------------------------------------------------------
// natural / transformed parameter vectors (reporting, Hessians)
// ---------------------------------------------------------------------------

/// Flat layout [beta...; sigma2; nu2...; tau2...; phi; delta?; alpha...];
/// the transformed version applies log to variances and ranges and
/// log{(1+a)/(1-a)} to cross-correlations, leaving beta untouched.
struct ParamLayout {
  int n_beta = 0;
  PsiLayout psi;

  static ParamLayout make(const SurveyDataset& data, const ModelSpec& spec);
  int size() const { return n_beta + 1 + psi.size(); }
  VectorXd to_natural(const ParamSet& p) const;
  VectorXd to_transformed(const ParamSet& p) const;
  ParamSet from_transformed(const VectorXd& eta, const ModelSpec& spec) const;
  /// d(natural)/d(transformed), diagonal, evaluated at eta.
  VectorXd jacobian_diag(const VectorXd& eta) const;
  std::vector<std::string> names(const SurveyDataset& data, const ModelSpec& spec) const;
};

struct AsymptoticCovariance {
  ParamLayout layout;
  MatrixXd cov_transformed;  // inverse observed information, transformed scale
  MatrixXd cov_natural;      // delta-method image
  VectorXd information_eigenvalues;  // descending, all positive when sane
  int dropped_directions = 0;  // eigen-directions excluded as unidentified
  VectorXd unidentified_mass;  // per parameter: squared loading on dropped span
};

/// Inverse of the negative numerical Hessian of log L_m at the estimate.
/// Throws std::runtime_error with the eigen-spectrum when the Hessian is
/// singular or indefinite. With allow_singular, directions whose information
/// eigenvalue falls at or below 1e-8 of the largest are excluded from the
/// inverse instead (an estimate on a flat ridge, e.g. a variance ratio at
/// zero, has no curvature along it); variances are then valid only for
/// parameters with negligible unidentified_mass. Throws only when no
/// direction is identified at all.
AsymptoticCovariance asymptotic_covariance(const ParamSet& estimate,
                                           const ImportanceDensity& imp,
                                           bool allow_singular = false);

struct BootstrapResult {
  std::vector<std::string> names;
  VectorXd lower, upper;    // 2.5% / 97.5% empirical quantiles
  MatrixXd estimates;       // replicate x parameter, successful refits only
  int requested = 0;
  int excluded = 0;
  bool exclusion_warning = false;  // more than 10% of replicates excluded
};

struct BootstrapConfig {
  int replicates = 1000;
  ChainConfig chain;  // per-refit sampler settings (5000 samples by default)
  int refresh_cap = 10;
  double refresh_tol = 1e-3;
  int starts = 1;
  int threads = 1;
  std::uint64_t seed = 1;

  BootstrapConfig() {
    chain.total = 60000;
    chain.burnin = 10000;
    chain.thin = 10;  // 5000 samples per refit
  }
};

/// Parametric bootstrap: simulate replicate data-sets at the fitted
/// parameters over the observed design, refit each, and return empirical
/// 95% intervals. Replicate seeds are seed XOR replicate-index; aggregation
/// is by replicate index so results do not depend on thread count.
BootstrapResult parametric_bootstrap(const ParamSet& fitted, const SurveyDataset& data,
                                     const ModelSpec& spec, const BootstrapConfig& config);

/// Draw one data-set from the model at the given parameters over a fixed
/// design (shared by parametric_bootstrap and the simulation study).
/// extra_loc, when non-empty, appends latent field values (no nugget) at the
/// given locations for the field of extra_field_survey, returned separately.
struct SimulatedData {
  VectorXd t;        // realized linear predictor, length N
  VectorXd y;        // binomial draws
  VectorXd extra_s;  // latent field values at extra_loc
};
SimulatedData simulate_from_model(const ParamSet& params, const SurveyDataset& design,
                                  const ModelSpec& spec, Rng& rng,
                                  const MatrixXd& extra_loc = MatrixXd(0, 2),
                                  int extra_field_survey = 0);

}  // namespace prevfuse
