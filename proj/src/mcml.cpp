#include "prevfuse/mcml.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "prevfuse/covariance.hpp"
#include "prevfuse/model.hpp"
#include "prevfuse/optim.hpp"
#include "prevfuse/stats.hpp"

namespace prevfuse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kRatioClamp = 1e-8;  // zero-boundary guard before log transform

double logmeanexp(const VectorXd& w) {
  const double mx = w.maxCoeff();
  if (!std::isfinite(mx)) return mx;  // all -inf (or a stray +inf propagates)
  double s = 0.0;
  for (Eigen::Index h = 0; h < w.size(); ++h) s += std::exp(w[h] - mx);
  return mx + std::log(s / static_cast<double>(w.size()));
}

/// log MVN(cols of s; mean, L L^T) for every column at once.
VectorXd mvn_logpdf_batch(const Eigen::Ref<const MatrixXd>& s, const VectorXd& mean,
                          const Eigen::Ref<const MatrixXd>& chol_lower) {
  const double n = static_cast<double>(s.rows());
  MatrixXd z = s;
  z.colwise() -= mean;
  chol_lower.triangularView<Eigen::Lower>().solveInPlace(z);
  const double logdet = chol_lower.diagonal().array().log().sum();
  return (-0.5 * z.colwise().squaredNorm().array() - 0.5 * n * kLog2Pi - logdet).transpose();
}

}  // namespace

ImportanceDensity make_importance(const SurveyDataset& data, const ModelSpec& spec,
                                  const ParamSet& ref, const ChainConfig& config,
                                  bool lambda_at_mode) {
  data.validate();
  spec.validate();
  ref.cov.validate(spec);

  ImportanceDensity imp;
  imp.ref = ref;
  imp.data = data;
  imp.spec = spec;
  imp.design = build_design_matrix(data, spec);
  if (ref.beta.size() != imp.design.cols())
    throw std::invalid_argument("beta length does not match the design matrix");

  const VectorXd mean = imp.design * ref.beta;
  const MatrixXd v = build_joint_covariance(ref.cov, spec, data);
  auto lv = cholesky_lower(v);
  if (!lv)
    throw std::invalid_argument("reference covariance is not positive definite");

  VectorXd lambda;
  if (lambda_at_mode) {
    ModeResult mode = find_mode(data.y, data.m, mean, *lv);
    lambda = lambda_at(data.m, mode.t_hat);
  } else {
    lambda = empirical_lambda(data.y, data.m);
  }

  ChainResult chain = run_chain(data.y, data.m, mean, v, lambda, config);
  const long m = config.n_samples();
  imp.samples.resize(data.total_n(), m);
  for (long h = 0; h < m; ++h) imp.samples.col(h) = chain.samples[static_cast<size_t>(h)];
  imp.log_ref_density = mvn_logpdf_batch(imp.samples, mean, *lv);
  imp.chain_acceptance = chain.acceptance_rate;
  return imp;
}

double mcml_objective(const VectorXd& beta, const CovParams& cov,
                      const ImportanceDensity& imp) {
  cov.validate(imp.spec);
  if (beta.size() != imp.design.cols())
    throw std::invalid_argument("beta length does not match the design matrix");
  const MatrixXd v = build_joint_covariance(cov, imp.spec, imp.data);
  auto lv = cholesky_lower(v);
  if (!lv) return -kInf;  // inadmissible covariance: likelihood zero
  const VectorXd w = mvn_logpdf_batch(imp.samples, imp.design * beta, *lv) -
                     imp.log_ref_density;
  return logmeanexp(w);
}

// ---------------------------------------------------------------------------
// psi packing and transforms
// ---------------------------------------------------------------------------

PsiLayout PsiLayout::from_spec(const ModelSpec& spec) {
  spec.validate();
  PsiLayout l;
  l.n_nu = spec.n_biased();
  l.n_tau = spec.fixed_tau2 ? 0 : spec.n_tau2();
  l.has_delta = spec.any_biased();
  l.n_alpha = spec.n_alpha();
  return l;
}

VectorXd pack_psi(const CovParams& cov, const ModelSpec& spec) {
  cov.validate(spec);
  const PsiLayout l = PsiLayout::from_spec(spec);
  VectorXd psi(l.size());
  int k = 0;
  for (int i = 0; i < l.n_nu; ++i) psi[k++] = cov.nu2[i] / cov.sigma2;
  for (int i = 0; i < l.n_tau; ++i) psi[k++] = cov.tau2[i] / cov.sigma2;
  psi[k++] = cov.phi;
  if (l.has_delta) psi[k++] = cov.delta;
  for (int i = 0; i < l.n_alpha; ++i) psi[k++] = cov.alpha[i];
  return psi;
}

CovParams unpack_psi(const VectorXd& psi, double sigma2, const ModelSpec& spec) {
  const PsiLayout l = PsiLayout::from_spec(spec);
  if (psi.size() != l.size()) throw std::invalid_argument("psi length mismatch");
  if (!(sigma2 > 0) || !std::isfinite(sigma2))
    throw std::invalid_argument("sigma2 must be positive");
  CovParams cov;
  cov.sigma2 = sigma2;
  cov.nu2.resize(spec.n_biased());
  int k = 0;
  for (int i = 0; i < l.n_nu; ++i) cov.nu2[i] = psi[k++] * sigma2;
  if (spec.fixed_tau2) {
    cov.tau2 = VectorXd::Constant(spec.n_tau2(), *spec.fixed_tau2);
  } else {
    cov.tau2.resize(spec.n_tau2());
    for (int i = 0; i < l.n_tau; ++i) cov.tau2[i] = psi[k++] * sigma2;
  }
  cov.phi = psi[k++];
  cov.delta = l.has_delta ? psi[k++] : 1.0;
  cov.alpha.resize(l.n_alpha);
  for (int i = 0; i < l.n_alpha; ++i) cov.alpha[i] = psi[k++];
  return cov;
}

VectorXd transform_psi(const VectorXd& psi, const PsiLayout& layout) {
  if (psi.size() != layout.size()) throw std::invalid_argument("psi length mismatch");
  VectorXd v(psi.size());
  const int n_ratio = layout.n_nu + layout.n_tau;
  for (int i = 0; i < n_ratio; ++i) {
    if (psi[i] < 0) throw std::invalid_argument("variance ratios must be nonnegative");
    v[i] = std::log(std::max(psi[i], kRatioClamp));
  }
  for (int i = n_ratio; i < n_ratio + 1 + (layout.has_delta ? 1 : 0); ++i) {
    if (!(psi[i] > 0)) throw std::invalid_argument("ranges must be positive");
    v[i] = std::log(psi[i]);
  }
  for (int k = 0; k < layout.n_alpha; ++k) {
    const int i = layout.alpha_index(k);
    if (!(psi[i] > -1 && psi[i] < 1))
      throw std::invalid_argument("cross-correlations must lie in (-1,1)");
    v[i] = std::log((1.0 + psi[i]) / (1.0 - psi[i]));
  }
  return v;
}

VectorXd untransform_psi(const VectorXd& v, const PsiLayout& layout) {
  if (v.size() != layout.size()) throw std::invalid_argument("psi length mismatch");
  VectorXd psi(v.size());
  const int n_log = layout.n_nu + layout.n_tau + 1 + (layout.has_delta ? 1 : 0);
  for (int i = 0; i < n_log; ++i) psi[i] = std::exp(v[i]);
  for (int k = 0; k < layout.n_alpha; ++k) {
    const int i = layout.alpha_index(k);
    psi[i] = std::tanh(0.5 * v[i]);
  }
  return psi;
}

// ---------------------------------------------------------------------------
// profiled objective
// ---------------------------------------------------------------------------

ProfiledObjective::ProfiledObjective(const ImportanceDensity& imp, const VectorXd& psi)
    : imp_(&imp) {
  if (imp.spec.fixed_tau2 && *imp.spec.fixed_tau2 != 0.0)
    throw std::invalid_argument(
        "profiling over sigma2 requires a fixed nugget to be exactly zero");
  const CovParams unit = unpack_psi(psi, 1.0, imp.spec);
  const MatrixXd v_psi = build_joint_covariance(unit, imp.spec, imp.data);
  auto lv = cholesky_lower(v_psi);
  if (!lv) return;  // valid_ stays false: profiled value is -inf
  valid_ = true;
  logdet_psi_ = lv->diagonal().array().log().sum();
  a_ = imp.samples;
  lv->triangularView<Eigen::Lower>().solveInPlace(a_);
  g_ = imp.design;
  lv->triangularView<Eigen::Lower>().solveInPlace(g_);
}

double ProfiledObjective::loglik(const VectorXd& beta, double sigma2) const {
  if (!valid_) return -kInf;
  if (!(sigma2 > 0)) throw std::invalid_argument("sigma2 must be positive");
  if (beta.size() != g_.cols()) throw std::invalid_argument("beta length mismatch");
  const double n = static_cast<double>(a_.rows());
  MatrixXd r = a_;
  r.colwise() -= (g_ * beta).eval();
  const VectorXd q = r.colwise().squaredNorm().transpose();
  const VectorXd w = (-0.5 * n * (kLog2Pi + std::log(sigma2)) - logdet_psi_ -
                      q.array() / (2.0 * sigma2))
                         .matrix() -
                     imp_->log_ref_density;
  return logmeanexp(w);
}

void ProfiledObjective::derivs(const VectorXd& beta, double sigma2, VectorXd& grad_beta,
                               double& grad_sigma2, MatrixXd* hessian) const {
  if (!valid_) throw std::runtime_error("profiled objective is not defined at this psi");
  if (!(sigma2 > 0)) throw std::invalid_argument("sigma2 must be positive");
  if (beta.size() != g_.cols()) throw std::invalid_argument("beta length mismatch");
  const double n = static_cast<double>(a_.rows());
  const Eigen::Index m = a_.cols();
  const Eigen::Index k = g_.cols();
  const double s2 = sigma2, s4 = s2 * s2, s6 = s4 * s2;

  MatrixXd r = a_;
  r.colwise() -= (g_ * beta).eval();
  const VectorXd q = r.colwise().squaredNorm().transpose();
  const MatrixXd u = g_.transpose() * r;  // k x m, per-sample beta scores (times s2)

  VectorXd w = (-0.5 * n * (kLog2Pi + std::log(s2)) - logdet_psi_ -
                q.array() / (2.0 * s2))
                   .matrix() -
               imp_->log_ref_density;
  const double mx = w.maxCoeff();
  VectorXd p = (w.array() - mx).exp();
  p /= p.sum();  // softmax weights over the importance samples

  const VectorXd u_bar = u * p;
  const double q_bar = q.dot(p);
  grad_beta = u_bar / s2;
  grad_sigma2 = -0.5 * n / s2 + 0.5 * q_bar / s4;

  if (!hessian) return;
  // E_p[second derivative] + Cov_p[first derivative] of the per-sample terms
  MatrixXd scores(k + 1, m);
  scores.topRows(k) = u / s2;
  scores.row(k) = (q.array() / (2.0 * s4) - 0.5 * n / s2).transpose();
  const VectorXd mean_score = scores * p;
  const MatrixXd weighted = scores.array().rowwise() * p.transpose().array();
  MatrixXd h = weighted * scores.transpose() - mean_score * mean_score.transpose();
  h.topLeftCorner(k, k) -= g_.transpose() * g_ / s2;
  h.block(0, k, k, 1) -= u_bar / s4;
  h.block(k, 0, 1, k) -= u_bar.transpose() / s4;
  h(k, k) += 0.5 * n / s4 - q_bar / s6;
  *hessian = h;
}

ProfiledObjective::Maximum ProfiledObjective::maximize(double tol) const {
  if (!valid_)
    throw std::runtime_error("cannot maximize: covariance not positive definite");
  const Eigen::Index k = g_.cols();
  const double n = static_cast<double>(a_.rows());

  // uniform-weight start: GLS beta against the sample average, moment sigma2
  const Eigen::LDLT<MatrixXd> gram(g_.transpose() * g_);
  if (gram.info() != Eigen::Success)
    throw std::runtime_error("design matrix is rank deficient after whitening");
  VectorXd b = gram.solve(g_.transpose() * a_.rowwise().mean());
  double s;
  {
    MatrixXd r = a_;
    r.colwise() -= (g_ * b).eval();
    s = std::log(std::max(r.colwise().squaredNorm().mean() / n, 1e-12));
  }

  Maximum out;
  double value = loglik(b, std::exp(s));
  VectorXd gb(k);
  double gs2 = 0.0;
  MatrixXd hess;
  for (int it = 0; it < 200; ++it) {
    out.iterations = it;
    derivs(b, std::exp(s), gb, gs2, &hess);
    VectorXd grad_nat(k + 1);
    grad_nat.head(k) = gb;
    grad_nat[k] = gs2;
    out.grad_norm = grad_nat.norm();
    if (out.grad_norm < tol) {
      out.beta = b;
      out.sigma2 = std::exp(s);
      out.value = value;
      return out;
    }

    // Newton step in (beta, log sigma2)
    const double s2 = std::exp(s);
    VectorXd gt(k + 1);
    gt.head(k) = gb;
    gt[k] = s2 * gs2;
    MatrixXd ht = hess;
    ht.block(0, k, k, 1) *= s2;
    ht.block(k, 0, 1, k) *= s2;
    ht(k, k) = s2 * gs2 + s2 * s2 * hess(k, k);

    VectorXd dir;
    Eigen::LDLT<MatrixXd> ldlt(-ht);
    if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0).all())
      dir = ldlt.solve(gt);
    else
      dir = gt;  // indefinite curvature far from the optimum: plain ascent
    if (dir.dot(gt) <= 0) dir = gt;

    double t = 1.0;
    bool moved = false;
    const double slope = dir.dot(gt);
    const double prev_value = value;
    for (int half = 0; half < 60; ++half) {
      const VectorXd bn = b + t * dir.head(k);
      const double sn = std::clamp(s + t * dir[k], -34.0, 34.0);
      const double vn = loglik(bn, std::exp(sn));
      if (std::isfinite(vn) && vn >= value + 1e-4 * t * slope) {
        b = bn;
        s = sn;
        value = vn;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (moved && out.grad_norm <= 1e3 * tol &&
        value - prev_value <= 1e-10 * (1.0 + std::abs(value)))
      break;  // progress is rounding noise and the gradient is already tiny
    if (!moved) {
      // Near a stationary point the Armijo test compares value changes that
      // sit below rounding noise; accept rather than spin or fail.
      if (out.grad_norm <= 1e3 * tol) break;
      std::ostringstream msg;
      msg << "profile maximization stalled at gradient norm " << out.grad_norm;
      throw std::runtime_error(msg.str());
    }
  }
  if (out.grad_norm <= 1e3 * tol) {
    out.beta = b;
    out.sigma2 = std::exp(s);
    out.value = value;
    return out;
  }
  std::ostringstream msg;
  msg << "profile maximization did not reach tolerance; gradient norm "
      << out.grad_norm;
  throw std::runtime_error(msg.str());
}

ProfiledObjective::Maximum profile_beta_sigma(const VectorXd& psi,
                                              const ImportanceDensity& imp) {
  ProfiledObjective prof(imp, psi);
  if (!prof.valid())
    throw std::runtime_error("profiled objective undefined: covariance not positive definite");
  return prof.maximize();
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

ParamSet default_init(const SurveyDataset& data, const ModelSpec& spec) {
  data.validate();
  spec.validate();
  if (spec.n_surveys != data.n_surveys())
    throw std::invalid_argument("model spec and data disagree on survey count");

  // logistic regression on the gold-standard rows, shared columns only
  int n_gold = 0;
  for (int i = 0; i < spec.n_surveys; ++i)
    if (!spec.biased[i]) n_gold += data.n_per_survey[i];
  const int shared = 1 + data.n_covariates();
  MatrixXd x(n_gold, shared);
  VectorXd y(n_gold), m(n_gold);
  int row = 0;
  for (int i = 0; i < spec.n_surveys; ++i) {
    if (spec.biased[i]) continue;
    const int oi = data.survey_offset(i);
    for (int j = 0; j < data.n_per_survey[i]; ++j, ++row) {
      x(row, 0) = 1.0;
      if (shared > 1) x.row(row).tail(shared - 1) = data.covariates.row(oi + j);
      y[row] = data.y[oi + j];
      m[row] = data.m[oi + j];
    }
  }
  VectorXd b = VectorXd::Zero(shared);
  const double ridge = 1e-6;
  for (int it = 0; it < 50; ++it) {
    VectorXd eta = x * b;
    VectorXd mp(n_gold), wdiag(n_gold);
    for (int j = 0; j < n_gold; ++j) {
      const double pj = inv_logit(eta[j]);
      mp[j] = m[j] * pj;
      wdiag[j] = std::max(m[j] * pj * (1.0 - pj), 1e-10);
    }
    MatrixXd h = x.transpose() * wdiag.asDiagonal() * x;
    h.diagonal().array() += ridge;
    const VectorXd g = x.transpose() * (y - mp) - ridge * b;
    const VectorXd step = h.ldlt().solve(g);
    b += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) break;
  }

  ParamSet init;
  init.beta = VectorXd::Zero(design_columns(data, spec));
  init.beta.head(shared) = b;

  double maxdist = 0.0;
  for (int i = 0; i < data.total_n(); ++i)
    for (int j = i + 1; j < data.total_n(); ++j)
      maxdist = std::max(maxdist, (data.loc.row(i) - data.loc.row(j)).norm());
  const double range0 = maxdist > 0 ? 0.1 * maxdist : 1.0;

  init.cov.sigma2 = 1.0;
  init.cov.nu2 = VectorXd::Constant(spec.n_biased(), 0.5);
  init.cov.tau2 = spec.fixed_tau2 ? VectorXd::Constant(spec.n_tau2(), *spec.fixed_tau2)
                                  : VectorXd::Constant(spec.n_tau2(), 1.0);
  init.cov.phi = range0;
  init.cov.delta = range0;
  init.cov.alpha = VectorXd::Constant(spec.n_alpha(), 0.5);
  return init;
}

// ---------------------------------------------------------------------------
// full fit
// ---------------------------------------------------------------------------

FitResult fit(const SurveyDataset& data, const ModelSpec& spec,
              const ParamSet& init, const FitConfig& config) {
  data.validate();
  spec.validate();
  init.cov.validate(spec);
  if (config.refresh_cap < 1) throw std::invalid_argument("refresh cap must be >= 1");
  if (spec.fixed_tau2 && *spec.fixed_tau2 != 0.0)
    throw std::invalid_argument(
        "profiling over sigma2 requires a fixed nugget to be exactly zero");

  const PsiLayout layout = PsiLayout::from_spec(spec);
  const ParamLayout playout = ParamLayout::make(data, spec);

  FitResult out;
  ParamSet current = init;
  VectorXd vhat = transform_psi(pack_psi(current.cov, spec), layout);

  for (int refresh = 0; refresh < config.refresh_cap; ++refresh) {
    ChainConfig cc = config.chain;
    cc.seed = mix_seed(config.seed, static_cast<std::uint64_t>(refresh));
    const ImportanceDensity imp =
        make_importance(data, spec, current, cc, config.lambda_at_mode);

    auto objective = [&](const VectorXd& v) -> double {
      ProfiledObjective prof(imp, untransform_psi(v, layout));
      if (!prof.valid()) return kInf;
      try {
        return -prof.maximize().value;
      } catch (const std::runtime_error&) {
        return kInf;  // unusable psi: reject the candidate
      }
    };

    const VectorXd v0 = transform_psi(pack_psi(current.cov, spec), layout);
    const int starts = refresh == 0 ? std::max(1, config.starts) : 1;
    MinimizeOptions mo;
    mo.max_iterations = 120;
    mo.grad_tol = 2e-5;
    mo.rel_step = 1e-5;

    double best = kInf;
    VectorXd best_v;
    auto attempt = [&](const VectorXd& vs) {
      try {
        const MinimizeResult r = minimize_bfgs(objective, vs, mo);
        if (r.value < best) {
          best = r.value;
          best_v = r.x;
        }
      } catch (const std::invalid_argument&) {
        // start point infeasible, leave best unchanged
      }
    };
    for (int st = 0; st < starts; ++st) {
      VectorXd vs = v0;
      if (st > 0) {
        Rng perturb(mix_seed(config.seed, 0x5724ull + 101ull * refresh + st));
        for (Eigen::Index i = 0; i < vs.size(); ++i) vs[i] += perturb.uniform(-0.7, 0.7);
      }
      attempt(vs);
    }
    // A warm start can sit exactly on a degenerate corner when the previous
    // refresh was pinned at a transform bound and V(psi) no longer factorizes
    // there. Recover by shrinking toward the interior (where V = R + I is
    // always well conditioned) with a little noise, instead of giving up.
    for (int st = starts; st < starts + 8 && !std::isfinite(best); ++st) {
      Rng perturb(mix_seed(config.seed, 0x5724ull + 101ull * refresh + st));
      VectorXd vs = v0;
      for (Eigen::Index i = 0; i < vs.size(); ++i) vs[i] += perturb.uniform(-1.0, 1.0);
      vs *= 1.0 / (1.0 + 0.5 * (st - starts));
      attempt(vs);
    }
    if (!std::isfinite(best))
      throw std::runtime_error("every starting value left the profiled objective undefined");

    ProfiledObjective prof(imp, untransform_psi(best_v, layout));
    const ProfiledObjective::Maximum mx = prof.maximize();
    ParamSet next;
    next.beta = mx.beta;
    next.cov = unpack_psi(untransform_psi(best_v, layout), mx.sigma2, spec);

    const VectorXd eta_old = playout.to_transformed(current);
    const VectorXd eta_new = playout.to_transformed(next);
    double rel = 0.0;
    for (Eigen::Index i = 0; i < eta_old.size(); ++i)
      rel = std::max(rel, std::abs(eta_new[i] - eta_old[i]) /
                              std::max(1.0, std::abs(eta_old[i])));

    current = next;
    vhat = best_v;
    out.final_loglik = mx.value;
    out.refreshes = refresh + 1;
    if (rel < config.refresh_tol) {
      out.converged = true;
      break;
    }
  }

  out.estimate = current;
  out.boundary.assign(static_cast<size_t>(layout.size()), false);
  const int n_ratio = layout.n_nu + layout.n_tau;
  for (int i = 0; i < layout.size(); ++i) {
    const bool at_clamp = i < n_ratio && vhat[i] <= std::log(kRatioClamp) + 1e-6;
    const bool at_box = std::abs(vhat[i]) >= 30.0 - 1e-6;
    out.boundary[static_cast<size_t>(i)] = at_clamp || at_box;
  }

  // final draw at the estimate, the density downstream prediction conditions on
  ChainConfig fc = config.chain;
  fc.seed = mix_seed(config.seed, 0xF17ull + static_cast<std::uint64_t>(out.refreshes));
  out.importance = make_importance(data, spec, current, fc, config.lambda_at_mode);
  return out;
}

// ---------------------------------------------------------------------------
// parameter layouts for reporting
// ---------------------------------------------------------------------------

ParamLayout ParamLayout::make(const SurveyDataset& data, const ModelSpec& spec) {
  ParamLayout l;
  l.n_beta = design_columns(data, spec);
  l.psi = PsiLayout::from_spec(spec);
  return l;
}

VectorXd ParamLayout::to_natural(const ParamSet& p) const {
  if (p.beta.size() != n_beta) throw std::invalid_argument("beta length mismatch");
  VectorXd v(size());
  v.head(n_beta) = p.beta;
  int k = n_beta;
  v[k++] = p.cov.sigma2;
  for (int i = 0; i < psi.n_nu; ++i) v[k++] = p.cov.nu2[i];
  for (int i = 0; i < psi.n_tau; ++i) v[k++] = p.cov.tau2[i];
  v[k++] = p.cov.phi;
  if (psi.has_delta) v[k++] = p.cov.delta;
  for (int i = 0; i < psi.n_alpha; ++i) v[k++] = p.cov.alpha[i];
  return v;
}

VectorXd ParamLayout::to_transformed(const ParamSet& p) const {
  VectorXd nat = to_natural(p);
  VectorXd v = nat;
  int k = n_beta;
  const int n_var = 1 + psi.n_nu + psi.n_tau;  // sigma2 and the variance components
  for (int i = 0; i < n_var; ++i, ++k) v[k] = std::log(std::max(nat[k], kRatioClamp));
  v[k] = std::log(nat[k]);  // phi
  ++k;
  if (psi.has_delta) {
    v[k] = std::log(nat[k]);
    ++k;
  }
  for (int i = 0; i < psi.n_alpha; ++i, ++k) {
    const double a = std::clamp(nat[k], -1.0 + 1e-12, 1.0 - 1e-12);
    v[k] = std::log((1.0 + a) / (1.0 - a));
  }
  return v;
}

ParamSet ParamLayout::from_transformed(const VectorXd& eta, const ModelSpec& spec) const {
  if (eta.size() != size()) throw std::invalid_argument("eta length mismatch");
  ParamSet p;
  p.beta = eta.head(n_beta);
  int k = n_beta;
  p.cov.sigma2 = std::exp(eta[k++]);
  p.cov.nu2.resize(psi.n_nu);
  for (int i = 0; i < psi.n_nu; ++i) p.cov.nu2[i] = std::exp(eta[k++]);
  if (spec.fixed_tau2) {
    p.cov.tau2 = VectorXd::Constant(spec.n_tau2(), *spec.fixed_tau2);
  } else {
    p.cov.tau2.resize(spec.n_tau2());
    for (int i = 0; i < psi.n_tau; ++i) p.cov.tau2[i] = std::exp(eta[k++]);
  }
  p.cov.phi = std::exp(eta[k++]);
  p.cov.delta = psi.has_delta ? std::exp(eta[k++]) : 1.0;
  p.cov.alpha.resize(psi.n_alpha);
  for (int i = 0; i < psi.n_alpha; ++i) p.cov.alpha[i] = std::tanh(0.5 * eta[k++]);
  return p;
}

VectorXd ParamLayout::jacobian_diag(const VectorXd& eta) const {
  if (eta.size() != size()) throw std::invalid_argument("eta length mismatch");
  VectorXd j = VectorXd::Ones(size());
  int k = n_beta;
  const int n_log = 1 + psi.n_nu + psi.n_tau + 1 + (psi.has_delta ? 1 : 0);
  for (int i = 0; i < n_log; ++i, ++k) j[k] = std::exp(eta[k]);
  for (int i = 0; i < psi.n_alpha; ++i, ++k) {
    const double a = std::tanh(0.5 * eta[k]);
    j[k] = 0.5 * (1.0 - a * a);
  }
  return j;
}

std::vector<std::string> ParamLayout::names(const SurveyDataset& data,
                                            const ModelSpec& spec) const {
  std::vector<std::string> out = design_column_names(data, spec);
  out.push_back("sigma2");
  int bi = 0;
  for (int i = 0; i < spec.n_surveys; ++i) {
    if (!spec.biased[i]) continue;
    out.push_back(psi.n_nu == 1 ? "nu2" : "nu2_s" + std::to_string(i + 1));
    ++bi;
  }
  for (int i = 0; i < psi.n_tau; ++i)
    out.push_back(spec.tie_tau2 ? "tau2" : "tau2_s" + std::to_string(i + 1));
  out.push_back("phi");
  if (psi.has_delta) out.push_back("delta");
  for (int f = 0; f < spec.n_fields(); ++f)
    for (int g = f + 1; g < spec.n_fields(); ++g)
      out.push_back("alpha_" + std::to_string(f + 1) + std::to_string(g + 1));
  return out;
}

AsymptoticCovariance asymptotic_covariance(const ParamSet& estimate,
                                           const ImportanceDensity& imp) {
  AsymptoticCovariance out;
  out.layout = ParamLayout::make(imp.data, imp.spec);
  const VectorXd eta0 = out.layout.to_transformed(estimate);

  auto objective = [&](const VectorXd& eta) {
    const ParamSet p = out.layout.from_transformed(eta, imp.spec);
    return mcml_objective(p.beta, p.cov, imp);
  };
  const MatrixXd hess = numerical_hessian(objective, eta0);

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(-hess);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition of the information matrix failed");
  VectorXd ev = eig.eigenvalues().reverse();  // descending
  out.information_eigenvalues = ev;
  if (ev.minCoeff() <= 0) {
    std::ostringstream msg;
    msg << "information matrix is singular; eigenvalues (descending):";
    for (Eigen::Index i = 0; i < ev.size(); ++i) msg << " " << ev[i];
    throw std::runtime_error(msg.str());
  }

  const MatrixXd u = eig.eigenvectors();
  out.cov_transformed =
      u * eig.eigenvalues().cwiseInverse().asDiagonal() * u.transpose();
  const VectorXd j = out.layout.jacobian_diag(eta0);
  out.cov_natural = j.asDiagonal() * out.cov_transformed * j.asDiagonal();
  return out;
}

// ---------------------------------------------------------------------------
// simulation from the fitted model (bootstrap, simulation study)
// ---------------------------------------------------------------------------

SimulatedData simulate_from_model(const ParamSet& params, const SurveyDataset& design,
                                  const ModelSpec& spec, Rng& rng,
                                  const MatrixXd& extra_loc, int extra_field_survey) {
  design.validate();
  spec.validate();
  params.cov.validate(spec);
  const int n = design.total_n();
  const int q = static_cast<int>(extra_loc.rows());
  const MatrixXd d = build_design_matrix(design, spec);
  if (params.beta.size() != d.cols())
    throw std::invalid_argument("beta length does not match the design matrix");

  MatrixXd big(n + q, n + q);
  big.topLeftCorner(n, n) = build_joint_covariance(params.cov, spec, design);
  if (q > 0) {
    if (extra_field_survey < 0 || extra_field_survey >= spec.n_surveys)
      throw std::invalid_argument("extra_field_survey out of range");
    MatrixXd cross(n, q);
    int row = 0;
    for (int i = 0; i < spec.n_surveys; ++i) {
      const double a = alpha_between_surveys(params.cov, spec, i, extra_field_survey);
      const MatrixXd block =
          params.cov.sigma2 * a *
          correlation_matrix(design.loc.middleRows(row, design.n_per_survey[i]),
                             extra_loc, params.cov.phi);
      cross.middleRows(row, design.n_per_survey[i]) = block;
      row += design.n_per_survey[i];
    }
    big.topRightCorner(n, q) = cross;
    big.bottomLeftCorner(q, n) = cross.transpose();
    big.bottomRightCorner(q, q) =
        params.cov.sigma2 * correlation_matrix(extra_loc, extra_loc, params.cov.phi);
  }

  auto lv = cholesky_lower(big);
  if (!lv) throw std::runtime_error("simulation covariance is not positive definite");

  VectorXd z(n + q);
  for (int i = 0; i < n + q; ++i) z[i] = rng.normal();
  const VectorXd u = (*lv) * z;

  SimulatedData sim;
  sim.t = d * params.beta + u.head(n);
  sim.y.resize(n);
  for (int j = 0; j < n; ++j)
    sim.y[j] = rng.binomial(static_cast<int>(design.m[j]), inv_logit(sim.t[j]));
  sim.extra_s = u.tail(q);
  return sim;
}

BootstrapResult parametric_bootstrap(const ParamSet& fitted, const SurveyDataset& data,
                                     const ModelSpec& spec,
                                     const BootstrapConfig& config) {
  data.validate();
  spec.validate();
  fitted.cov.validate(spec);
  if (config.replicates < 1) throw std::invalid_argument("need at least one replicate");

  const ParamLayout layout = ParamLayout::make(data, spec);
  const int b_total = config.replicates;
  std::vector<VectorXd> slots(static_cast<size_t>(b_total));
  std::vector<char> ok(static_cast<size_t>(b_total), 0);

  std::atomic<int> cursor{0};
  auto worker = [&]() {
    for (;;) {
      const int b = cursor.fetch_add(1);
      if (b >= b_total) return;
      Rng rng(config.seed ^ static_cast<std::uint64_t>(b));
      try {
        SimulatedData sim = simulate_from_model(fitted, data, spec, rng);
        SurveyDataset rep = data;
        rep.y = sim.y;
        FitConfig fc;
        fc.chain = config.chain;
        fc.refresh_cap = config.refresh_cap;
        fc.refresh_tol = config.refresh_tol;
        fc.starts = config.starts;
        fc.seed = mix_seed(config.seed ^ static_cast<std::uint64_t>(b), 0xB007ull);
        const FitResult r = fit(rep, spec, fitted, fc);
        slots[static_cast<size_t>(b)] = layout.to_natural(r.estimate);
        ok[static_cast<size_t>(b)] = 1;
      } catch (const std::exception&) {
        // replicate excluded; slot stays empty
      }
    }
  };

  const int n_threads = std::clamp(config.threads, 1, b_total);
  std::vector<std::thread> pool;
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  BootstrapResult out;
  out.names = layout.names(data, spec);
  out.requested = b_total;
  int used = 0;
  for (int b = 0; b < b_total; ++b) used += ok[static_cast<size_t>(b)] ? 1 : 0;
  out.excluded = b_total - used;
  if (used == 0) throw std::runtime_error("every bootstrap replicate failed to refit");
  out.estimates.resize(used, layout.size());
  int row = 0;
  for (int b = 0; b < b_total; ++b)
    if (ok[static_cast<size_t>(b)]) out.estimates.row(row++) = slots[static_cast<size_t>(b)];

  out.lower.resize(layout.size());
  out.upper.resize(layout.size());
  for (int j = 0; j < layout.size(); ++j) {
    std::vector<double> col(out.estimates.col(j).data(),
                            out.estimates.col(j).data() + used);
    out.lower[j] = quantile_type1(col, 0.025);
    out.upper[j] = quantile_type1(col, 0.975);
  }
  out.exclusion_warning = out.excluded > b_total / 10;
  return out;
}

}  // namespace prevfuse
