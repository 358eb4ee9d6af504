// Acceptance gate: eight checks with pinned tolerances, one printed line
// each. Exit status is the number of failed criteria.
//
//   acceptance [--cli PATH] [--replicates N] [numbers...]
//
// Numbers select a subset (default: all eight). --cli names the command-line
// binary, needed by criterion 8. --replicates shrinks the replication
// criteria 4-6 for pilot runs; the output is then marked [pilot] and must
// not be read as the gate.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "../tests/oracles.hpp"
#include "prevfuse/covariance.hpp"
#include "prevfuse/io.hpp"
#include "prevfuse/mcml.hpp"
#include "prevfuse/model.hpp"
#include "prevfuse/optim.hpp"
#include "prevfuse/predict.hpp"
#include "prevfuse/rng.hpp"
#include "prevfuse/simstudy.hpp"

using namespace prevfuse;

namespace {

int g_replicates = 100;  // criteria 4-6; below 100 marks the run as a pilot

struct Criterion {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << (detail.tellp() > 0 ? "; " : "") << "FAILED " << what;
    }
  }
  void note(const std::string& what) {
    detail << (detail.tellp() > 0 ? "; " : "") << what;
  }
};

double run_seconds(const std::function<void(Criterion&)>& body, Criterion& c) {
  const auto t0 = std::chrono::steady_clock::now();
  body(c);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

ChainConfig chain_of(long total, long burnin, int thin, std::uint64_t seed) {
  ChainConfig c;
  c.total = total;
  c.burnin = burnin;
  c.thin = thin;
  c.seed = seed;
  return c;
}

ModelSpec single_spec() {
  ModelSpec s;
  s.n_surveys = 1;
  s.biased = {false};
  s.time_index = {0};
  return s;
}

// ---------------------------------------------------------------------------
// 1. Monte Carlo likelihood vs adaptive quadrature on tiny instances
// ---------------------------------------------------------------------------

void criterion1(Criterion& c) {
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const int n = 1 + k % 3;
    Rng rng(9000 + static_cast<std::uint64_t>(k));

    SurveyDataset d;
    d.loc.resize(n, 2);
    for (int i = 0; i < n; ++i) {
      d.loc(i, 0) = rng.uniform();
      d.loc(i, 1) = rng.uniform();
    }
    d.m.resize(n);
    for (int i = 0; i < n; ++i) d.m[i] = 5 + static_cast<int>(rng.uniform() * 16);
    d.covariates.resize(n, 0);
    d.n_per_survey = {n};
    const ModelSpec spec = single_spec();

    ParamSet ref;
    ref.beta = VectorXd::Constant(1, rng.uniform(-1.0, 1.0));
    ref.cov.sigma2 = 0.5 + rng.uniform();
    ref.cov.tau2 = VectorXd::Constant(1, 0.3 * rng.uniform());
    ref.cov.phi = 0.1 + 0.4 * rng.uniform();
    d.y = VectorXd::Zero(n);
    d.y = simulate_from_model(ref, d, spec, rng).y;

    const VectorXd beta = (ref.beta.array() + rng.uniform(-0.4, 0.4)).matrix();
    CovParams cov = ref.cov;
    cov.sigma2 *= std::exp(rng.uniform(-0.3, 0.3));
    cov.tau2[0] = 0.3 * rng.uniform();
    cov.phi *= std::exp(rng.uniform(-0.3, 0.3));

    const ImportanceDensity imp = make_importance(
        d, spec, ref, chain_of(60000, 10000, 1, 100 + static_cast<std::uint64_t>(k)));
    const double approx = mcml_objective(beta, cov, imp);

    oracle::LatentIntegrand f0;
    f0.mu = VectorXd::Constant(n, ref.beta[0]);
    f0.V = build_joint_covariance(ref.cov, spec, d);
    f0.y = d.y;
    f0.m = d.m;
    oracle::LatentIntegrand f1 = f0;
    f1.mu = VectorXd::Constant(n, beta[0]);
    f1.V = build_joint_covariance(cov, spec, d);
    const double exact =
        oracle::gh_marginal_loglik(f1, 64) - oracle::gh_marginal_loglik(f0, 64);

    worst = std::max(worst, std::abs(approx - exact));
  }
  c.require(worst <= 0.05, "max |MCML - quadrature| = " + fmt1(worst) + " > 0.05");
  c.note("20 points, n <= 3, m = 50000, max gap " + fmt1(worst));
}

// ---------------------------------------------------------------------------
// 2. single-site posterior against quadrature truth
// ---------------------------------------------------------------------------

void criterion2(Criterion& c) {
  SurveyDataset d;
  d.loc.resize(1, 2);
  d.loc << 0.5, 0.5;
  d.m = VectorXd::Constant(1, 10.0);
  d.y = VectorXd::Constant(1, 7.0);
  d.covariates.resize(1, 0);
  d.n_per_survey = {1};

  ParamSet ref;
  ref.beta = VectorXd::Zero(1);
  ref.cov.sigma2 = 1.0;
  ref.cov.tau2 = VectorXd::Zero(1);
  ref.cov.phi = 0.2;

  const ImportanceDensity imp =
      make_importance(d, single_spec(), ref, chain_of(60000, 10000, 1, 2));
  const double mean = imp.samples.row(0).mean();
  const double sd = std::sqrt((imp.samples.row(0).array() - mean).square().sum() /
                              (imp.m() - 1.0));
  const oracle::SingleSiteMoments truth = oracle::single_site_posterior(7, 10, 0.0, 1.0);

  c.require(std::abs(mean - truth.mean) <= 0.02,
            "|mean - truth| = " + fmt1(std::abs(mean - truth.mean)) + " > 0.02");
  c.require(std::abs(sd / truth.sd - 1.0) <= 0.05,
            "sd off by " + fmt1(100.0 * std::abs(sd / truth.sd - 1.0)) + "%");
  c.require(imp.chain_acceptance >= 0.45 && imp.chain_acceptance <= 0.70,
            "acceptance " + fmt1(imp.chain_acceptance) + " outside [0.45, 0.70]");
  c.note("mean " + fmt1(mean) + " vs " + fmt1(truth.mean) + ", sd " + fmt1(sd) +
         " vs " + fmt1(truth.sd) + ", acceptance " + fmt1(imp.chain_acceptance));
}

// ---------------------------------------------------------------------------
// 3. analytic (beta, sigma2) derivatives vs central differences
// ---------------------------------------------------------------------------

void criterion3(Criterion& c) {
  Rng rng(33);
  SurveyDataset d;
  d.loc.resize(50, 2);
  for (int i = 0; i < 50; ++i) {
    d.loc(i, 0) = rng.uniform();
    d.loc(i, 1) = rng.uniform();
  }
  d.m = VectorXd::Constant(50, 12.0);
  d.covariates.resize(50, 1);
  for (int i = 0; i < 50; ++i) d.covariates(i, 0) = rng.normal();
  d.covariate_names = {"cov1"};
  d.n_per_survey = {30, 20};

  ModelSpec spec;
  spec.n_surveys = 2;
  spec.biased = {false, true};
  spec.time_index = {0, 0};
  spec.bias_mask = {0};

  ParamSet ref;
  ref.beta = (VectorXd(3) << 0.4, -0.3, -0.5).finished();
  ref.cov.sigma2 = 1.1;
  ref.cov.nu2 = VectorXd::Constant(1, 0.5);
  ref.cov.tau2 = VectorXd::Constant(1, 0.3);
  ref.cov.phi = 0.2;
  ref.cov.delta = 0.1;
  d.y = VectorXd::Zero(50);
  d.y = simulate_from_model(ref, d, spec, rng).y;

  const ImportanceDensity imp =
      make_importance(d, spec, ref, chain_of(6000, 2000, 2, 3));
  const VectorXd psi = pack_psi(ref.cov, spec);
  const ProfiledObjective po(imp, psi);
  c.require(po.valid(), "profiled objective invalid at the reference psi");
  if (!po.valid()) return;

  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    Rng prng(500 + static_cast<std::uint64_t>(k));
    VectorXd beta(3);
    for (int j = 0; j < 3; ++j) beta[j] = ref.beta[j] + prng.uniform(-0.5, 0.5);
    const double sigma2 = ref.cov.sigma2 * std::exp(prng.uniform(-0.4, 0.4));

    VectorXd grad_beta;
    double grad_sigma2 = 0.0;
    po.derivs(beta, sigma2, grad_beta, grad_sigma2);

    const ObjectiveFn f = [&](const VectorXd& x) {
      return po.loglik(x.head(3), x[3]);
    };
    VectorXd x(4);
    x << beta, sigma2;
    const VectorXd fd = numerical_gradient(f, x);
    for (int j = 0; j < 4; ++j) {
      const double a = j < 3 ? grad_beta[j] : grad_sigma2;
      worst = std::max(worst, std::abs(a - fd[j]) / std::max(std::abs(fd[j]), 1e-6));
    }
  }
  c.require(worst < 1e-5, "max relative gradient error " + fmt1(worst) + " >= 1e-5");
  c.note("10 points, n = 50, max relative error " + fmt1(worst));
}

// ---------------------------------------------------------------------------
// 4-6. replicated simulation studies
// ---------------------------------------------------------------------------

const MetricRow& find_row(const MetricsTable& t, const std::string& analysis,
                          const std::string& target) {
  for (const MetricRow& r : t.rows)
    if (r.analysis == analysis && r.target == target) return r;
  throw std::runtime_error("missing metric row " + analysis + "/" + target);
}

// Shorter chains than the library defaults keep the single-core runtime
// inside the harness budget; the importance-sample count m stays at 2000.
void tune_study(Scenario& sc) {
  sc.chain.total = 26000;
  sc.chain.burnin = 6000;
  sc.chain.thin = 10;
  sc.starts = 1;
  sc.refresh_cap = 4;
  sc.threads = 1;
}

void criterion4(Criterion& c) {
  double rb_nu2[3], rb_delta[3];
  int failures = 0;
  MetricsTable first;
  for (int s = 1; s <= 3; ++s) {
    Scenario sc = make_ident_scenario(s, g_replicates, 4000 + s);
    tune_study(sc);  // m = 2000 per fit
    const MetricsTable t = run_scenario(sc);
    failures += t.failures;
    rb_nu2[s - 1] = find_row(t, "J", "nu2").rel_bias;
    rb_delta[s - 1] = find_row(t, "J", "delta").rel_bias;
    if (s == 1) first = t;
  }

  for (const char* name : {"beta1", "beta2", "sigma2", "phi"}) {
    const MetricRow& r = find_row(first, "J", name);
    c.require(std::isfinite(r.rel_bias) && std::abs(r.rel_bias) <= 0.15,
              std::string("scenario 1 RB(") + name + ") = " + fmt1(r.rel_bias) +
                  " outside [-0.15, 0.15]");
  }
  // identifiability degrades as the biased survey's center moves from inside
  // the region (1) to far outside (3); the middle scenario is reported but
  // not gated, since a 100-replicate mean of these heavy-tailed estimates
  // wobbles at that resolution
  c.require(std::abs(rb_nu2[0]) < std::abs(rb_nu2[2]),
            "|RB(nu2)| did not grow from scenario 1 to 3: " + fmt1(rb_nu2[0]) +
                ", " + fmt1(rb_nu2[1]) + ", " + fmt1(rb_nu2[2]));
  c.require(std::abs(rb_delta[0]) < std::abs(rb_delta[2]),
            "|RB(delta)| did not grow from scenario 1 to 3: " + fmt1(rb_delta[0]) +
                ", " + fmt1(rb_delta[1]) + ", " + fmt1(rb_delta[2]));
  c.require(find_row(first, "J", "beta1").used >= (9 * g_replicates) / 10,
            "more than 10% of scenario-1 fits failed");
  c.note("RB(nu2) " + fmt1(rb_nu2[0]) + " -> " + fmt1(rb_nu2[1]) + " -> " +
         fmt1(rb_nu2[2]) + ", RB(delta) " + fmt1(rb_delta[0]) + " -> " +
         fmt1(rb_delta[1]) + " -> " + fmt1(rb_delta[2]) + ", failed fits " +
         std::to_string(failures));
}

void criterion5(Criterion& c) {
  Scenario sc = make_qv_scenario(1.0, g_replicates, 5001);
  tune_study(sc);
  const MetricsTable t = run_scenario(sc);

  const double rmse_j = find_row(t, "J", "S1(x0)").rmse;
  const double rmse_f = find_row(t, "FSO", "S1(x0)").rmse;
  const double rmse_n = find_row(t, "N", "S1(x0)").rmse;
  const double cic_j = find_row(t, "J", "beta1").cic;
  const double cic_n = find_row(t, "N", "beta1").cic;

  c.require(rmse_j <= rmse_f && rmse_f <= rmse_n,
            "RMSE(S1(x0)) not ordered J <= FSO <= N: " + fmt1(rmse_j) + ", " +
                fmt1(rmse_f) + ", " + fmt1(rmse_n));
  c.require(cic_j >= 0.90 && cic_j <= 0.98,
            "CIC(J, beta1) = " + fmt1(cic_j) + " outside [0.90, 0.98]");
  c.require(cic_n < 0.90, "CIC(N, beta1) = " + fmt1(cic_n) + " >= 0.90");
  c.note("RMSE(S1(x0)) J/FSO/N " + fmt1(rmse_j) + "/" + fmt1(rmse_f) + "/" +
         fmt1(rmse_n) + ", CIC(beta1) J " + fmt1(cic_j) + ", N " + fmt1(cic_n) +
         ", failed fits " + std::to_string(t.failures));
}

void criterion6(Criterion& c) {
  Scenario sc = make_tv_scenario(0.8, g_replicates, 6001);
  tune_study(sc);
  const MetricsTable t = run_scenario(sc);

  const double rmse_j = find_row(t, "J", "log_phi").rmse;
  const double rmse_f = find_row(t, "FSO", "log_phi").rmse;
  const double cic_n = find_row(t, "N", "beta1").cic;

  c.require(rmse_j < rmse_f, "RMSE(log phi) J = " + fmt1(rmse_j) +
                                 " not below FSO = " + fmt1(rmse_f));
  c.require(cic_n < 0.60, "CIC(N, beta1) = " + fmt1(cic_n) + " >= 0.60");
  c.note("RMSE(log phi) J " + fmt1(rmse_j) + " vs FSO " + fmt1(rmse_f) +
         ", CIC(N, beta1) " + fmt1(cic_n) + ", failed fits " +
         std::to_string(t.failures));
}

// ---------------------------------------------------------------------------
// 7. structural identities
// ---------------------------------------------------------------------------

void criterion7(Criterion& c) {
  Rng rng(77);
  SurveyDataset d;
  d.loc.resize(12, 2);
  for (int i = 0; i < 12; ++i) {
    d.loc(i, 0) = rng.uniform();
    d.loc(i, 1) = rng.uniform();
  }
  d.m = VectorXd::Constant(12, 9.0);
  d.covariates.resize(12, 0);
  d.n_per_survey = {7, 5};

  ModelSpec spec;
  spec.n_surveys = 2;
  spec.biased = {false, true};
  spec.time_index = {0, 0};
  spec.bias_mask = {0};

  ParamSet ref;
  ref.beta = (VectorXd(2) << 0.3, -0.4).finished();
  ref.cov.sigma2 = 1.2;
  ref.cov.nu2 = VectorXd::Constant(1, 0.4);
  ref.cov.tau2 = VectorXd::Constant(1, 0.35);
  ref.cov.phi = 0.2;
  ref.cov.delta = 0.1;
  d.y = VectorXd::Zero(12);
  d.y = simulate_from_model(ref, d, spec, rng).y;

  const ImportanceDensity imp =
      make_importance(d, spec, ref, chain_of(3000, 500, 5, 11));
  c.require(mcml_objective(ref.beta, ref.cov, imp) == 0.0,
            "log L_m at the reference is not exactly zero");

  // grid point 0 coincides with data site 2 of the target survey; with the
  // nugget included the conditional is degenerate there
  PredictionGrid grid;
  grid.loc.resize(3, 2);
  grid.loc.row(0) = d.loc.row(2);
  grid.loc.row(1) << 0.33, 0.44;
  grid.loc.row(2) << 0.6, 0.7;
  grid.covariates.resize(3, 0);
  grid.target_survey = 0;
  grid.include_nugget = true;

  const ConditionalMvn cm =
      conditional_mvn_params(imp.samples.col(0), grid, ref, d, spec);
  c.require(std::abs(cm.cov(0, 0)) <= 1e-8,
            "coincident-point conditional variance " + fmt1(cm.cov(0, 0)));
  c.require(std::abs(cm.mean[0] - imp.samples(2, 0)) <= 1e-6,
            "coincident-point conditional mean misses the data-site value");

  const PredictiveSurface surf = sample_predictive_surfaces(
      imp.samples, grid, ref, d, spec, 99);
  const double repro =
      (surf.latent.row(0) - imp.samples.row(2)).cwiseAbs().maxCoeff();
  c.require(repro <= 1e-8,
            "coincident-point draws deviate from the conditioning values by " +
                fmt1(repro));

  const std::vector<double> thresholds = {0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  const PredictiveSummary s = summarize(surf, thresholds);
  bool monotone = true;
  for (int i = 0; i < grid.q(); ++i)
    for (size_t k = 1; k < thresholds.size(); ++k)
      monotone = monotone && s.exceedance(i, static_cast<Eigen::Index>(k)) <=
                                 s.exceedance(i, static_cast<Eigen::Index>(k - 1));
  c.require(monotone, "exceedance probabilities not monotone in the threshold");
  bool q_ordered = true;
  for (int i = 0; i < grid.q(); ++i)
    for (size_t k = 1; k < s.levels.size(); ++k)
      q_ordered = q_ordered && s.quantiles(i, static_cast<Eigen::Index>(k)) >=
                                   s.quantiles(i, static_cast<Eigen::Index>(k - 1));
  c.require(q_ordered, "quantiles not monotone in the level");
  c.note("reference objective exactly 0, coincident variance " + fmt1(cm.cov(0, 0)) +
         ", exceedance and quantile orderings hold");
}

// ---------------------------------------------------------------------------
// 8. command-line determinism and thread invariance
// ---------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void put(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

void criterion8(Criterion& c, const std::string& cli) {
  if (cli.empty()) {
    c.require(false, "no --cli path given; cannot drive the binary");
    return;
  }
  char tmpl[] = "/tmp/prevfuse_accept_XXXXXX";
  const char* dirp = ::mkdtemp(tmpl);
  if (!dirp) {
    c.require(false, "mkdtemp failed");
    return;
  }
  const std::filesystem::path dir(dirp);

  put(dir / "run.ini",
      "[model]\n"
      "biased = 0,1\n"
      "bias_covariates = intercept\n"
      "fixed_tau2 = 0\n"
      "[chain]\n"
      "total = 2500\n"
      "burnin = 500\n"
      "thin = 5\n"
      "[mcml]\n"
      "seed = 9\n"
      "refresh_cap = 2\n"
      "starts = 1\n"
      "[bootstrap]\n"
      "replicates = 4\n"
      "total = 1500\n"
      "burnin = 300\n"
      "thin = 6\n"
      "refresh_cap = 2\n"
      "[predict]\n"
      "target_survey = 1\n"
      "include_nugget = false\n"
      "[simulate]\n"
      "n = 25,20\n"
      "biased = 0,1\n"
      "time_index = 0,0\n"
      "n_covariates = 1\n"
      "bias_covariates = intercept\n"
      "m = 8\n"
      "beta = 0.4, -0.2, 0.3\n"
      "sigma2 = 0.8\n"
      "nu2 = 0.5\n"
      "phi = 0.15\n"
      "delta = 0.1\n"
      "fixed_tau2 = 0\n"
      "[simstudy]\n"
      "scenario = qv\n"
      "nu2 = 1.0\n"
      "replicates = 2\n"
      "total = 1200\n"
      "burnin = 300\n"
      "thin = 6\n");
  put(dir / "grid.csv",
      "x,y,cov1\n"
      "0.2,0.2,0.1\n"
      "0.4,0.6,-0.4\n"
      "0.8,0.3,0.9\n"
      "0.5,0.5,0.0\n");

  auto run = [&](const std::string& args) {
    const std::string cmd = "'" + cli + "' " + args + " > /dev/null 2>>'" +
                            (dir / "stderr.log").string() + "'";
    return std::system(cmd.c_str());
  };
  const std::string cfg = " --config '" + (dir / "run.ini").string() + "'";
  auto out = [&](const std::string& name) { return (dir / name).string(); };

  bool all_ran = true;
  auto twice_match = [&](const std::string& what, const std::string& base_args,
                         const std::string& o1, const std::string& o2) {
    const int r1 = run(base_args + " --out '" + out(o1) + "'");
    const int r2 = run(base_args + " --out '" + out(o2) + "'");
    all_ran = all_ran && r1 == 0 && r2 == 0;
    c.require(r1 == 0 && r2 == 0, what + " command failed");
    const std::string b1 = slurp(out(o1));
    c.require(!b1.empty() && b1 == slurp(out(o2)),
              what + " outputs differ between identical runs");
  };

  twice_match("simulate", "simulate --seed 5" + cfg, "sim1.csv", "sim2.csv");
  if (!all_ran) return;
  const std::string data = " --data '" + out("sim1.csv") + "'";
  twice_match("fit", "fit --seed 9" + cfg + data, "fit1.json", "fit2.json");
  twice_match("predict",
              "predict --seed 9 --thresholds 0.2,0.4" + cfg + data + " --grid '" +
                  (dir / "grid.csv").string() + "'",
              "pred1.csv", "pred2.csv");
  twice_match("bootstrap", "bootstrap --seed 9 --threads 1" + cfg + data,
              "boot1.json", "boot2.json");
  twice_match("simstudy", "simstudy --seed 3 --threads 1" + cfg, "study1.csv",
              "study2.csv");
  if (!all_ran) return;

  // thread-count invariance: every reported quantity is assembled from
  // per-replicate slots keyed by index, so the byte stream itself must match
  c.require(run("bootstrap --seed 9 --threads 2" + cfg + data + " --out '" +
                out("boot3.json") + "'") == 0,
            "threaded bootstrap failed");
  c.require(slurp(out("boot1.json")) == slurp(out("boot3.json")),
            "bootstrap output changed with --threads 2");
  c.require(run("simstudy --seed 3 --threads 2" + cfg + " --out '" +
                out("study3.csv") + "'") == 0,
            "threaded simstudy failed");
  c.require(slurp(out("study1.csv")) == slurp(out("study3.csv")),
            "simstudy output changed with --threads 2");

  if (c.pass) {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    c.note("simulate/fit/predict/bootstrap/simstudy byte-identical on repeat; "
           "bootstrap and simstudy byte-identical across thread counts");
  } else {
    c.note("outputs kept in " + dir.string());
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else if (a == "--replicates" && i + 1 < argc) {
      g_replicates = std::atoi(argv[++i]);
    } else {
      const int k = std::atoi(a.c_str());
      if (k >= 1 && k <= 8) wanted.push_back(k);
    }
  }
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8};
  const bool pilot = g_replicates != 100;

  int failures = 0;
  for (int k : wanted) {
    Criterion c;
    double secs = 0.0;
    try {
      switch (k) {
        case 1: secs = run_seconds(criterion1, c); break;
        case 2: secs = run_seconds(criterion2, c); break;
        case 3: secs = run_seconds(criterion3, c); break;
        case 4: secs = run_seconds(criterion4, c); break;
        case 5: secs = run_seconds(criterion5, c); break;
        case 6: secs = run_seconds(criterion6, c); break;
        case 7: secs = run_seconds(criterion7, c); break;
        case 8:
          secs = run_seconds([&](Criterion& cc) { criterion8(cc, cli); }, c);
          break;
      }
    } catch (const std::exception& e) {
      c.require(false, std::string("exception: ") + e.what());
    }
    failures += c.pass ? 0 : 1;
    std::printf("criterion %d: %s%s  [%.0fs]  %s\n", k, c.pass ? "PASS" : "FAIL",
                pilot && k >= 4 && k <= 6 ? " [pilot]" : "", secs,
                c.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %zu/%zu criteria passed%s\n", wanted.size() - failures,
              wanted.size(), pilot ? " (pilot run, not the gate)" : "");
  return failures;
}
