#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "oracles.hpp"
#include "prevfuse/mcml.hpp"
#include "prevfuse/simstudy.hpp"

using namespace prevfuse;

namespace {

// One-sample KS statistic against U(0,1).
double ks_uniform01(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - x[i]);
    d = std::max(d, x[i] - static_cast<double>(i) / n);
  }
  return d;
}

std::vector<double> column(const MatrixXd& m, int j) {
  std::vector<double> v(static_cast<size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<size_t>(i)] = m(i, j);
  return v;
}

bool same_value(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || a == b;
}

// Small two-survey quality-variation setup for the bookkeeping tests.
Scenario tiny_qv(int replicates, std::uint64_t seed) {
  Scenario sc = make_qv_scenario(1.0, replicates, seed);
  sc.n_gold = 40;
  sc.n_second = 40;
  sc.chain.total = 1500;
  sc.chain.burnin = 300;
  sc.chain.thin = 6;
  sc.refresh_cap = 2;
  sc.starts = 1;
  return sc;
}

}  // namespace

TEST_CASE("uniform locations fill the rectangle") {
  const Rectangle rect{34.700, 34.900, -16.170, -15.880};
  const MatrixXd loc = sample_uniform_locations(1000, rect, 42);
  REQUIRE(loc.rows() == 1000);
  REQUIRE(loc.cols() == 2);
  CHECK(loc.col(0).minCoeff() >= rect.x0);
  CHECK(loc.col(0).maxCoeff() <= rect.x1);
  CHECK(loc.col(1).minCoeff() >= rect.y0);
  CHECK(loc.col(1).maxCoeff() <= rect.y1);

  // mean of n uniforms: sd = width / sqrt(12 n)
  const double se_x = (rect.x1 - rect.x0) / std::sqrt(12.0 * 1000);
  const double se_y = (rect.y1 - rect.y0) / std::sqrt(12.0 * 1000);
  CHECK(std::abs(loc.col(0).mean() - 34.800) < 3.5 * se_x);
  CHECK(std::abs(loc.col(1).mean() - (-16.025)) < 3.5 * se_y);

  const MatrixXd again = sample_uniform_locations(1000, rect, 42);
  CHECK((loc.array() == again.array()).all());
  const MatrixXd other = sample_uniform_locations(1000, rect, 43);
  CHECK(!(loc.array() == other.array()).all());
}

TEST_CASE("point process with a flat intensity matches the uniform law") {
  const Rectangle rect;  // unit square
  const Eigen::RowVector2d center(0.5, 0.5);
  const MatrixXd loc = sample_ipp_locations(5000, center, 1e9, rect, 7);
  // decay >> diameter makes every proposal acceptable, so the marginals are
  // exactly uniform; KS critical value at the 0.1% level is 1.949/sqrt(n)
  const double crit = 1.949 / std::sqrt(5000.0);
  CHECK(ks_uniform01(column(loc, 0)) < crit);
  CHECK(ks_uniform01(column(loc, 1)) < crit);
}

TEST_CASE("point process radial profile matches the target intensity") {
  const Rectangle rect;
  const Eigen::RowVector2d center(0.5, 0.5);
  const double decay = 0.15;
  const MatrixXd loc = sample_ipp_locations(20000, center, decay, rect, 19);

  // Inside the inscribed disc the density is exp(-r/decay) r dr dtheta with
  // no boundary truncation, so bin masses have the closed form
  // integral r e^{-r/L} dr = -L e^{-r/L} (r + L).
  auto mass = [&](double a, double b) {
    auto prim = [&](double r) { return -decay * std::exp(-r / decay) * (r + decay); };
    return prim(b) - prim(a);
  };
  const int bins = 10;
  const double rmax = 0.5;
  std::vector<double> count(bins, 0.0);
  double inside = 0.0;
  for (Eigen::Index i = 0; i < loc.rows(); ++i) {
    const double r = std::hypot(loc(i, 0) - 0.5, loc(i, 1) - 0.5);
    if (r >= rmax) continue;
    inside += 1.0;
    ++count[std::min(bins - 1, static_cast<int>(r / rmax * bins))];
  }
  CHECK(inside > 15000);
  const double total = mass(0.0, rmax);
  double chi2 = 0.0;
  for (int k = 0; k < bins; ++k) {
    const double expected = inside * mass(k * rmax / bins, (k + 1) * rmax / bins) / total;
    CHECK(expected > 20.0);
    chi2 += (count[k] - expected) * (count[k] - expected) / expected;
  }
  CHECK(chi2 < 27.88);  // chi-square 0.1% tail, 9 degrees of freedom
}

TEST_CASE("point process piles up near the corner closest to an outside center") {
  const Scenario sc = make_ident_scenario(3, 1, 1);
  const MatrixXd loc = sample_ipp_locations(2000, sc.ipp_center, sc.ipp_decay,
                                            sc.region, 11);
  // center (34.600, -16.315) lies outside; the nearest region point is the
  // corner (34.700, -16.170)
  int near = 0, far = 0;
  for (Eigen::Index i = 0; i < loc.rows(); ++i) {
    const bool low_x = loc(i, 0) < 34.800;
    const bool low_y = loc(i, 1) < -16.025;
    if (low_x && low_y) ++near;
    if (!low_x && !low_y) ++far;
  }
  CHECK(near > 1700);
  CHECK(far < 40);
}

TEST_CASE("point process rejection guard reports hopeless settings") {
  const Rectangle rect;
  const Eigen::RowVector2d center(10.0, 10.0);
  // acceptance survives only within ~decay of the nearest corner, an area
  // far below the 1e-4 rejection-rate floor
  CHECK_THROWS_AS(sample_ipp_locations(100, center, 1e-5, rect, 3),
                  std::runtime_error);
}

TEST_CASE("canned scenarios carry the advertised structure") {
  CHECK_THROWS_AS(make_ident_scenario(0), std::invalid_argument);
  CHECK_THROWS_AS(make_ident_scenario(4), std::invalid_argument);
  CHECK_THROWS_AS(make_qv_scenario(0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_tv_scenario(1.0), std::invalid_argument);

  const Scenario id1 = make_ident_scenario(1, 7, 9);
  CHECK(id1.kind == ScenarioKind::Ident);
  CHECK(id1.replicates == 7);
  CHECK(id1.seed == 9);
  CHECK(id1.analyses.size() == 1);
  CHECK(id1.analyses[0] == AnalysisKind::Joint);
  CHECK(id1.denominator == 5);
  CHECK(id1.chain.n_samples() == 2000);
  CHECK(!id1.predict_center);
  CHECK(id1.ipp_center[0] == doctest::Approx(34.800));
  const Scenario id2 = make_ident_scenario(2);
  CHECK(id2.ipp_center[0] == doctest::Approx(34.700));
  CHECK(id2.ipp_center[1] == doctest::Approx(-16.170));

  const Scenario qv = make_qv_scenario(0.5);
  CHECK(qv.truth_spec.fixed_tau2.has_value());
  CHECK(*qv.truth_spec.fixed_tau2 == 0.0);
  CHECK(qv.truth.cov.nu2[0] == doctest::Approx(0.5));
  CHECK(qv.truth.beta.size() == 2);
  CHECK(qv.analyses.size() == 3);
  CHECK(qv.predict_center);

  const Scenario tv = make_tv_scenario(0.8);
  CHECK(tv.truth_spec.time_index == std::vector<int>{0, 1});
  CHECK(tv.truth.cov.alpha.size() == 1);
  CHECK(tv.truth.cov.alpha[0] == doctest::Approx(0.8));
  CHECK(!tv.second_ipp);

  CHECK(analysis_label(AnalysisKind::Joint) == "J");
  CHECK(analysis_label(AnalysisKind::FirstSurveyOnly) == "FSO");
  CHECK(analysis_label(AnalysisKind::Naive) == "N");
}

TEST_CASE("simulated datasets are well formed and reproducible") {
  const Scenario sc = make_qv_scenario(1.0, 1, 5);
  const ScenarioDraw draw = simulate_dataset(sc, 11);
  CHECK_NOTHROW(draw.data.validate());
  CHECK(draw.data.n_per_survey == std::vector<int>{150, 150});
  CHECK(draw.data.n_covariates() == 0);
  CHECK((draw.data.m.array() == 1.0).all());
  CHECK((draw.data.y.array() >= 0.0).all());
  CHECK((draw.data.y.array() <= 1.0).all());
  CHECK(draw.data.loc.col(0).minCoeff() >= 0.0);
  CHECK(draw.data.loc.col(0).maxCoeff() <= 1.0);
  CHECK(std::isfinite(draw.s_true));

  const ScenarioDraw same = simulate_dataset(sc, 11);
  CHECK((draw.data.y.array() == same.data.y.array()).all());
  CHECK((draw.data.loc.array() == same.data.loc.array()).all());
  CHECK(draw.s_true == same.s_true);
  const ScenarioDraw other = simulate_dataset(sc, 12);
  CHECK(!(draw.data.y.array() == other.data.y.array()).all());
}

TEST_CASE("vanishing variances pin prevalence at the inverse link of the intercept") {
  SurveyDataset d;
  d.loc = sample_uniform_locations(400, Rectangle{}, 21);
  d.m = VectorXd::Constant(400, 1000.0);
  d.y = VectorXd::Zero(400);
  d.covariates.resize(400, 0);
  d.n_per_survey = {400};

  ModelSpec spec;
  spec.n_surveys = 1;
  spec.biased = {false};
  spec.time_index = {0};

  ParamSet p;
  p.beta = VectorXd::Zero(1);
  p.cov.sigma2 = 1e-12;
  p.cov.nu2 = VectorXd(0);
  p.cov.tau2 = VectorXd::Zero(1);
  p.cov.phi = 0.1;
  p.cov.alpha = VectorXd(0);

  Rng rng(33);
  const SimulatedData sim = simulate_from_model(p, d, spec, rng);
  CHECK(sim.t.cwiseAbs().maxCoeff() < 1e-5);
  const VectorXd prev = sim.y / 1000.0;
  CHECK((prev.array() - 0.5).abs().maxCoeff() < 0.06);  // binomial sd 0.0158
  CHECK(std::abs(prev.mean() - 0.5) < 0.004);
}

TEST_CASE("empirical variogram of a simulated field recovers the range") {
  const Rectangle rect{34.700, 34.900, -16.170, -15.880};
  SurveyDataset d;
  d.loc = sample_uniform_locations(1500, rect, 27);
  d.m = VectorXd::Constant(1500, 1.0);
  d.y = VectorXd::Zero(1500);
  d.covariates.resize(1500, 0);
  d.n_per_survey = {1500};

  ModelSpec spec;
  spec.n_surveys = 1;
  spec.biased = {false};
  spec.time_index = {0};

  ParamSet p;
  p.beta = VectorXd::Zero(1);
  p.cov.sigma2 = 2.186;
  p.cov.nu2 = VectorXd(0);
  p.cov.tau2 = VectorXd::Constant(1, 0.558);
  p.cov.phi = 0.017;
  p.cov.alpha = VectorXd(0);

  Rng rng(29);
  const SimulatedData sim = simulate_from_model(p, d, spec, rng);
  // short range against a 0.2 x 0.29 region: sites are near-independent, so
  // the sample variance sits close to the sill
  const double var = (sim.t.array() - sim.t.mean()).square().sum() / 1499.0;
  CHECK(var == doctest::Approx(2.186 + 0.558).epsilon(0.25));

  const double phi_hat =
      oracle::fit_variogram_phi(d.loc, sim.t, 0.08, 16, 0.002, 0.2);
  CHECK(phi_hat > 0.017 / 1.6);
  CHECK(phi_hat < 0.017 * 1.6);
}

TEST_CASE("quality-variation prevalence means match quadrature") {
  const Scenario sc = make_qv_scenario(1.0, 1, 77);
  double sum1 = 0.0, sum2 = 0.0;
  const int reps = 120;
  for (int r = 0; r < reps; ++r) {
    const ScenarioDraw draw = simulate_dataset(sc, 1000 + static_cast<std::uint64_t>(r));
    sum1 += draw.data.y.head(150).mean();
    sum2 += draw.data.y.tail(150).mean();
  }

  // survey 1: eta = 1 + S with S ~ N(0,1) and no nugget, so the marginal
  // prevalence is the Gaussian average of the inverse link
  const oracle::GaussHermite gh = oracle::gauss_hermite(64);
  double expect1 = 0.0;
  for (int i = 0; i < 64; ++i)
    expect1 += std::exp(gh.log_weights[i]) *
               oracle::inv_logit(1.0 + std::sqrt(2.0) * gh.nodes[i]);
  expect1 /= std::sqrt(M_PI);
  CHECK(sum1 / reps == doctest::Approx(expect1).epsilon(0.05));

  // survey 2: eta = (1 - 1) + S + B is symmetric around zero, so the
  // marginal prevalence is exactly one half
  CHECK(std::abs(sum2 / reps - 0.5) < 0.04);
}

TEST_CASE("joint fit collapses to the pooled fit when the extra structure is trivial") {
  // two unbiased surveys in the same time period with a tied, fixed nugget
  // describe the same model as the pooled single survey
  ModelSpec joint;
  joint.n_surveys = 2;
  joint.biased = {false, false};
  joint.time_index = {0, 0};
  joint.bias_mask = {0};
  joint.fixed_tau2 = 0.0;

  SurveyDataset d;
  d.loc = sample_uniform_locations(60, Rectangle{}, 83);
  d.m = VectorXd::Constant(60, 8.0);
  d.y = VectorXd::Zero(60);
  d.covariates.resize(60, 0);
  d.n_per_survey = {30, 30};

  ParamSet truth;
  truth.beta = VectorXd::Constant(1, 0.3);
  truth.cov.sigma2 = 0.8;
  truth.cov.nu2 = VectorXd(0);
  truth.cov.tau2 = VectorXd::Zero(1);
  truth.cov.phi = 0.2;
  truth.cov.alpha = VectorXd(0);
  Rng rng(85);
  d.y = simulate_from_model(truth, d, joint, rng).y;

  FitConfig cfg;
  cfg.chain.total = 1500;
  cfg.chain.burnin = 300;
  cfg.chain.thin = 6;
  cfg.refresh_cap = 2;
  cfg.starts = 1;
  cfg.seed = 99;

  const FitResult a = fit(d, joint, default_init(d, joint), cfg);
  const FitResult b = naive_analysis(d, 0.0, cfg);
  CHECK(a.estimate.beta[0] == b.estimate.beta[0]);
  CHECK(a.estimate.cov.sigma2 == b.estimate.cov.sigma2);
  CHECK(a.estimate.cov.phi == b.estimate.cov.phi);
  CHECK(a.final_loglik == b.final_loglik);
  CHECK((a.importance.samples.array() == b.importance.samples.array()).all());
}

TEST_CASE("survey subsetting and pooling keep rows intact") {
  const Scenario sc = make_qv_scenario(1.0, 1, 5);
  const SurveyDataset d = simulate_dataset(sc, 4).data;

  const SurveyDataset s1 = subset_survey(d, 1);
  CHECK(s1.n_per_survey == std::vector<int>{150});
  CHECK((s1.loc.array() == d.loc.bottomRows(150).array()).all());
  CHECK((s1.y.array() == d.y.tail(150).array()).all());
  CHECK((s1.m.array() == d.m.tail(150).array()).all());
  CHECK_THROWS_AS(subset_survey(d, 2), std::invalid_argument);
  CHECK_THROWS_AS(subset_survey(d, -1), std::invalid_argument);

  const SurveyDataset pooled = pool_surveys(d);
  CHECK(pooled.n_per_survey == std::vector<int>{300});
  CHECK((pooled.loc.array() == d.loc.array()).all());
  CHECK((pooled.y.array() == d.y.array()).all());
  CHECK_NOTHROW(pooled.validate());
}

TEST_CASE("scenario runner bookkeeping") {
  Scenario sc = tiny_qv(2, 31);
  CHECK_THROWS_AS(run_scenario([&] { Scenario s = sc; s.replicates = 0; return s; }()),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_scenario([&] { Scenario s = sc; s.analyses.clear(); return s; }()),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_scenario([&] { Scenario s = sc; s.threads = 0; return s; }()),
                  std::invalid_argument);

  const MetricsTable t = run_scenario(sc);
  CHECK(t.replicates == 2);
  CHECK(t.eigenvalues.size() == 0);
  REQUIRE(t.rows.size() == 15);  // 3 analyses x 5 targets

  const std::vector<std::string> targets = {"beta1", "log_sigma2", "log_phi",
                                            "S1(x0)", "beta1+S1(x0)"};
  const std::vector<std::string> analyses = {"J", "FSO", "N"};
  for (int a = 0; a < 3; ++a)
    for (int k = 0; k < 5; ++k) {
      const MetricRow& row = t.rows[static_cast<size_t>(a * 5 + k)];
      CHECK(row.analysis == analyses[static_cast<size_t>(a)]);
      CHECK(row.target == targets[static_cast<size_t>(k)]);
      CHECK(row.used >= 0);
      CHECK(row.used <= 2);
      if (row.used > 0) {
        CHECK(std::isfinite(row.mean_estimate));
        CHECK(std::isfinite(row.rmse));
        CHECK(row.rmse >= 0.0);
      }
      if (row.used > 1) {
        // mean squared error decomposes into bias^2 plus the biased variance
        const double frac = (row.used - 1.0) / row.used;
        CHECK(row.rmse * row.rmse ==
              doctest::Approx(row.bias * row.bias + row.sd * row.sd * frac)
                  .epsilon(1e-9));
      }
      if (row.covered_n > 0) {
        CHECK(row.cic >= 0.0);
        CHECK(row.cic <= 1.0);
      }
      if (k < 3) {
        CHECK(std::isfinite(row.truth));
      } else {
        CHECK(std::isnan(row.truth));  // prediction truths vary per replicate
      }
    }
  CHECK(t.rows[0].truth == 1.0);
  CHECK(t.rows[1].truth == doctest::Approx(std::log(1.0)));
  CHECK(t.rows[2].truth == doctest::Approx(std::log(0.15)));
  CHECK(t.failures >= 0);
  CHECK(t.failures <= 6);
}

TEST_CASE("identifiability runs report the estimate-correlation spectrum") {
  Scenario sc = make_ident_scenario(1, 3, 17);
  sc.n_gold = 30;
  sc.n_second = 20;
  sc.chain.total = 1200;
  sc.chain.burnin = 300;
  sc.chain.thin = 3;
  sc.refresh_cap = 2;
  sc.starts = 1;

  const MetricsTable t = run_scenario(sc);
  REQUIRE(t.rows.size() == 7);  // Joint only, seven parameter targets
  for (const MetricRow& row : t.rows) CHECK(row.analysis == "J");
  CHECK(t.rows[0].target == "beta1");
  CHECK(t.rows[6].target == "delta");

  if (t.failures == 0) {
    REQUIRE(t.eigenvalues.size() == 7);
    for (int i = 0; i + 1 < 7; ++i) CHECK(t.eigenvalues[i] >= t.eigenvalues[i + 1]);
    CHECK(t.eigenvalues.minCoeff() > -1e-9);
    CHECK(t.eigenvalues.sum() == doctest::Approx(7.0).epsilon(1e-6));
  }
}

TEST_CASE("scenario runner is invariant to the thread count") {
  Scenario sc = tiny_qv(3, 57);
  sc.chain.total = 1200;
  sc.chain.thin = 6;
  sc.refresh_cap = 1;
  sc.n_gold = 35;
  sc.n_second = 35;

  Scenario sc3 = sc;
  sc3.threads = 3;
  const MetricsTable a = run_scenario(sc);
  const MetricsTable b = run_scenario(sc3);

  CHECK(a.failures == b.failures);
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].analysis == b.rows[i].analysis);
    CHECK(a.rows[i].target == b.rows[i].target);
    CHECK(a.rows[i].used == b.rows[i].used);
    CHECK(a.rows[i].covered_n == b.rows[i].covered_n);
    CHECK(same_value(a.rows[i].mean_estimate, b.rows[i].mean_estimate));
    CHECK(same_value(a.rows[i].bias, b.rows[i].bias));
    CHECK(same_value(a.rows[i].sd, b.rows[i].sd));
    CHECK(same_value(a.rows[i].rmse, b.rows[i].rmse));
    CHECK(same_value(a.rows[i].rel_bias, b.rows[i].rel_bias));
    CHECK(same_value(a.rows[i].cic, b.rows[i].cic));
  }
}
