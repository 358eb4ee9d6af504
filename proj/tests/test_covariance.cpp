#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "prevfuse/covariance.hpp"
#include "prevfuse/rng.hpp"
#include "prevfuse/types.hpp"

using namespace prevfuse;

namespace {

SurveyDataset two_survey_coincident() {
  SurveyDataset d;
  d.loc.resize(2, 2);
  d.loc << 0.3, 0.7, 0.3, 0.7;
  d.m = VectorXd::Constant(2, 1);
  d.y = VectorXd::Zero(2);
  d.covariates = MatrixXd(2, 0);
  d.n_per_survey = {1, 1};
  return d;
}

ModelSpec unbiased_pair(int t2 = 1) {
  ModelSpec s;
  s.n_surveys = 2;
  s.biased = {false, false};
  s.time_index = {0, t2};
  s.bias_mask = {};
  return s;
}

}  // namespace

TEST_CASE("exponential correlation at fixed distances") {
  CHECK(exp_corr(0.0, 0.15) == doctest::Approx(1.0));
  CHECK(exp_corr(0.15, 0.15) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(exp_corr(0.30, 0.15) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("joint covariance, two coincident unbiased surveys") {
  const SurveyDataset d = two_survey_coincident();
  const ModelSpec spec = unbiased_pair();
  CovParams p;
  p.sigma2 = 1.0;
  p.nu2 = VectorXd(0);
  p.tau2 = VectorXd::Zero(1);
  p.phi = 0.15;
  p.delta = 0.1;
  p.alpha = VectorXd::Constant(1, 0.5);
  const MatrixXd v = build_joint_covariance(p, spec, d);
  CHECK(v(0, 0) == doctest::Approx(1.0));
  CHECK(v(0, 1) == doctest::Approx(0.5));
  CHECK(v(1, 0) == doctest::Approx(0.5));
  CHECK(v(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("joint covariance, biased second survey with shared time") {
  const SurveyDataset d = two_survey_coincident();
  ModelSpec spec;
  spec.n_surveys = 2;
  spec.biased = {false, true};
  spec.time_index = {0, 0};  // shared period couples alpha at 1
  spec.bias_mask = {};
  spec.tie_tau2 = false;
  CovParams p;
  p.sigma2 = 1.0;
  p.nu2 = VectorXd::Constant(1, 0.5);
  p.tau2 = VectorXd::Constant(2, 0.1);
  p.phi = 0.15;
  p.delta = 0.1;
  p.alpha = VectorXd(0);
  const MatrixXd v = build_joint_covariance(p, spec, d);
  CHECK(v(0, 0) == doctest::Approx(1.1));
  CHECK(v(0, 1) == doctest::Approx(1.0));
  CHECK(v(1, 0) == doctest::Approx(1.0));
  CHECK(v(1, 1) == doctest::Approx(1.6));
}

TEST_CASE("short-range truth stays positive definite on random layouts") {
  Rng rng(11);
  SurveyDataset d;
  d.loc.resize(20, 2);
  for (int i = 0; i < 20; ++i) {
    d.loc(i, 0) = rng.uniform(34.700, 34.900);
    d.loc(i, 1) = rng.uniform(-16.170, -15.880);
  }
  d.m = VectorXd::Constant(20, 5);
  d.y = VectorXd::Zero(20);
  d.covariates = MatrixXd(20, 0);
  d.n_per_survey = {10, 10};
  ModelSpec spec;
  spec.n_surveys = 2;
  spec.biased = {false, true};
  spec.time_index = {0, 0};
  CovParams p;
  p.sigma2 = 2.186;
  p.nu2 = VectorXd::Constant(1, 0.672);
  p.tau2 = VectorXd::Constant(1, 0.558);
  p.phi = 0.017;
  p.delta = 0.004;
  p.alpha = VectorXd(0);
  const MatrixXd v = build_joint_covariance(p, spec, d);
  CHECK(cholesky_lower(v).has_value());
}

TEST_CASE("cholesky_lower basics") {
  CHECK(cholesky_lower(MatrixXd::Identity(3, 3))->isApprox(MatrixXd::Identity(3, 3)));

  MatrixXd bad(2, 2);
  bad << 1.0, 1.0 + 1e-9, 1.0 + 1e-9, 1.0;
  CHECK_FALSE(cholesky_lower(bad).has_value());
}

TEST_CASE("inconsistent three-way cross-correlations are rejected") {
  // alpha_12 = alpha_13 = 0.9 with alpha_23 = -0.9 is an indefinite
  // correlation matrix; the joint covariance must fail to factor
  SurveyDataset d;
  d.loc.resize(3, 2);
  d.loc << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
  d.m = VectorXd::Constant(3, 1);
  d.y = VectorXd::Zero(3);
  d.covariates = MatrixXd(3, 0);
  d.n_per_survey = {1, 1, 1};
  ModelSpec spec;
  spec.n_surveys = 3;
  spec.biased = {false, false, false};
  spec.time_index = {0, 1, 2};
  CovParams p;
  p.sigma2 = 1.0;
  p.nu2 = VectorXd(0);
  p.tau2 = VectorXd::Zero(1);
  p.phi = 0.15;
  p.delta = 0.1;
  p.alpha.resize(3);
  p.alpha[spec.alpha_index(0, 1)] = 0.9;
  p.alpha[spec.alpha_index(0, 2)] = 0.9;
  p.alpha[spec.alpha_index(1, 2)] = -0.9;
  const MatrixXd v = build_joint_covariance(p, spec, d);
  CHECK_FALSE(cholesky_lower(v).has_value());
}

TEST_CASE("structure invariants on a randomized instance") {
  Rng rng(7);
  SurveyDataset d;
  const int n1 = 7, n2 = 5;
  d.loc.resize(n1 + n2, 2);
  for (int i = 0; i < n1 + n2; ++i) {
    d.loc(i, 0) = rng.uniform();
    d.loc(i, 1) = rng.uniform();
  }
  d.m = VectorXd::Constant(n1 + n2, 4);
  d.y = VectorXd::Zero(n1 + n2);
  d.covariates = MatrixXd(n1 + n2, 0);
  d.n_per_survey = {n1, n2};
  ModelSpec spec;
  spec.n_surveys = 2;
  spec.biased = {false, true};
  spec.time_index = {0, 1};
  spec.tie_tau2 = false;
  CovParams p;
  p.sigma2 = 1.7;
  p.nu2 = VectorXd::Constant(1, 0.6);
  p.tau2 = (VectorXd(2) << 0.2, 0.35).finished();
  p.phi = 0.25;
  p.delta = 0.1;
  p.alpha = VectorXd::Constant(1, 0.4);

  const MatrixXd v = build_joint_covariance(p, spec, d);
  SUBCASE("exact symmetry") {
    for (int i = 0; i < v.rows(); ++i)
      for (int j = 0; j < v.cols(); ++j) CHECK(v(i, j) == v(j, i));
  }
  SUBCASE("diagonal equals sigma2 + nu2*biased + tau2") {
    for (int i = 0; i < n1; ++i) CHECK(v(i, i) == doctest::Approx(1.7 + 0.2));
    for (int i = n1; i < n1 + n2; ++i) CHECK(v(i, i) == doctest::Approx(1.7 + 0.6 + 0.35));
  }
  SUBCASE("off-diagonal contributions shrink monotonically as phi -> 0") {
    double prev = v(0, 1);
    for (double phi : {0.1, 0.05, 0.01, 0.002}) {
      CovParams q = p;
      q.phi = phi;
      q.delta = phi;
      const double cur = build_joint_covariance(q, spec, d)(0, 1);
      CHECK(cur < prev);
      prev = cur;
    }
  }
  SUBCASE("factorization round trip") {
    const auto l = cholesky_lower(v);
    REQUIRE(l.has_value());
    const MatrixXd back = (*l) * l->transpose();
    CHECK((back - v).norm() / v.norm() < 1e-10);
  }
}

TEST_CASE("mvn log density against the direct formula") {
  MatrixXd v(2, 2);
  v << 2.0, 0.6, 0.6, 1.5;
  VectorXd mu(2), x(2);
  mu << 0.3, -0.2;
  x << 1.0, 0.5;
  const auto l = cholesky_lower(v);
  REQUIRE(l.has_value());
  const double got = mvn_logpdf(x, mu, *l);
  const VectorXd r = x - mu;
  const double quad = r.transpose() * v.inverse() * r;
  const double expect =
      -std::log(2.0 * M_PI) - 0.5 * std::log(v.determinant()) - 0.5 * quad;
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}
