#include "prevfuse/simstudy.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "prevfuse/covariance.hpp"
#include "prevfuse/model.hpp"
#include "prevfuse/predict.hpp"
#include "prevfuse/stats.hpp"

namespace prevfuse {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string analysis_label(AnalysisKind a) {
  switch (a) {
    case AnalysisKind::Joint: return "J";
    case AnalysisKind::FirstSurveyOnly: return "FSO";
    case AnalysisKind::Naive: return "N";
  }
  throw std::invalid_argument("unknown analysis kind");
}

void Rectangle::validate() const {
  if (!(x1 > x0) || !(y1 > y0) || !std::isfinite(x0) || !std::isfinite(x1) ||
      !std::isfinite(y0) || !std::isfinite(y1))
    throw std::invalid_argument("invalid sampling rectangle");
}

MatrixXd sample_uniform_locations(int n, const Rectangle& rect, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need at least one location");
  rect.validate();
  Rng rng(seed);
  MatrixXd loc(n, 2);
  for (int i = 0; i < n; ++i) {
    loc(i, 0) = rng.uniform(rect.x0, rect.x1);
    loc(i, 1) = rng.uniform(rect.y0, rect.y1);
  }
  return loc;
}

MatrixXd sample_ipp_locations(int n, const Eigen::RowVector2d& center, double decay,
                              const Rectangle& rect, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need at least one location");
  if (!(decay > 0)) throw std::invalid_argument("decay must be positive");
  rect.validate();

  // intensity maximum over the region sits at the point nearest the center
  const double cx = std::clamp(center[0], rect.x0, rect.x1);
  const double cy = std::clamp(center[1], rect.y0, rect.y1);
  const double dmin = std::hypot(cx - center[0], cy - center[1]);

  Rng rng(seed);
  MatrixXd loc(n, 2);
  int got = 0;
  long proposed = 0;
  while (got < n) {
    const double x = rng.uniform(rect.x0, rect.x1);
    const double y = rng.uniform(rect.y0, rect.y1);
    ++proposed;
    const double d = std::hypot(x - center[0], y - center[1]);
    if (rng.uniform() < std::exp(-(d - dmin) / decay)) {
      loc(got, 0) = x;
      loc(got, 1) = y;
      ++got;
    }
    if (proposed >= 100000 && got < proposed * 1e-4)
      throw std::runtime_error(
          "point-process rejection acceptance below 1e-4; check that the "
          "intensity center and decay match the sampling region");
  }
  return loc;
}

Scenario make_ident_scenario(int which, int replicates, std::uint64_t seed) {
  if (which < 1 || which > 3)
    throw std::invalid_argument("identifiability scenario index must be 1, 2 or 3");
  Scenario sc;
  sc.kind = ScenarioKind::Ident;
  sc.label = "ident-" + std::to_string(which);
  sc.region = {34.700, 34.900, -16.170, -15.880};
  sc.n_gold = 150;
  sc.n_second = 90;
  sc.second_ipp = true;
  const double centers[3][2] = {
      {34.800, -16.025}, {34.700, -16.170}, {34.600, -16.315}};
  sc.ipp_center = Eigen::RowVector2d(centers[which - 1][0], centers[which - 1][1]);
  sc.ipp_decay = 0.02;
  sc.denominator = 5;
  sc.predict_center = false;
  sc.analyses = {AnalysisKind::Joint};
  sc.replicates = replicates;
  sc.seed = seed;

  sc.truth_spec.n_surveys = 2;
  sc.truth_spec.biased = {false, true};
  sc.truth_spec.time_index = {0, 0};
  sc.truth_spec.bias_mask = {0};

  sc.truth.beta = (VectorXd(2) << 1.0, -1.0).finished();
  sc.truth.cov.sigma2 = 2.186;
  sc.truth.cov.nu2 = VectorXd::Constant(1, 0.672);
  sc.truth.cov.tau2 = VectorXd::Constant(1, 0.558);
  sc.truth.cov.phi = 0.017;
  sc.truth.cov.delta = 0.004;
  sc.truth.cov.alpha = VectorXd(0);

  sc.chain.total = 50000;
  sc.chain.burnin = 10000;
  sc.chain.thin = 20;  // 2000 importance samples
  return sc;
}

Scenario make_qv_scenario(double nu2, int replicates, std::uint64_t seed) {
  if (!(nu2 > 0)) throw std::invalid_argument("bias variance must be positive");
  Scenario sc;
  sc.kind = ScenarioKind::QualityVariation;
  sc.label = "qv-nu2=" + std::to_string(nu2);
  sc.region = {0, 1, 0, 1};
  sc.n_gold = 150;
  sc.n_second = 150;
  sc.second_ipp = true;
  sc.ipp_center = Eigen::RowVector2d(0.5, 0.5);
  sc.ipp_decay = 0.15;
  sc.denominator = 1;
  sc.x0 = Eigen::RowVector2d(0.5, 0.5);
  sc.predict_center = true;
  sc.replicates = replicates;
  sc.seed = seed;

  sc.truth_spec.n_surveys = 2;
  sc.truth_spec.biased = {false, true};
  sc.truth_spec.time_index = {0, 0};
  sc.truth_spec.bias_mask = {0};
  sc.truth_spec.fixed_tau2 = 0.0;  // unit denominators: nugget not identifiable

  sc.truth.beta = (VectorXd(2) << 1.0, -1.0).finished();
  sc.truth.cov.sigma2 = 1.0;
  sc.truth.cov.nu2 = VectorXd::Constant(1, nu2);
  sc.truth.cov.tau2 = VectorXd::Zero(1);
  sc.truth.cov.phi = 0.15;
  sc.truth.cov.delta = 0.15;
  sc.truth.cov.alpha = VectorXd(0);

  sc.chain.total = 50000;
  sc.chain.burnin = 10000;
  sc.chain.thin = 20;
  return sc;
}

Scenario make_tv_scenario(double alpha, int replicates, std::uint64_t seed) {
  if (!(alpha > -1 && alpha < 1))
    throw std::invalid_argument("cross-correlation must lie in (-1,1)");
  Scenario sc;
  sc.kind = ScenarioKind::TemporalVariation;
  sc.label = "tv-alpha=" + std::to_string(alpha);
  sc.region = {0, 1, 0, 1};
  sc.n_gold = 150;
  sc.n_second = 150;
  sc.second_ipp = false;  // both surveys unbiased, uniformly sampled
  sc.denominator = 1;
  sc.x0 = Eigen::RowVector2d(0.5, 0.5);
  sc.predict_center = true;
  sc.replicates = replicates;
  sc.seed = seed;

  sc.truth_spec.n_surveys = 2;
  sc.truth_spec.biased = {false, false};
  sc.truth_spec.time_index = {0, 1};
  sc.truth_spec.bias_mask = {0};
  sc.truth_spec.fixed_tau2 = 0.0;

  sc.truth.beta = VectorXd::Constant(1, 1.0);
  sc.truth.cov.sigma2 = 1.0;
  sc.truth.cov.nu2 = VectorXd(0);
  sc.truth.cov.tau2 = VectorXd::Zero(1);
  sc.truth.cov.phi = 0.15;
  sc.truth.cov.delta = 1.0;  // no bias field; value unused
  sc.truth.cov.alpha = VectorXd::Constant(1, alpha);

  sc.chain.total = 50000;
  sc.chain.burnin = 10000;
  sc.chain.thin = 20;
  return sc;
}

ScenarioDraw simulate_dataset(const Scenario& sc, std::uint64_t replicate_seed) {
  sc.region.validate();
  sc.truth_spec.validate();
  sc.truth.cov.validate(sc.truth_spec);
  if (sc.denominator < 1 || sc.denominator != std::floor(sc.denominator))
    throw std::invalid_argument("denominator must be a positive integer");

  const MatrixXd loc1 =
      sample_uniform_locations(sc.n_gold, sc.region, mix_seed(replicate_seed, 1));
  const MatrixXd loc2 =
      sc.second_ipp
          ? sample_ipp_locations(sc.n_second, sc.ipp_center, sc.ipp_decay, sc.region,
                                 mix_seed(replicate_seed, 2))
          : sample_uniform_locations(sc.n_second, sc.region, mix_seed(replicate_seed, 2));

  ScenarioDraw draw;
  const int n = sc.n_gold + sc.n_second;
  draw.data.loc.resize(n, 2);
  draw.data.loc.topRows(sc.n_gold) = loc1;
  draw.data.loc.bottomRows(sc.n_second) = loc2;
  draw.data.m = VectorXd::Constant(n, sc.denominator);
  draw.data.y = VectorXd::Zero(n);
  draw.data.covariates = MatrixXd(n, 0);
  draw.data.n_per_survey = {sc.n_gold, sc.n_second};

  MatrixXd extra(0, 2);
  if (sc.predict_center) {
    extra.resize(1, 2);
    extra.row(0) = sc.x0;
  }
  Rng rng(mix_seed(replicate_seed, 3));
  const SimulatedData sim =
      simulate_from_model(sc.truth, draw.data, sc.truth_spec, rng, extra, 0);
  draw.data.y = sim.y;
  draw.s_true = sc.predict_center ? sim.extra_s[0] : 0.0;
  return draw;
}

SurveyDataset subset_survey(const SurveyDataset& data, int survey) {
  data.validate();
  if (survey < 0 || survey >= data.n_surveys())
    throw std::invalid_argument("survey index out of range");
  const int off = data.survey_offset(survey);
  const int ni = data.n_per_survey[survey];
  SurveyDataset out;
  out.loc = data.loc.middleRows(off, ni);
  out.m = data.m.segment(off, ni);
  out.y = data.y.segment(off, ni);
  out.covariates = data.covariates.rows() > 0 ? data.covariates.middleRows(off, ni)
                                              : MatrixXd(ni, 0);
  out.covariate_names = data.covariate_names;
  out.n_per_survey = {ni};
  return out;
}

SurveyDataset pool_surveys(const SurveyDataset& data) {
  data.validate();
  SurveyDataset out = data;
  out.n_per_survey = {data.total_n()};
  return out;
}

namespace {

ModelSpec single_unbiased_spec(std::optional<double> fixed_tau2) {
  ModelSpec spec;
  spec.n_surveys = 1;
  spec.biased = {false};
  spec.time_index = {0};
  spec.bias_mask = {0};
  spec.tie_tau2 = true;
  spec.fixed_tau2 = fixed_tau2;
  return spec;
}

struct AnalysisProblem {
  SurveyDataset data;
  ModelSpec spec;
};

AnalysisProblem analysis_problem(const SurveyDataset& full, const Scenario& sc,
                                 AnalysisKind a) {
  switch (a) {
    case AnalysisKind::Joint:
      return {full, sc.truth_spec};
    case AnalysisKind::FirstSurveyOnly:
      return {subset_survey(full, 0), single_unbiased_spec(sc.truth_spec.fixed_tau2)};
    case AnalysisKind::Naive:
      return {pool_surveys(full), single_unbiased_spec(sc.truth_spec.fixed_tau2)};
  }
  throw std::invalid_argument("unknown analysis kind");
}

struct TargetSpec {
  std::string name;
  enum Kind { Param, ParamLog, PredLatent, PredWithMean } kind = Param;
  std::string param_name;  // for Param/ParamLog: lookup key in the layout names
  double truth = kNaN;     // natural-scale truth for parameter targets
};

std::vector<TargetSpec> scenario_targets(const Scenario& sc) {
  std::vector<TargetSpec> t;
  if (sc.kind == ScenarioKind::Ident) {
    t.push_back({"beta1", TargetSpec::Param, "intercept", sc.truth.beta[0]});
    t.push_back({"beta2", TargetSpec::Param, "bias2:intercept", sc.truth.beta[1]});
    t.push_back({"sigma2", TargetSpec::Param, "sigma2", sc.truth.cov.sigma2});
    t.push_back({"nu2", TargetSpec::Param, "nu2", sc.truth.cov.nu2[0]});
    t.push_back({"tau2", TargetSpec::Param, "tau2", sc.truth.cov.tau2[0]});
    t.push_back({"phi", TargetSpec::Param, "phi", sc.truth.cov.phi});
    t.push_back({"delta", TargetSpec::Param, "delta", sc.truth.cov.delta});
    return t;
  }
  t.push_back({"beta1", TargetSpec::Param, "intercept", sc.truth.beta[0]});
  t.push_back({"log_sigma2", TargetSpec::ParamLog, "sigma2", sc.truth.cov.sigma2});
  t.push_back({"log_phi", TargetSpec::ParamLog, "phi", sc.truth.cov.phi});
  if (sc.predict_center) {
    t.push_back({"S1(x0)", TargetSpec::PredLatent, "", kNaN});
    t.push_back({"beta1+S1(x0)", TargetSpec::PredWithMean, "", kNaN});
  }
  return t;
}

int find_name(const std::vector<std::string>& names, const std::string& key) {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == key) return static_cast<int>(i);
  return -1;
}

// componentwise map of one natural-scale value onto the transformed scale
double natural_to_eta(const ParamLayout& layout, int idx, double v) {
  if (idx < layout.n_beta) return v;
  const int alpha_start = layout.size() - layout.psi.n_alpha;
  if (idx >= alpha_start) return std::log((1.0 + v) / (1.0 - v));
  return std::log(std::max(v, 1e-300));
}

struct Outcome {
  bool fit_ok = false;
  VectorXd est;          // per target
  VectorXd tru;          // per target, replicate-specific for predictions
  std::vector<int> cover;  // -1 unknown, else 0/1
};

}  // namespace

FitResult naive_analysis(const SurveyDataset& data, std::optional<double> fixed_tau2,
                         const FitConfig& config) {
  const SurveyDataset pooled = pool_surveys(data);
  const ModelSpec spec = single_unbiased_spec(fixed_tau2);
  return fit(pooled, spec, default_init(pooled, spec), config);
}

MetricsTable run_scenario(const Scenario& sc) {
  sc.region.validate();
  sc.truth_spec.validate();
  sc.truth.cov.validate(sc.truth_spec);
  if (sc.replicates < 1) throw std::invalid_argument("need at least one replicate");
  if (sc.analyses.empty()) throw std::invalid_argument("no analyses requested");
  if (sc.threads < 1) throw std::invalid_argument("thread count must be positive");

  const std::vector<TargetSpec> targets = scenario_targets(sc);
  const int n_targets = static_cast<int>(targets.size());
  const int n_analyses = static_cast<int>(sc.analyses.size());
  std::vector<std::vector<Outcome>> slots(
      static_cast<size_t>(sc.replicates),
      std::vector<Outcome>(static_cast<size_t>(n_analyses)));

  std::atomic<int> cursor{0};
  auto worker = [&]() {
    for (;;) {
      const int b = cursor.fetch_add(1);
      if (b >= sc.replicates) return;
      const std::uint64_t rep_seed = sc.seed ^ static_cast<std::uint64_t>(b);
      ScenarioDraw draw;
      try {
        draw = simulate_dataset(sc, rep_seed);
      } catch (const std::exception&) {
        continue;  // every analysis of this replicate counts as failed
      }
      for (int ai = 0; ai < n_analyses; ++ai) {
        Outcome& oc = slots[static_cast<size_t>(b)][static_cast<size_t>(ai)];
        oc.est = VectorXd::Constant(n_targets, kNaN);
        oc.tru = VectorXd::Constant(n_targets, kNaN);
        oc.cover.assign(static_cast<size_t>(n_targets), -1);
        try {
          const AnalysisProblem prob = analysis_problem(draw.data, sc, sc.analyses[ai]);
          FitConfig fc;
          fc.chain = sc.chain;
          fc.refresh_cap = sc.refresh_cap;
          fc.refresh_tol = sc.refresh_tol;
          fc.starts = sc.starts;
          fc.seed = mix_seed(rep_seed, 100 + static_cast<std::uint64_t>(ai));
          const FitResult r = fit(prob.data, prob.spec, default_init(prob.data, prob.spec), fc);

          const ParamLayout layout = ParamLayout::make(prob.data, prob.spec);
          const std::vector<std::string> names = layout.names(prob.data, prob.spec);
          const VectorXd nat = layout.to_natural(r.estimate);
          const VectorXd eta = layout.to_transformed(r.estimate);
          VectorXd eta_sd;
          try {
            const AsymptoticCovariance ac = asymptotic_covariance(r.estimate, r.importance);
            eta_sd = ac.cov_transformed.diagonal().cwiseMax(0.0).cwiseSqrt();
          } catch (const std::exception&) {
            eta_sd.resize(0);  // CIs unavailable; coverage left unknown
          }

          MatrixXd latent_draws;
          if (sc.predict_center) {
            PredictionGrid grid;
            grid.loc.resize(1, 2);
            grid.loc.row(0) = sc.x0;
            grid.covariates = MatrixXd(1, prob.data.n_covariates());
            grid.target_survey = 0;
            grid.include_nugget = false;
            const PredictiveSurface surf = sample_predictive_surfaces(
                r.importance.samples, grid, r.estimate, prob.data, prob.spec,
                mix_seed(rep_seed, 200 + static_cast<std::uint64_t>(ai)));
            latent_draws = surf.latent;
          }

          for (int t = 0; t < n_targets; ++t) {
            const TargetSpec& ts = targets[static_cast<size_t>(t)];
            if (ts.kind == TargetSpec::Param || ts.kind == TargetSpec::ParamLog) {
              const int idx = find_name(names, ts.param_name);
              if (idx < 0) continue;
              const bool log_scale = ts.kind == TargetSpec::ParamLog;
              oc.est[t] = log_scale ? eta[idx] : nat[idx];
              oc.tru[t] = log_scale ? std::log(ts.truth) : ts.truth;
              if (eta_sd.size() == eta.size()) {
                // intervals are symmetric on the transformed scale; coverage of
                // a natural-scale truth is the same event after mapping
                const double center = eta[idx];
                const double half = 1.96 * eta_sd[idx];
                const double truth_eta = natural_to_eta(layout, idx, ts.truth);
                oc.cover[static_cast<size_t>(t)] =
                    (truth_eta >= center - half && truth_eta <= center + half) ? 1 : 0;
              }
            } else {
              const double beta1_hat = r.estimate.beta[0];
              std::vector<double> draws(static_cast<size_t>(latent_draws.cols()));
              for (Eigen::Index h = 0; h < latent_draws.cols(); ++h)
                draws[static_cast<size_t>(h)] =
                    ts.kind == TargetSpec::PredLatent ? latent_draws(0, h) - beta1_hat
                                                      : latent_draws(0, h);
              const double truth_val = ts.kind == TargetSpec::PredLatent
                                           ? draw.s_true
                                           : sc.truth.beta[0] + draw.s_true;
              oc.est[t] = sample_mean(draws);
              oc.tru[t] = truth_val;
              const double lo = quantile_type7(draws, 0.025);
              const double hi = quantile_type7(draws, 0.975);
              oc.cover[static_cast<size_t>(t)] =
                  (truth_val >= lo && truth_val <= hi) ? 1 : 0;
            }
          }
          oc.fit_ok = true;
        } catch (const std::exception&) {
          oc.fit_ok = false;
        }
      }
    }
  };

  const int n_threads = std::clamp(sc.threads, 1, sc.replicates);
  std::vector<std::thread> pool;
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  MetricsTable table;
  table.replicates = sc.replicates;
  for (int b = 0; b < sc.replicates; ++b)
    for (int ai = 0; ai < n_analyses; ++ai)
      table.failures += slots[static_cast<size_t>(b)][static_cast<size_t>(ai)].fit_ok ? 0 : 1;

  for (int ai = 0; ai < n_analyses; ++ai) {
    for (int t = 0; t < n_targets; ++t) {
      const TargetSpec& ts = targets[static_cast<size_t>(t)];
      MetricRow row;
      row.analysis = analysis_label(sc.analyses[ai]);
      row.target = ts.name;
      const bool pred = ts.kind == TargetSpec::PredLatent || ts.kind == TargetSpec::PredWithMean;
      row.truth = pred ? kNaN
                       : (ts.kind == TargetSpec::ParamLog ? std::log(ts.truth) : ts.truth);

      std::vector<double> ests, errors;
      int cov_n = 0, cov_hits = 0;
      for (int b = 0; b < sc.replicates; ++b) {
        const Outcome& oc = slots[static_cast<size_t>(b)][static_cast<size_t>(ai)];
        if (!oc.fit_ok || !std::isfinite(oc.est[t])) continue;
        ests.push_back(oc.est[t]);
        errors.push_back(oc.est[t] - oc.tru[t]);
        const int c = oc.cover[static_cast<size_t>(t)];
        if (c >= 0) {
          ++cov_n;
          cov_hits += c;
        }
      }
      row.used = static_cast<int>(ests.size());
      row.covered_n = cov_n;
      if (row.used > 0) {
        row.mean_estimate = sample_mean(ests);
        row.bias = sample_mean(errors);
        double msq = 0.0;
        for (double e : errors) msq += e * e;
        row.rmse = std::sqrt(msq / static_cast<double>(errors.size()));
        row.sd = errors.size() > 1 ? sample_sd(errors) : kNaN;
        row.rel_bias = (!pred && row.truth != 0.0 && std::isfinite(row.truth))
                           ? row.bias / row.truth
                           : kNaN;
      } else {
        row.mean_estimate = row.bias = row.rmse = row.sd = row.rel_bias = kNaN;
      }
      row.cic = cov_n > 0 ? static_cast<double>(cov_hits) / cov_n : kNaN;
      table.rows.push_back(row);
    }
  }

  if (sc.kind == ScenarioKind::Ident) {
    // spectrum of the estimate correlation matrix, Joint analysis
    std::vector<VectorXd> rows;
    for (int b = 0; b < sc.replicates; ++b) {
      const Outcome& oc = slots[static_cast<size_t>(b)][0];
      if (oc.fit_ok && oc.est.allFinite()) rows.push_back(oc.est);
    }
    if (rows.size() >= 2) {
      MatrixXd e(static_cast<Eigen::Index>(rows.size()), n_targets);
      for (size_t i = 0; i < rows.size(); ++i) e.row(static_cast<Eigen::Index>(i)) = rows[i];
      const Eigen::RowVectorXd mu = e.colwise().mean();
      e.rowwise() -= mu;
      MatrixXd cov = e.transpose() * e / static_cast<double>(rows.size() - 1);
      VectorXd sd = cov.diagonal().cwiseSqrt();
      MatrixXd corr = cov.array() / (sd * sd.transpose()).array();
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(corr);
      table.eigenvalues = eig.eigenvalues().reverse();
    }
  }
  return table;
}

}  // namespace prevfuse
