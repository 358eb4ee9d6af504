#include "prevfuse/predict.hpp"

#include <cmath>
#include <stdexcept>

#include "prevfuse/covariance.hpp"
#include "prevfuse/mcml.hpp"
#include "prevfuse/model.hpp"
#include "prevfuse/rng.hpp"
#include "prevfuse/stats.hpp"

namespace prevfuse {

void PredictionGrid::validate(const SurveyDataset& data, const ModelSpec& spec) const {
  if (loc.rows() < 1) throw std::invalid_argument("prediction grid is empty");
  if (loc.cols() != 2) throw std::invalid_argument("grid locations must have 2 columns");
  if (covariates.rows() != loc.rows())
    throw std::invalid_argument("grid covariate rows do not match grid locations");
  if (covariates.cols() != data.n_covariates())
    throw std::invalid_argument(
        "grid covariates do not match the data covariate columns");
  if (target_survey < 0 || target_survey >= spec.n_surveys)
    throw std::invalid_argument("target survey out of range");
  if (!loc.allFinite() || !covariates.allFinite())
    throw std::invalid_argument("grid contains non-finite values");
}

MatrixXd build_grid_design(const PredictionGrid& grid, const SurveyDataset& data,
                           const ModelSpec& spec) {
  grid.validate(data, spec);
  const int q = grid.q();
  const int shared = 1 + data.n_covariates();
  MatrixXd d = MatrixXd::Zero(q, design_columns(data, spec));
  d.col(0).setOnes();
  if (data.n_covariates() > 0) d.middleCols(1, data.n_covariates()) = grid.covariates;

  int col = shared;
  for (int i = 0; i < spec.n_surveys; ++i) {
    if (!spec.biased[i]) continue;
    if (i == grid.target_survey)
      for (size_t c = 0; c < spec.bias_mask.size(); ++c)
        d.col(col + static_cast<int>(c)) = d.col(spec.bias_mask[c]);
    col += static_cast<int>(spec.bias_mask.size());
  }
  return d;
}

namespace {

/// Cross-covariance between the stacked data rows and the grid target, plus
/// the q x q covariance of the target itself.
void target_covariances(const PredictionGrid& grid, const ParamSet& params,
                        const SurveyDataset& data, const ModelSpec& spec,
                        MatrixXd& cross, MatrixXd& self) {
  const int q = grid.q();
  const int tgt = grid.target_survey;
  const bool tgt_biased = spec.biased[tgt];
  const double tau2_tgt = spec.tau2_of_survey(params.cov.tau2, tgt);

  cross.resize(data.total_n(), q);
  int row = 0;
  for (int i = 0; i < spec.n_surveys; ++i) {
    const int ni = data.n_per_survey[i];
    const auto loc_i = data.loc.middleRows(row, ni);
    const double a = alpha_between_surveys(params.cov, spec, i, tgt);
    MatrixXd block =
        params.cov.sigma2 * a * correlation_matrix(loc_i, grid.loc, params.cov.phi);
    if (i == tgt && tgt_biased) {
      const int bi = [&] {
        int k = 0;
        for (int s = 0; s < i; ++s) k += spec.biased[s] ? 1 : 0;
        return k;
      }();
      block += params.cov.nu2[bi] * correlation_matrix(loc_i, grid.loc, params.cov.delta);
    }
    if (i == tgt && grid.include_nugget) {
      for (int j = 0; j < ni; ++j)
        for (int l = 0; l < q; ++l)
          if (data.loc(row + j, 0) == grid.loc(l, 0) &&
              data.loc(row + j, 1) == grid.loc(l, 1))
            block(j, l) += tau2_tgt;  // a new draw at a data site shares its nugget
    }
    cross.middleRows(row, ni) = block;
    row += ni;
  }

  self = params.cov.sigma2 * correlation_matrix(grid.loc, grid.loc, params.cov.phi);
  if (tgt_biased) {
    const int bi = [&] {
      int k = 0;
      for (int s = 0; s < tgt; ++s) k += spec.biased[s] ? 1 : 0;
      return k;
    }();
    self += params.cov.nu2[bi] * correlation_matrix(grid.loc, grid.loc, params.cov.delta);
  }
  if (grid.include_nugget) {
    self.diagonal().array() += tau2_tgt;
    // coincident grid pairs that also sit on a target-survey data site share
    // that site's nugget, keeping the joint covariance consistent
    const int off = data.survey_offset(tgt);
    for (int l = 0; l < q; ++l)
      for (int l2 = l + 1; l2 < q; ++l2) {
        if (grid.loc(l, 0) != grid.loc(l2, 0) || grid.loc(l, 1) != grid.loc(l2, 1))
          continue;
        for (int j = 0; j < data.n_per_survey[tgt]; ++j)
          if (data.loc(off + j, 0) == grid.loc(l, 0) &&
              data.loc(off + j, 1) == grid.loc(l, 1)) {
            self(l, l2) += tau2_tgt;
            self(l2, l) += tau2_tgt;
            break;
          }
      }
  }
}

MatrixXd factor_data_covariance(const ParamSet& params, const SurveyDataset& data,
                                const ModelSpec& spec) {
  MatrixXd v = build_joint_covariance(params.cov, spec, data);
  auto lv = cholesky_lower(v);
  if (!lv) {
    v.diagonal().array() += 1e-10;  // rescue jitter, one attempt
    lv = cholesky_lower(v);
    if (!lv)
      throw std::runtime_error("data covariance not positive definite (jitter failed)");
  }
  return *lv;
}

}  // namespace

ConditionalMvn conditional_mvn_params(const LatentSample& t, const PredictionGrid& grid,
                                      const ParamSet& params, const SurveyDataset& data,
                                      const ModelSpec& spec) {
  data.validate();
  spec.validate();
  params.cov.validate(spec);
  grid.validate(data, spec);
  if (t.size() != data.total_n())
    throw std::invalid_argument("latent sample length does not match the data");

  const MatrixXd d = build_design_matrix(data, spec);
  const MatrixXd d_star = build_grid_design(grid, data, spec);
  if (params.beta.size() != d.cols())
    throw std::invalid_argument("beta length does not match the design matrix");

  MatrixXd cross, self;
  target_covariances(grid, params, data, spec, cross, self);
  const MatrixXd lv = factor_data_covariance(params, data, spec);

  // C^T V^{-1} x via two triangular solves
  MatrixXd w = lv.triangularView<Eigen::Lower>().solve(cross);  // L^{-1} C
  VectorXd resid = lv.triangularView<Eigen::Lower>().solve((t - d * params.beta).eval());

  ConditionalMvn out;
  out.mean = d_star * params.beta + w.transpose() * resid;
  out.cov = self - w.transpose() * w;
  return out;
}

PredictiveSurface sample_predictive_surfaces(const MatrixXd& samples,
                                             const PredictionGrid& grid,
                                             const ParamSet& params,
                                             const SurveyDataset& data,
                                             const ModelSpec& spec, std::uint64_t seed,
                                             int tile_size) {
  data.validate();
  spec.validate();
  params.cov.validate(spec);
  grid.validate(data, spec);
  if (samples.cols() < 1) throw std::invalid_argument("need at least one latent sample");
  if (samples.rows() != data.total_n())
    throw std::invalid_argument("latent sample length does not match the data");
  if (tile_size < 1) throw std::invalid_argument("tile size must be positive");

  const int q = grid.q();
  const Eigen::Index m = samples.cols();
  const MatrixXd d = build_design_matrix(data, spec);
  if (params.beta.size() != d.cols())
    throw std::invalid_argument("beta length does not match the design matrix");
  const MatrixXd lv = factor_data_covariance(params, data, spec);

  // whitened residuals, shared by every tile
  MatrixXd resid = samples;
  resid.colwise() -= (d * params.beta).eval();
  lv.triangularView<Eigen::Lower>().solveInPlace(resid);  // L^{-1}(t_h - D beta)

  PredictiveSurface out;
  out.latent.resize(q, m);
  out.prevalence.resize(q, m);

  for (int tile_lo = 0; tile_lo < q; tile_lo += tile_size) {
    const int tq = std::min(tile_size, q - tile_lo);
    PredictionGrid tile = grid;
    tile.loc = grid.loc.middleRows(tile_lo, tq);
    tile.covariates = grid.covariates.middleRows(tile_lo, tq);

    MatrixXd cross, self;
    target_covariances(tile, params, data, spec, cross, self);
    const MatrixXd d_star = build_grid_design(tile, data, spec);

    // per-column solves and per-element dots keep every point's arithmetic
    // local to its own column, so the draws cannot depend on the tile shape
    MatrixXd w(cross.rows(), tq);
    for (int l = 0; l < tq; ++l)
      w.col(l) = lv.triangularView<Eigen::Lower>().solve(cross.col(l));

    for (int l = 0; l < tq; ++l) {
      const double reg = d_star.row(l).dot(params.beta);
      double var = self(l, l) - w.col(l).squaredNorm();
      if (var < -1e-10)
        throw std::runtime_error("conditional variance below -1e-10 at a grid point");
      var = std::max(var, 0.0);
      const double sd = std::sqrt(var);
      Rng point_rng(mix_seed(seed, static_cast<std::uint64_t>(tile_lo + l)));
      for (Eigen::Index h = 0; h < m; ++h) {
        const double t_star = reg + w.col(l).dot(resid.col(h)) + sd * point_rng.normal();
        out.latent(tile_lo + l, h) = t_star;
        out.prevalence(tile_lo + l, h) = inv_logit(t_star);
      }
    }
  }
  return out;
}

PredictiveSummary summarize(const PredictiveSurface& surface,
                            const std::vector<double>& thresholds,
                            const std::vector<double>& levels) {
  const Eigen::Index q = surface.prevalence.rows();
  const Eigen::Index m = surface.prevalence.cols();
  if (q < 1) throw std::invalid_argument("empty predictive surface");
  if (m < 2) throw std::invalid_argument("summaries need at least 2 draws per point");
  for (double lv : levels)
    if (!(lv >= 0.0 && lv <= 1.0))
      throw std::invalid_argument("quantile level outside [0,1]");

  PredictiveSummary s;
  s.levels = levels;
  s.thresholds = thresholds;
  s.mean = surface.prevalence.rowwise().mean();
  s.quantiles.resize(q, static_cast<Eigen::Index>(levels.size()));
  s.exceedance.resize(q, static_cast<Eigen::Index>(thresholds.size()));

  for (Eigen::Index l = 0; l < q; ++l) {
    std::vector<double> row(static_cast<size_t>(m));
    for (Eigen::Index h = 0; h < m; ++h) row[static_cast<size_t>(h)] = surface.prevalence(l, h);
    for (size_t k = 0; k < levels.size(); ++k)
      s.quantiles(l, static_cast<Eigen::Index>(k)) = quantile_type7(row, levels[k]);
    for (size_t k = 0; k < thresholds.size(); ++k) {
      int count = 0;
      for (double p : row) count += (p > thresholds[k]) ? 1 : 0;
      s.exceedance(l, static_cast<Eigen::Index>(k)) =
          static_cast<double>(count) / static_cast<double>(m);
    }
  }
  return s;
}

}  // namespace prevfuse
