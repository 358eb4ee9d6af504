#pragma once

#include <cstdint>
#include <vector>

#include "prevfuse/types.hpp"

namespace prevfuse {

/// Locations to predict at, with the covariate values the shared regression
/// needs. The target is one survey's prevalence surface: shared regression +
/// its latent field, plus its bias terms when that survey is biased, plus
/// the site-level nugget when include_nugget is set (a new observation at x
/// rather than the smooth surface).
struct PredictionGrid {
  MatrixXd loc;         // q x 2
  MatrixXd covariates;  // q x p, same columns as the data
  int target_survey = 0;
  bool include_nugget = true;

  int q() const { return static_cast<int>(loc.rows()); }
  void validate(const SurveyDataset& data, const ModelSpec& spec) const;
};

/// Design rows the grid contributes: shared columns plus the target survey's
/// bias block (zero columns for other surveys' blocks).
MatrixXd build_grid_design(const PredictionGrid& grid, const SurveyDataset& data,
                           const ModelSpec& spec);

struct ConditionalMvn {
  VectorXd mean;  // D* beta + C^T V^{-1} (t - D beta)
  MatrixXd cov;   // V* - C^T V^{-1} C, shared across latent samples
};

/// Exact conditional moments of the target vector T* given T = t. The
/// cross-covariance follows the same block rules as the data covariance,
/// including the nugget coupling when a grid point exactly coincides with a
/// data location of the target survey. Non-PD data covariance gets one
/// 1e-10 diagonal rescue before failing.
ConditionalMvn conditional_mvn_params(const LatentSample& t, const PredictionGrid& grid,
                                      const ParamSet& params, const SurveyDataset& data,
                                      const ModelSpec& spec);

/// Per grid point, one draw of T* and the prevalence g^{-1}(T*) for every
/// latent sample. Draws use the exact pointwise conditional law (kriging
/// mean per sample, marginal conditional sd), with one RNG substream per
/// grid point, so results are independent of tiling and thread count.
struct PredictiveSurface {
  MatrixXd latent;      // q x m draws of T*
  MatrixXd prevalence;  // q x m, inverse-logit of latent
};

PredictiveSurface sample_predictive_surfaces(const MatrixXd& samples,
                                             const PredictionGrid& grid,
                                             const ParamSet& params,
                                             const SurveyDataset& data,
                                             const ModelSpec& spec, std::uint64_t seed,
                                             int tile_size = 512);

struct PredictiveSummary {
  VectorXd mean;       // per grid point, over prevalence draws
  MatrixXd quantiles;  // q x levels, type-7 interpolation
  MatrixXd exceedance; // q x thresholds, P(p* > c), strict inequality
  std::vector<double> levels;
  std::vector<double> thresholds;
};

/// Pointwise summaries of the sampled prevalences. Needs at least 2 draws.
PredictiveSummary summarize(const PredictiveSurface& surface,
                            const std::vector<double>& thresholds,
                            const std::vector<double>& levels = {0.025, 0.5, 0.975});

}  // namespace prevfuse
