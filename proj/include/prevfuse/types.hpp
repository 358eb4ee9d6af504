#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace prevfuse {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

/// Stacked records from r surveys. Rows are grouped by survey, surveys in
/// index order, so row offsets follow from n_per_survey.
struct SurveyDataset {
  MatrixXd loc;          // N x 2 planar coordinates
  VectorXd m;            // binomial denominators
  VectorXd y;            // positive counts
  MatrixXd covariates;   // N x p, intercept NOT included
  std::vector<std::string> covariate_names;
  std::vector<int> n_per_survey;

  int n_surveys() const { return static_cast<int>(n_per_survey.size()); }
  int total_n() const {
    int n = 0;
    for (int ni : n_per_survey) n += ni;
    return n;
  }
  int survey_offset(int i) const {
    int off = 0;
    for (int k = 0; k < i; ++k) off += n_per_survey[k];
    return off;
  }
  int n_covariates() const { return static_cast<int>(covariates.cols()); }

  /// Throws std::invalid_argument on any schema violation.
  void validate() const;
};

/// Structural choices: which surveys are biased, which share a latent
/// prevalence field (same time index), and which shared design columns
/// enter the bias regression.
struct ModelSpec {
  int n_surveys = 0;
  std::vector<bool> biased;       // per survey
  std::vector<int> time_index;    // per survey; equal index => shared field
  std::vector<int> bias_mask;     // shared-column indices in bias blocks (0 = intercept)
  bool tie_tau2 = true;           // single nugget variance across surveys
  std::optional<double> fixed_tau2;  // when set, tau2 held constant, not estimated

  int n_biased() const {
    int k = 0;
    for (bool b : biased) k += b ? 1 : 0;
    return k;
  }
  bool any_biased() const { return n_biased() > 0; }

  /// Distinct time indices map to latent fields 0..K-1 in order of first
  /// appearance over surveys.
  int n_fields() const;
  int field_of_survey(int i) const;

  /// Free cross-correlations, one per unordered pair of distinct fields.
  int n_alpha() const {
    int k = n_fields();
    return k * (k - 1) / 2;
  }
  /// Index into the alpha vector for fields f < g.
  int alpha_index(int f, int g) const;

  int n_tau2() const { return tie_tau2 ? 1 : n_surveys; }
  double tau2_of_survey(const VectorXd& tau2, int i) const {
    return tie_tau2 ? tau2[0] : tau2[i];
  }

  void validate() const;
};

/// Covariance parameters theta. alpha holds the free cross-correlations in
/// alpha_index order; pairs of surveys sharing a time period are coupled at
/// exactly 1 and have no entry here.
struct CovParams {
  double sigma2 = 1.0;   // variance of the prevalence fields S_i
  VectorXd nu2;          // bias-field variances, one per biased survey
  VectorXd tau2;         // nugget variances (length n_tau2())
  double phi = 1.0;      // range of S
  double delta = 1.0;    // range of B
  VectorXd alpha;        // free cross-correlations in (-1,1)

  void validate(const ModelSpec& spec) const;
};

struct ParamSet {
  VectorXd beta;  // shared block then one block per biased survey
  CovParams cov;
};

/// One conditional draw of the stacked linear predictor T given data.
using LatentSample = VectorXd;

}  // namespace prevfuse
