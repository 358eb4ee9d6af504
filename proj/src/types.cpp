#include "prevfuse/types.hpp"

#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace prevfuse {

void SurveyDataset::validate() const {
  const int n = total_n();
  if (n_per_survey.empty()) throw std::invalid_argument("dataset has no surveys");
  for (int ni : n_per_survey)
    if (ni <= 0) throw std::invalid_argument("survey with no records");
  if (loc.rows() != n || loc.cols() != 2)
    throw std::invalid_argument("locations must be N x 2");
  if (m.size() != n || y.size() != n)
    throw std::invalid_argument("count vectors must have one entry per record");
  if (covariates.rows() != 0 && covariates.rows() != n)
    throw std::invalid_argument("covariate rows must match record count");
  if (static_cast<int>(covariate_names.size()) != covariates.cols())
    throw std::invalid_argument("covariate names must match covariate columns");
  for (int j = 0; j < n; ++j) {
    if (!std::isfinite(loc(j, 0)) || !std::isfinite(loc(j, 1)))
      throw std::invalid_argument("non-finite coordinate at row " + std::to_string(j));
    if (m[j] < 1 || m[j] != std::floor(m[j]))
      throw std::invalid_argument("denominator must be a positive integer at row " +
                                  std::to_string(j));
    if (y[j] < 0 || y[j] > m[j] || y[j] != std::floor(y[j]))
      throw std::invalid_argument("count outside [0, m] at row " + std::to_string(j));
  }
  for (int i = 0; i < covariates.size(); ++i)
    if (!std::isfinite(covariates.data()[i]))
      throw std::invalid_argument("non-finite covariate value");
}

int ModelSpec::n_fields() const {
  std::vector<int> seen;
  for (int t : time_index) {
    bool found = false;
    for (int s : seen) found = found || (s == t);
    if (!found) seen.push_back(t);
  }
  return static_cast<int>(seen.size());
}

int ModelSpec::field_of_survey(int i) const {
  std::vector<int> seen;
  for (int k = 0; k < n_surveys; ++k) {
    const int t = time_index[k];
    int idx = -1;
    for (int s = 0; s < static_cast<int>(seen.size()); ++s)
      if (seen[s] == t) idx = s;
    if (idx < 0) {
      seen.push_back(t);
      idx = static_cast<int>(seen.size()) - 1;
    }
    if (k == i) return idx;
  }
  throw std::invalid_argument("survey index out of range");
}

int ModelSpec::alpha_index(int f, int g) const {
  if (f == g) throw std::invalid_argument("no free alpha within a field");
  if (f > g) std::swap(f, g);
  const int k = n_fields();
  if (g >= k) throw std::invalid_argument("field index out of range");
  // pairs enumerated (0,1),(0,2),...,(0,k-1),(1,2),...
  int idx = 0;
  for (int a = 0; a < f; ++a) idx += k - 1 - a;
  return idx + (g - f - 1);
}

void ModelSpec::validate() const {
  if (n_surveys <= 0) throw std::invalid_argument("model needs at least one survey");
  if (static_cast<int>(biased.size()) != n_surveys ||
      static_cast<int>(time_index.size()) != n_surveys)
    throw std::invalid_argument("per-survey fields must have n_surveys entries");
  bool any_gold = false;
  for (bool b : biased) any_gold = any_gold || !b;
  if (!any_gold)
    throw std::invalid_argument(
        "no gold-standard survey: the model requires at least one unbiased survey");
  std::set<int> mask(bias_mask.begin(), bias_mask.end());
  if (mask.size() != bias_mask.size())
    throw std::invalid_argument("duplicate bias mask entries");
  for (int c : bias_mask)
    if (c < 0) throw std::invalid_argument("negative bias mask column");
  if (fixed_tau2 && *fixed_tau2 < 0)
    throw std::invalid_argument("fixed tau2 must be nonnegative");
}

void CovParams::validate(const ModelSpec& spec) const {
  auto chk = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  chk(std::isfinite(sigma2) && sigma2 > 0, "sigma2 must be positive");
  chk(std::isfinite(phi) && phi > 0, "phi must be positive");
  chk(nu2.size() == spec.n_biased(), "nu2 needs one entry per biased survey");
  for (int i = 0; i < nu2.size(); ++i)
    chk(std::isfinite(nu2[i]) && nu2[i] >= 0, "nu2 must be nonnegative");
  if (spec.any_biased()) chk(std::isfinite(delta) && delta > 0, "delta must be positive");
  chk(tau2.size() == spec.n_tau2(), "tau2 has wrong length");
  for (int i = 0; i < tau2.size(); ++i)
    chk(std::isfinite(tau2[i]) && tau2[i] >= 0, "tau2 must be nonnegative");
  chk(alpha.size() == spec.n_alpha(), "alpha has wrong length");
  for (int i = 0; i < alpha.size(); ++i)
    chk(std::isfinite(alpha[i]) && std::abs(alpha[i]) < 1, "alpha must lie in (-1,1)");
}

}  // namespace prevfuse
