#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace prevfuse {

/// Linear-interpolation sample quantile (the R default, type 7):
/// h = (n-1)p, result = x[floor(h)] + (h - floor(h)) (x[floor(h)+1] - x[floor(h)]).
inline double quantile_type7(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level outside [0,1]");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const size_t lo = static_cast<size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

/// Inverse-ECDF sample quantile (type 1): the smallest order statistic whose
/// ECDF value reaches p. Two points at p=0.025/0.975 give min/max.
inline double quantile_type1(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level outside [0,1]");
  std::sort(v.begin(), v.end());
  if (p == 0.0) return v.front();
  const double np = static_cast<double>(v.size()) * p;
  size_t k = static_cast<size_t>(std::ceil(np));
  if (k < 1) k = 1;
  if (k > v.size()) k = v.size();
  return v[k - 1];
}

inline double sample_mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of an empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Unbiased (n-1) sample standard deviation.
inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) throw std::invalid_argument("sd needs at least two values");
  const double mu = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace prevfuse
