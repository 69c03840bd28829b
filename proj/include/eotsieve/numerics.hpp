#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "eotsieve/errors.hpp"

namespace eotsieve {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// log(sum_i exp(e_i)) with max-subtraction.
inline double log_sum_exp(const Vector& e) {
  const double m = e.maxCoeff();
  if (!std::isfinite(m)) {
    if (m == -std::numeric_limits<double>::infinity()) return m;
    throw NumericalError("non-finite-exponent", "log_sum_exp: non-finite exponent");
  }
  return m + std::log((e.array() - m).exp().sum());
}

/// log((1/N) sum_i exp(e_i)).
inline double log_mean_exp(const Vector& e) {
  return log_sum_exp(e) - std::log(double(e.size()));
}

/// softmax(e) with max-subtraction; writes into `w`.
inline void softmax_into(const Vector& e, Vector& w) {
  const double m = e.maxCoeff();
  w = (e.array() - m).exp();
  w /= w.sum();
}

/// Empirical quantile (order statistic at ceil(p*n), 1-based), values copied.
inline double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("empirical_quantile: empty sample");
  const std::size_t n = values.size();
  std::size_t k = std::size_t(std::ceil(p * double(n)));
  if (k < 1) k = 1;
  if (k > n) k = n;
  std::nth_element(values.begin(), values.begin() + (k - 1), values.end());
  return values[k - 1];
}

struct BoxStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
};

/// Five-number summary plus mean (box-plot statistics).
inline BoxStats box_stats(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("box_stats: empty sample");
  std::sort(v.begin(), v.end());
  auto interp = [&](double p) {
    // Linear interpolation between order statistics (type-7 quantile).
    const double h = p * double(v.size() - 1);
    const std::size_t i = std::size_t(std::floor(h));
    const std::size_t j = std::min(i + 1, v.size() - 1);
    return v[i] + (h - double(i)) * (v[j] - v[i]);
  };
  BoxStats s;
  s.min = v.front();
  s.max = v.back();
  s.q1 = interp(0.25);
  s.median = interp(0.5);
  s.q3 = interp(0.75);
  double acc = 0;
  for (double x : v) acc += x;
  s.mean = acc / double(v.size());
  return s;
}

inline double mean_of(const std::vector<double>& v) {
  double acc = 0;
  for (double x : v) acc += x;
  return acc / double(v.size());
}

inline double stddev_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double acc = 0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / double(v.size() > 1 ? v.size() - 1 : 1));
}

}  // namespace eotsieve
