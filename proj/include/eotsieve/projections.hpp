#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "eotsieve/errors.hpp"
#include "eotsieve/numerics.hpp"
#include "eotsieve/random.hpp"

namespace eotsieve {

/// Feasible set of the reduced program: tau in [-1,1]^n with sum(tau) in
/// [-1,1]. The optional strict mode replaces the sum slab by an l1 bound
/// sum|tau_i| <= kappa, which caps the exponent at gamma*kappa*||c||_inf.
struct ReducedFeasibleSet {
  int n = 0;
  double box_lo = -1.0, box_hi = 1.0;
  double sum_lo = -1.0, sum_hi = 1.0;
  bool strict_l1 = false;
  double l1_bound = 1.0;  // kappa, used only when strict_l1

  bool contains(const Vector& tau, double tol = 1e-12) const {
    if (tau.size() != n) return false;
    if ((tau.array() < box_lo - tol).any() || (tau.array() > box_hi + tol).any())
      return false;
    if (strict_l1) return tau.cwiseAbs().sum() <= l1_bound + tol;
    const double s = tau.sum();
    return s >= sum_lo - tol && s <= sum_hi + tol;
  }

  /// Uniform draw by rejection from the box (default mode) or by the
  /// simplex-with-signs construction for the l1 ball (strict mode).
  Vector sample_uniform(Rng& rng, int max_tries = 1000000) const {
    Vector tau(n);
    if (strict_l1) {
      // Uniform on the l1 ball of radius l1_bound, then reject outside the box.
      for (int t = 0; t < max_tries; ++t) {
        double total = rng.exponential();
        for (int i = 0; i < n; ++i) {
          tau[i] = rng.exponential();
          total += tau[i];
        }
        for (int i = 0; i < n; ++i) {
          tau[i] = tau[i] / total * l1_bound;
          if (rng.uniform01() < 0.5) tau[i] = -tau[i];
        }
        if (contains(tau)) return tau;
      }
    } else {
      for (int t = 0; t < max_tries; ++t) {
        for (int i = 0; i < n; ++i) tau[i] = rng.uniform(box_lo, box_hi);
        const double s = tau.sum();
        if (s >= sum_lo && s <= sum_hi) return tau;
      }
    }
    throw NumericalError("sampling-budget",
                         "ReducedFeasibleSet::sample_uniform: rejection budget spent");
  }
};

/// Feasible set of the general program: alpha in [0, alpha_max], mu in the
/// probability simplex.
struct GeneralFeasibleSet {
  int n = 0;  // simplex dimension (signed dictionary size)
  double alpha_max = 0;

  bool contains(double alpha, const Vector& mu, double tol = 1e-12) const {
    if (mu.size() != n) return false;
    if (alpha < -tol || alpha > alpha_max + tol) return false;
    if ((mu.array() < -tol).any()) return false;
    return std::abs(mu.sum() - 1.0) <= tol * double(n) + tol;
  }
};

namespace detail {

inline double clipped_sum(const Vector& p, double lambda, double lo, double hi) {
  double s = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    s += std::clamp(p[i] - lambda, lo, hi);
  return s;
}

}  // namespace detail

/// Euclidean projection onto {tau in [box]^n : sum tau in [sum_lo, sum_hi]}.
/// Clips to the box; if the clipped sum violates the slab, bisects the scalar
/// multiplier lambda so that clip(p - lambda*1) lands exactly on the violated
/// slab face.
inline Vector project_reduced(const Vector& point, const ReducedFeasibleSet& set) {
  if (!point.allFinite()) throw InvalidArgument("project_reduced: non-finite point");
  if (point.size() != set.n) throw InvalidArgument("project_reduced: size mismatch");

  if (set.strict_l1) {
    // Signs are preserved; |tau| is the projection of |p| onto
    // {0 <= t <= box_hi, sum t <= l1_bound}, found by the same bisection.
    Vector a = point.cwiseAbs().cwiseMin(set.box_hi);
    if (a.sum() > set.l1_bound) {
      double lo = 0, hi = point.cwiseAbs().maxCoeff();
      for (int it = 0; it < 200 && hi - lo > 1e-16 * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        double s = 0;
        for (Eigen::Index i = 0; i < point.size(); ++i)
          s += std::clamp(std::abs(point[i]) - mid, 0.0, set.box_hi);
        (s > set.l1_bound ? lo : hi) = mid;
      }
      const double lambda = 0.5 * (lo + hi);
      for (Eigen::Index i = 0; i < point.size(); ++i)
        a[i] = std::clamp(std::abs(point[i]) - lambda, 0.0, set.box_hi);
    }
    Vector out(point.size());
    for (Eigen::Index i = 0; i < point.size(); ++i)
      out[i] = point[i] >= 0 ? a[i] : -a[i];
    return out;
  }

  Vector out = point.cwiseMax(set.box_lo).cwiseMin(set.box_hi);
  const double s = out.sum();
  if (s >= set.sum_lo && s <= set.sum_hi) return out;

  const double target = s > set.sum_hi ? set.sum_hi : set.sum_lo;
  // clip(p - lambda) has sum decreasing in lambda; bracket then bisect.
  double lo = -(point.cwiseAbs().maxCoeff() + 1.0);
  double hi = point.cwiseAbs().maxCoeff() + 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16 * (1.0 + std::abs(hi) + std::abs(lo));
       ++it) {
    const double mid = 0.5 * (lo + hi);
    (detail::clipped_sum(point, mid, set.box_lo, set.box_hi) > target ? lo : hi) = mid;
  }
  const double lambda = 0.5 * (lo + hi);
  for (Eigen::Index i = 0; i < point.size(); ++i)
    out[i] = std::clamp(point[i] - lambda, set.box_lo, set.box_hi);
  return out;
}

/// Euclidean projection onto the probability simplex (sorted-threshold rule).
inline Vector project_simplex(const Vector& point) {
  const Eigen::Index n = point.size();
  if (n == 0) throw InvalidArgument("project_simplex: empty point");
  std::vector<double> u(point.data(), point.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0;
  Eigen::Index rho = 0;
  double rho_css = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    css += u[std::size_t(k)];
    if (u[std::size_t(k)] - (css - 1.0) / double(k + 1) > 0) {
      rho = k + 1;
      rho_css = css;
    }
  }
  const double theta = (rho_css - 1.0) / double(rho);
  return (point.array() - theta).max(0.0);
}

}  // namespace eotsieve
