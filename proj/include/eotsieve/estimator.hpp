#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "eotsieve/errors.hpp"
#include "eotsieve/numerics.hpp"
#include "eotsieve/projections.hpp"
#include "eotsieve/random.hpp"
#include "eotsieve/reference_measure.hpp"
#include "eotsieve/saa_solver.hpp"

#include <json.hpp>

namespace eotsieve {

struct EotEstimate {
  double gamma = 0;
  double eot_value = 0;  // (log a_gamma - log theta_hat) / gamma
  double theta_hat = 0;
  double log_theta_hat = 0;
  double log_a_gamma = 0;
  double log_a_gamma_stderr = 0;  // reported, not folded into the CI
  bool has_ci = false;
  double ci_lo = 0, ci_hi = 0;  // for theta*, on the theta scale
  double ci_level = 0;
  double epsilon = 0;
  std::int64_t n_total = 0;
  std::int64_t sample_size = 0;
  double rate_bound_log10 = 0;

  /// Value-scale CI endpoints via the strictly decreasing map
  /// theta -> -(log a + log theta)/gamma; a zero lower endpoint maps to +inf.
  std::pair<double, double> value_scale_ci() const {
    const double hi = ci_lo > 0 ? -(log_a_gamma + std::log(ci_lo)) / gamma
                                : std::numeric_limits<double>::infinity();
    const double lo = -(log_a_gamma + std::log(ci_hi)) / gamma;
    return {lo, hi};
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["gamma"] = gamma;
    j["eot_value"] = eot_value;
    j["theta_hat"] = theta_hat;
    j["log_theta_hat"] = log_theta_hat;
    j["log_a_gamma"] = log_a_gamma;
    j["log_a_gamma_stderr"] = log_a_gamma_stderr;
    j["log_a_gamma_note"] =
        "normalizer uncertainty is reported here and is not included in the CI";
    j["epsilon"] = epsilon;
    j["n_total"] = n_total;
    j["sample_size"] = sample_size;
    j["rate_bound_log10"] = rate_bound_log10;
    if (has_ci) {
      j["ci_level"] = ci_level;
      j["theta_ci"] = {ci_lo, ci_hi};
      auto [lo, hi] = value_scale_ci();
      j["value_ci_lo"] = lo;
      if (std::isfinite(hi))
        j["value_ci_hi"] = hi;
      else
        j["value_ci_hi"] = nullptr;
    }
    return j;
  }
};

/// Point estimate -(log a_gamma + log theta_hat)/gamma: the I-projection
/// value m = -log theta* plus the normalizer offset -gamma^{-1} log a_gamma.
/// Refuses unconverged solutions rather than propagating a silent failure.
inline EotEstimate estimate_eot(const SaaSolution& solution, const ReferenceMeasure& ref) {
  if (!solution.converged)
    throw UnconvergedSolution(
        "estimate_eot: solver did not converge (gradient mapping norm " +
        std::to_string(solution.final_gradient_mapping_norm) + ")");
  EotEstimate est;
  est.gamma = ref.gamma();
  est.log_a_gamma = ref.log_a_gamma();
  est.log_a_gamma_stderr = ref.a_gamma_stderr();
  est.log_theta_hat = solution.log_theta_hat;
  est.theta_hat = std::exp(solution.log_theta_hat);
  est.eot_value = -(ref.log_a_gamma() + solution.log_theta_hat) / ref.gamma();
  return est;
}

/// log10 of max{sqrt(2 log n / N), eps} * 2*kappa*||c||_inf * e^{2*gamma*kappa*||c||_inf},
/// computed in log space (the bound itself overflows for moderate gamma).
inline double rate_bound_log10(double epsilon, std::int64_t n_total, std::int64_t N,
                               double gamma, double kappa_value, double sup_norm) {
  if (epsilon <= 0 || n_total <= 0 || N <= 0 || gamma <= 0 || kappa_value <= 0 ||
      sup_norm <= 0)
    throw InvalidArgument("rate_bound: all inputs must be positive");
  const double stochastic = std::sqrt(2.0 * std::log(double(n_total)) / double(N));
  const double lead = std::max(stochastic, epsilon) * 2.0 * kappa_value * sup_norm;
  return std::log10(lead) + 2.0 * gamma * kappa_value * sup_norm / std::log(10.0);
}

namespace detail {

/// One-sided sup statistics max_g(+/- z_g) of the multiplier process over the
/// index grid, direct arithmetic. `centered` is G x N with rows G_g - mean.
inline void bootstrap_sups_direct(const Matrix& centered, const Matrix& multipliers,
                                  std::vector<double>& sups) {
  const double inv_sqrt_n = 1.0 / std::sqrt(double(centered.cols()));
  const Matrix z = inv_sqrt_n * (centered * multipliers);  // G x B
  for (Eigen::Index b = 0; b < z.cols(); ++b) {
    sups.push_back(z.col(b).maxCoeff());
    sups.push_back(-z.col(b).minCoeff());
  }
}

/// Signed log-domain accumulation sum_j xi_j * exp(e_j): returns
/// (log|sum|, sign). Used when the integrand overflows doubles.
inline std::pair<double, double> signed_weighted_logsum(const Vector& exponents,
                                                        const Vector& xi) {
  const double m = exponents.maxCoeff();
  double pos = 0, neg = 0;
  for (Eigen::Index j = 0; j < exponents.size(); ++j) {
    const double t = std::exp(exponents[j] - m);
    if (xi[j] >= 0)
      pos += xi[j] * t;
    else
      neg += -xi[j] * t;
  }
  const double diff = pos - neg;
  if (diff == 0) return {-std::numeric_limits<double>::infinity(), 1.0};
  return {m + std::log(std::abs(diff)), diff > 0 ? 1.0 : -1.0};
}

/// Log-domain fallback of the sup computation (exponents may exceed ~700).
inline void bootstrap_sups_logdomain(const Matrix& exponents, const Matrix& multipliers,
                                     std::vector<double>& sups) {
  const Eigen::Index g_count = exponents.rows();
  const Eigen::Index n = exponents.cols();
  const double log_sqrt_n = 0.5 * std::log(double(n));
  Vector lme(g_count);
  for (Eigen::Index g = 0; g < g_count; ++g)
    lme[g] = log_mean_exp(exponents.row(g).transpose());
  for (Eigen::Index b = 0; b < multipliers.cols(); ++b) {
    const Vector xi = multipliers.col(b);
    const double xi_sum = xi.sum();
    double best_pos = -std::numeric_limits<double>::infinity();
    double best_neg = -std::numeric_limits<double>::infinity();
    for (Eigen::Index g = 0; g < g_count; ++g) {
      auto [la, sa] = signed_weighted_logsum(exponents.row(g).transpose(), xi);
      // z_g = (sa*e^la - xi_sum*e^lme_g) / sqrt(N), combined in log domain.
      const double lb = lme[g] + std::log(std::abs(xi_sum) + 1e-300);
      const double sb = xi_sum >= 0 ? 1.0 : -1.0;
      double lz, sz;
      if (sa == sb) {
        // Same sign: |a| - |b| may cancel.
        const double hi = std::max(la, lb), lo = std::min(la, lb);
        const double d = 1.0 - std::exp(lo - hi);
        if (d <= 0) {
          lz = -std::numeric_limits<double>::infinity();
          sz = 1.0;
        } else {
          lz = hi + std::log(d);
          sz = (la >= lb ? sa : -sa);
        }
      } else {
        // Opposite signs: a - b = sign(a) * (|a| + |b|).
        const double hi = std::max(la, lb), lo = std::min(la, lb);
        lz = hi + std::log1p(std::exp(lo - hi));
        sz = sa;
      }
      lz -= log_sqrt_n;
      if (sz > 0)
        best_pos = std::max(best_pos, lz);
      else
        best_neg = std::max(best_neg, lz);
    }
    sups.push_back(std::exp(best_pos));
    sups.push_back(std::exp(best_neg));
  }
}

}  // namespace detail

/// Multiplier-bootstrap symmetric confidence interval for theta*: sup over an
/// index grid (the optimizer plus uniform draws from the bounded feasible
/// class, sum|tau_i| <= kappa) of |N^{-1/2} sum_j xi_j (G(omega_j;tau) - Gbar)|
/// with standard normal multipliers; returns theta_hat -/+ qhat/sqrt(N)
/// intersected with (0, inf).
inline std::pair<double, double> symmetric_ci(const SaaSolution& solution,
                                              const Matrix& dictionary_values,
                                              double scale, double shift, double level,
                                              std::int64_t bootstrap_draws,
                                              std::int64_t index_grid_size, Rng& rng,
                                              const Vector& offsets = Vector()) {
  if (!solution.converged)
    throw UnconvergedSolution("symmetric_ci: solution must be converged");
  if (!(level > 0.5 && level < 1.0))
    throw InvalidArgument("symmetric_ci: level must lie in (0.5, 1)");
  if (bootstrap_draws < 200)
    throw InvalidArgument("symmetric_ci: bootstrap_draws >= 200 required");
  if (index_grid_size < 1)
    throw InvalidArgument("symmetric_ci: index_grid_size >= 1 required");
  if (solution.tau.size() != dictionary_values.cols())
    throw InvalidArgument("symmetric_ci: solution/dictionary size mismatch");
  if (offsets.size() != 0 && offsets.size() != dictionary_values.rows())
    throw InvalidArgument("symmetric_ci: offsets size mismatch");

  const Eigen::Index N = dictionary_values.rows();
  const Eigen::Index n = dictionary_values.cols();
  const double kappa_value = scale > 0 ? shift / scale : 1.0;

  // Index grid: the optimizer plus uniform draws from the uniformly bounded
  // class {sum|tau| <= kappa} (the set indexing the Gaussian processes).
  ReducedFeasibleSet bounded;
  bounded.n = int(n);
  bounded.strict_l1 = true;
  bounded.l1_bound = kappa_value;
  Matrix taus(index_grid_size, n);
  taus.row(0) = solution.tau.transpose();
  for (Eigen::Index g = 1; g < index_grid_size; ++g) {
    Vector t = bounded.sample_uniform(rng);
    if (kappa_value > 1.0) {
      // Keep the grid inside the solved program's slab as well.
      for (int tries = 0; tries < 100000 && std::abs(t.sum()) > 1.0; ++tries)
        t = bounded.sample_uniform(rng);
    }
    taus.row(g) = t.transpose();
  }

  Matrix exponents = scale * (taus * dictionary_values.transpose());  // G x N
  if (offsets.size() > 0) exponents.rowwise() += offsets.transpose();

  // Deterministic per-draw multiplier streams keyed by the draw index.
  const std::uint64_t base = rng.next_u64();
  Matrix multipliers(N, bootstrap_draws);
  for (Eigen::Index b = 0; b < bootstrap_draws; ++b) {
    Rng draw_rng(derive_seed(base, std::uint64_t(b), 0x626f6f74));
    for (Eigen::Index j = 0; j < N; ++j) multipliers(j, b) = draw_rng.normal();
  }

  std::vector<double> sups;
  sups.reserve(std::size_t(2 * bootstrap_draws));
  if (exponents.maxCoeff() < 700.0) {
    Matrix values = exponents.array().exp().matrix();
    const Vector row_means = values.rowwise().mean();
    values.colwise() -= row_means;
    detail::bootstrap_sups_direct(values, multipliers, sups);
  } else {
    detail::bootstrap_sups_logdomain(exponents, multipliers, sups);
  }

  const double q = empirical_quantile(sups, 1.0 - (1.0 - level) / 2.0);
  const double theta_hat = std::exp(solution.log_theta_hat);
  const double half = q / std::sqrt(double(N));
  return {std::max(theta_hat - half, 0.0), theta_hat + half};
}

}  // namespace eotsieve
