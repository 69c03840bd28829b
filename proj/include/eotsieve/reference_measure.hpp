#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "eotsieve/cost.hpp"
#include "eotsieve/errors.hpp"
#include "eotsieve/marginal.hpp"
#include "eotsieve/numerics.hpp"
#include "eotsieve/random.hpp"

namespace eotsieve {

struct LogNormalizer {
  double log_a = 0;       // log of the Monte Carlo mean of exp(-gamma*c)
  double stderr_log = 0;  // delta-method standard error of log_a
  std::int64_t sample_count = 0;
};

/// Monte Carlo estimate of log a_gamma = log E[exp(-gamma*c(X,Y))] over
/// product-measure draws, computed with max-shifted arithmetic so the result
/// is finite for any gamma the weights allow.
inline LogNormalizer estimate_log_a_gamma(double gamma, const CostFunction& cost,
                                          const Marginal& x_marg,
                                          const Marginal& y_marg,
                                          std::int64_t mc_count, Rng& rng) {
  if (gamma <= 0) throw InvalidArgument("estimate_log_a_gamma: gamma must be positive");
  if (mc_count < 100) throw InvalidArgument("estimate_log_a_gamma: mc_count >= 100 required");

  Vector e(mc_count);
  for (std::int64_t i = 0; i < mc_count; ++i) {
    const Vector x = x_marg.sample_point(rng);
    const Vector y = y_marg.sample_point(rng);
    e[i] = -gamma * cost(x, y);
  }
  const double shift = e.maxCoeff();
  if (!std::isfinite(shift))
    throw NumericalUnderflow(
        "estimate_log_a_gamma: every weight exp(-gamma*c) vanished at working "
        "precision; use a larger shift or a smaller gamma");
  const Eigen::ArrayXd u = (e.array() - shift).exp();  // in (0,1], max = 1
  const double mean_u = u.mean();
  const double var_u = (u - mean_u).square().sum() / double(mc_count - 1);
  LogNormalizer out;
  out.log_a = shift + std::log(mean_u);
  out.stderr_log = std::sqrt(var_u / double(mc_count)) / mean_u;
  out.sample_count = mc_count;
  if (!std::isfinite(out.log_a))
    throw NumericalUnderflow("estimate_log_a_gamma: normalizer estimate not finite");
  return out;
}

/// The Gibbs reweighting R_gamma of the product measure: density proportional
/// to exp(-gamma*c) against P_X (x) P_Y. Immutable; sampling takes a
/// caller-owned random stream.
class ReferenceMeasure {
 public:
  ReferenceMeasure(double gamma, CostFunction cost, Marginal x_marg, Marginal y_marg,
                   LogNormalizer normalizer)
      : gamma_(gamma),
        cost_(std::move(cost)),
        x_marg_(std::move(x_marg)),
        y_marg_(std::move(y_marg)),
        normalizer_(normalizer) {
    if (gamma_ <= 0) throw InvalidArgument("reference: gamma must be positive");
    if (normalizer_.log_a > 0)
      throw InvalidArgument("reference: log a_gamma must be <= 0 for c >= 0");
  }

  static ReferenceMeasure make(double gamma, CostFunction cost, Marginal x_marg,
                               Marginal y_marg, std::int64_t normalizer_draws,
                               Rng& rng) {
    LogNormalizer n =
        estimate_log_a_gamma(gamma, cost, x_marg, y_marg, normalizer_draws, rng);
    return ReferenceMeasure(gamma, std::move(cost), std::move(x_marg),
                            std::move(y_marg), n);
  }

  double gamma() const { return gamma_; }
  const CostFunction& cost() const { return cost_; }
  const Marginal& x_marginal() const { return x_marg_; }
  const Marginal& y_marginal() const { return y_marg_; }
  double log_a_gamma() const { return normalizer_.log_a; }
  double a_gamma_stderr() const { return normalizer_.stderr_log; }
  std::int64_t normalizer_sample_count() const { return normalizer_.sample_count; }

 private:
  double gamma_;
  CostFunction cost_;
  Marginal x_marg_;
  Marginal y_marg_;
  LogNormalizer normalizer_;
};

struct ReferenceSample {
  std::vector<Vector> x;
  std::vector<Vector> y;
  std::int64_t proposals = 0;
  double acceptance_rate = 0;  // equals a_gamma * exp(gamma*inf c) in expectation
};

/// Exact i.i.d. draws from R_gamma by rejection: propose from the product
/// measure, accept with probability exp(-gamma*(c - inf c)).
inline ReferenceSample sample_reference(const ReferenceMeasure& ref, std::int64_t count,
                                        std::int64_t max_proposals, Rng& rng) {
  if (count < 1) throw InvalidArgument("sample_reference: count >= 1 required");
  if (max_proposals < count)
    throw InvalidArgument("sample_reference: max_proposals >= count required");
  const double gamma = ref.gamma();
  const double inf_c = ref.cost().inf_value();
  ReferenceSample out;
  out.x.reserve(std::size_t(count));
  out.y.reserve(std::size_t(count));
  while (std::int64_t(out.x.size()) < count) {
    if (out.proposals >= max_proposals) {
      out.acceptance_rate = double(out.x.size()) / double(out.proposals);
      throw AcceptanceBudgetExceeded(
          "sample_reference: proposal budget exhausted before " +
              std::to_string(count) + " acceptances (observed acceptance rate " +
              std::to_string(out.acceptance_rate) + ")",
          out.acceptance_rate);
    }
    ++out.proposals;
    Vector x = ref.x_marginal().sample_point(rng);
    Vector y = ref.y_marginal().sample_point(rng);
    const double accept_p = std::exp(-gamma * (ref.cost()(x, y) - inf_c));
    if (rng.uniform01() < accept_p) {
      out.x.push_back(std::move(x));
      out.y.push_back(std::move(y));
    }
  }
  out.acceptance_rate = double(count) / double(out.proposals);
  return out;
}

/// Sampling-importance-resampling fallback for high-gamma regimes where the
/// rejection rate collapses: draws `oversample * count` product proposals,
/// weights them by exp(-gamma*c) and resamples with replacement. Biased for
/// fixed budgets, hence not the default.
inline ReferenceSample sample_reference_importance(const ReferenceMeasure& ref,
                                                   std::int64_t count,
                                                   std::int64_t oversample, Rng& rng) {
  if (count < 1) throw InvalidArgument("sample_reference_importance: count >= 1");
  if (oversample < 2) throw InvalidArgument("sample_reference_importance: oversample >= 2");
  const std::int64_t m = count * oversample;
  std::vector<Vector> px, py;
  px.reserve(std::size_t(m));
  py.reserve(std::size_t(m));
  Vector e(m);
  for (std::int64_t i = 0; i < m; ++i) {
    px.push_back(ref.x_marginal().sample_point(rng));
    py.push_back(ref.y_marginal().sample_point(rng));
    e[i] = -ref.gamma() * ref.cost()(px.back(), py.back());
  }
  Vector w;
  softmax_into(e, w);
  // Inverse-CDF resampling on the normalized weights.
  Vector cum(m);
  double acc = 0;
  for (std::int64_t i = 0; i < m; ++i) {
    acc += w[i];
    cum[i] = acc;
  }
  ReferenceSample out;
  out.proposals = m;
  for (std::int64_t i = 0; i < count; ++i) {
    const double u = rng.uniform01() * acc;
    const double* it = std::lower_bound(cum.data(), cum.data() + m, u);
    const std::int64_t k = std::min<std::int64_t>(it - cum.data(), m - 1);
    out.x.push_back(px[std::size_t(k)]);
    out.y.push_back(py[std::size_t(k)]);
  }
  out.acceptance_rate = double(count) / double(m);
  return out;
}

/// Self-normalized importance-sampling mean of h under R_gamma using product
/// draws with weights exp(-gamma*c). Returns (mean, stderr).
inline std::pair<double, double> importance_mean(
    const ReferenceMeasure& ref, const std::function<double(const Vector&, const Vector&)>& h,
    std::int64_t count, Rng& rng) {
  if (count < 2) throw InvalidArgument("importance_mean: count >= 2 required");
  Vector e(count), hv(count);
  for (std::int64_t i = 0; i < count; ++i) {
    const Vector x = ref.x_marginal().sample_point(rng);
    const Vector y = ref.y_marginal().sample_point(rng);
    e[i] = -ref.gamma() * ref.cost()(x, y);
    hv[i] = h(x, y);
  }
  Vector w;
  softmax_into(e, w);
  const double mean = w.dot(hv);
  double se2 = 0;
  for (std::int64_t i = 0; i < count; ++i) {
    const double d = hv[i] - mean;
    se2 += w[i] * w[i] * d * d;
  }
  return {mean, std::sqrt(se2)};
}

}  // namespace eotsieve
