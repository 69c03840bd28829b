#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "eotsieve/errors.hpp"
#include "eotsieve/marginal.hpp"
#include "eotsieve/numerics.hpp"

namespace eotsieve {

/// Continuous nonnegative cost c(x, y) together with its sup-norm over the
/// support box and its infimum. Bounds are constructor inputs when analytic;
/// otherwise fill them with estimate_sup_and_inf (default 256-point grid).
class CostFunction {
 public:
  using Evaluator = std::function<double(const Vector&, const Vector&)>;

  CostFunction(std::string name, Evaluator eval, double sup_norm, double inf_value)
      : name_(std::move(name)),
        eval_(std::move(eval)),
        sup_norm_(sup_norm),
        inf_value_(inf_value) {
    if (!eval_) throw InvalidArgument("cost: evaluator required");
    if (sup_norm_ < 0 || inf_value_ < 0 || inf_value_ > sup_norm_)
      throw InvalidArgument("cost: need 0 <= inf_value <= sup_norm");
  }

  /// c(x,y) = 0.5 * ||x - y||^2 with exact bounds over the support boxes.
  static CostFunction quadratic(const Marginal& xm, const Marginal& ym) {
    check_dims(xm, ym);
    double sup = 0, inf = 0;
    for (int i = 0; i < xm.dimension(); ++i) {
      const double xl = xm.support_lo()[i], xh = xm.support_hi()[i];
      const double yl = ym.support_lo()[i], yh = ym.support_hi()[i];
      const double span = std::max(std::abs(yh - xl), std::abs(xh - yl));
      sup += 0.5 * span * span;
      const double gap = std::max({0.0, yl - xh, xl - yh});
      inf += 0.5 * gap * gap;
    }
    return CostFunction("quadratic",
                        [](const Vector& x, const Vector& y) {
                          return 0.5 * (x - y).squaredNorm();
                        },
                        sup, inf);
  }

  /// c(x,y) = sum_i |x_i - y_i| (plain |x - y| in one dimension).
  static CostFunction absolute(const Marginal& xm, const Marginal& ym) {
    check_dims(xm, ym);
    double sup = 0, inf = 0;
    for (int i = 0; i < xm.dimension(); ++i) {
      const double xl = xm.support_lo()[i], xh = xm.support_hi()[i];
      const double yl = ym.support_lo()[i], yh = ym.support_hi()[i];
      sup += std::max(std::abs(yh - xl), std::abs(xh - yl));
      inf += std::max({0.0, yl - xh, xl - yh});
    }
    return CostFunction("absolute",
                        [](const Vector& x, const Vector& y) {
                          return (x - y).cwiseAbs().sum();
                        },
                        sup, inf);
  }

  double operator()(const Vector& x, const Vector& y) const { return eval_(x, y); }
  double sup_norm() const { return sup_norm_; }
  double inf_value() const { return inf_value_; }
  const std::string& name() const { return name_; }

 private:
  static void check_dims(const Marginal& xm, const Marginal& ym) {
    if (xm.dimension() != ym.dimension())
      throw InvalidArgument("cost: built-in kinds need matching dimensions");
  }

  std::string name_;
  Evaluator eval_;
  double sup_norm_;
  double inf_value_;
};

/// Tensor-grid extremes of the cost over the support boxes. The max is a
/// lower bound on the sup and the min an upper bound on the inf.
inline std::pair<double, double> estimate_sup_and_inf(
    const CostFunction::Evaluator& eval, const Marginal& xm, const Marginal& ym,
    int grid_points_per_axis = 256) {
  if (grid_points_per_axis < 2)
    throw InvalidArgument("estimate_sup_and_inf: grid must have >= 2 points per axis");
  const int dx = xm.dimension(), dy = ym.dimension();
  const int g = grid_points_per_axis;
  auto axis_value = [g](double lo, double hi, int k) {
    return lo + (hi - lo) * double(k) / double(g - 1);
  };
  Vector x(dx), y(dy);
  std::vector<int> idx(std::size_t(dx + dy), 0);
  double sup = -std::numeric_limits<double>::infinity();
  double inf = std::numeric_limits<double>::infinity();
  for (;;) {
    for (int i = 0; i < dx; ++i)
      x[i] = axis_value(xm.support_lo()[i], xm.support_hi()[i], idx[std::size_t(i)]);
    for (int j = 0; j < dy; ++j)
      y[j] = axis_value(ym.support_lo()[j], ym.support_hi()[j], idx[std::size_t(dx + j)]);
    const double c = eval(x, y);
    sup = std::max(sup, c);
    inf = std::min(inf, c);
    int axis = 0;
    while (axis < dx + dy && ++idx[std::size_t(axis)] == g) idx[std::size_t(axis++)] = 0;
    if (axis == dx + dy) break;
  }
  return {sup, inf};
}

/// Randomized check of the cost invariants 0 <= inf <= c(x,y) <= sup over
/// in-support pairs; throws on violation (small tolerance for FP noise).
inline void probe_cost_bounds(const CostFunction& cost, const Marginal& xm,
                              const Marginal& ym, int probes, Rng& rng) {
  const double tol = 1e-12 * std::max(1.0, cost.sup_norm());
  for (int i = 0; i < probes; ++i) {
    const Vector x = xm.sample_point(rng);
    const Vector y = ym.sample_point(rng);
    const double c = cost(x, y);
    if (!(c >= 0.0))
      throw InvalidArgument("cost: negative value found at a probed pair");
    if (c < cost.inf_value() - tol || c > cost.sup_norm() + tol)
      throw InvalidArgument("cost: probed value outside [inf_value, sup_norm]");
  }
}

}  // namespace eotsieve
