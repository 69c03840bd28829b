#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eotsieve/errors.hpp"
#include "eotsieve/marginal.hpp"
#include "eotsieve/numerics.hpp"
#include "eotsieve/random.hpp"
#include "eotsieve/reference_measure.hpp"

#include <json.hpp>

namespace eotsieve {

/// Dual-scale constant 1 / max{1 - F_X(inf X), 1 - F_Y(inf Y)}, where F(inf)
/// is the mass of the single point at the support infimum. Equals 1 for
/// atomless marginals.
inline double kappa(const Marginal& x_marg, const Marginal& y_marg) {
  const double denom = std::max(1.0 - x_marg.atom_mass_at_infimum(),
                                1.0 - y_marg.atom_mass_at_infimum());
  if (denom <= 0.0)
    throw DegenerateMarginal(
        "kappa: both marginals are point masses at their support infima");
  return 1.0 / denom;
}

/// Interval partition of one support axis: cell j is (edges[j], edges[j+1]],
/// with one representative inside each cell.
struct AxisPartition {
  std::vector<double> edges;            // size cells()+1, sorted, spans the support
  std::vector<double> representatives;  // size cells()
  int cells() const { return int(representatives.size()); }
};

struct SievePartition {
  double epsilon = 0;
  AxisPartition x;
  AxisPartition y;
  int n_x = 0, n_y = 0;
  int n_total = 0;  // n_x + n_y (reduced form)
  bool check_reference_marginals = false;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["epsilon"] = epsilon;
    j["n_x"] = n_x;
    j["n_y"] = n_y;
    j["n_total"] = n_total;
    j["x_breakpoints"] = x.edges;
    j["y_breakpoints"] = y.edges;
    j["x_representatives"] = x.representatives;
    j["y_representatives"] = y.representatives;
    j["check_reference_marginals"] = check_reference_marginals;
    j["warnings"] = warnings;
    return j;
  }
};

namespace detail {

constexpr std::int64_t kPartitionCellCap = 1000000;

/// Quantile cells with CDF increment <= eps/8 per cell. Continuous kinds cut
/// at the quantile levels {k*eps/8}; discrete kinds group consecutive atoms
/// greedily. An atom heavier than eps/8 becomes its own cell (no finite
/// partition can split an atom); the increment bound is waived for it.
inline AxisPartition build_axis_cells(const Component& comp, double epsilon,
                                      const char* axis_name,
                                      std::vector<std::string>& warnings) {
  const double budget = epsilon / 8.0;
  AxisPartition ap;
  if (comp.kind() == MarginalKind::discrete || comp.kind() == MarginalKind::empirical) {
    const auto& atoms = comp.atoms();
    const auto& weights = comp.weights();
    ap.edges.push_back(comp.lo());
    std::size_t start = 0;
    double mass = 0;
    auto close_group = [&](std::size_t last) {
      ap.edges.push_back(atoms[last]);
      ap.representatives.push_back(atoms[(start + last) / 2]);
    };
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (weights[i] > budget) {
        if (i > start) close_group(i - 1), start = i;
        warnings.push_back(std::string(axis_name) + ": atom at " +
                           std::to_string(atoms[i]) + " carries mass " +
                           std::to_string(weights[i]) +
                           " > epsilon/8; kept as its own cell");
        close_group(i);
        start = i + 1;
        mass = 0;
        continue;
      }
      if (mass + weights[i] > budget && i > start) {
        close_group(i - 1);
        start = i;
        mass = 0;
      }
      mass += weights[i];
    }
    if (start < atoms.size()) close_group(atoms.size() - 1);
    return ap;
  }

  const std::int64_t m = std::int64_t(std::ceil(8.0 / epsilon));
  if (m > kPartitionCellCap)
    throw PartitionBudgetExceeded("build_partition: cell count would exceed 10^6");
  ap.edges.push_back(comp.lo());
  for (std::int64_t k = 1; k < m; ++k) {
    const double q = comp.quantile(double(k) * budget);
    if (q > ap.edges.back() && q < comp.hi()) ap.edges.push_back(q);
  }
  ap.edges.push_back(comp.hi());
  // Degenerate (point-like) support collapses to a single cell.
  if (ap.edges.size() == 2 && ap.edges[0] == ap.edges[1]) {
    ap.representatives.push_back(ap.edges[0]);
    return ap;
  }
  for (std::size_t j = 0; j + 1 < ap.edges.size(); ++j) {
    ap.representatives.push_back(0.5 * (ap.edges[j] + ap.edges[j + 1]));
    const double inc = comp.cdf(ap.edges[j + 1]) - comp.cdf(ap.edges[j]);
    if (inc > budget + 1e-9)
      warnings.push_back(std::string(axis_name) +
                         ": CDF increment exceeds epsilon/8 in cell " +
                         std::to_string(j) + " (hidden atom in a custom law?)");
  }
  return ap;
}

/// Representative inside (a, b]: an atom for discrete laws, else the midpoint.
inline double pick_representative(const Component& comp, double a, double b) {
  if (comp.kind() == MarginalKind::discrete || comp.kind() == MarginalKind::empirical) {
    const auto& atoms = comp.atoms();
    auto first = std::upper_bound(atoms.begin(), atoms.end(), a);
    auto last = std::upper_bound(atoms.begin(), atoms.end(), b);
    if (first != last) return *(first + (last - first - 1) / 2);
  }
  return 0.5 * (a + b);
}

/// Fraction of sample coordinates falling in each cell (a_j, b_j].
inline std::vector<double> cell_fractions(const AxisPartition& ap,
                                          const std::vector<double>& coords) {
  std::vector<double> frac(std::size_t(ap.cells()), 0.0);
  for (double c : coords) {
    // First cell is closed on the left so the support infimum is counted.
    auto it = std::lower_bound(ap.edges.begin() + 1, ap.edges.end(), c);
    std::size_t j = std::size_t(it - ap.edges.begin()) - 1;
    if (j >= frac.size()) j = frac.size() - 1;
    frac[j] += 1.0 / double(coords.size());
  }
  return frac;
}

inline void refine_axis_until(AxisPartition& ap, const Component& comp,
                              const std::vector<double>& coords, double budget,
                              const char* axis_name,
                              std::vector<std::string>& warnings) {
  bool progress = true;
  while (progress) {
    progress = false;
    const std::vector<double> frac = cell_fractions(ap, coords);
    AxisPartition next;
    next.edges.push_back(ap.edges.front());
    for (std::size_t j = 0; j < frac.size(); ++j) {
      const double a = ap.edges[j], b = ap.edges[j + 1];
      if (frac[j] > budget && b > a) {
        next.edges.push_back(0.5 * (a + b));
        progress = true;
      } else if (frac[j] > budget) {
        warnings.push_back(std::string(axis_name) +
                           ": zero-width cell exceeds the reference-marginal "
                           "budget; increment bound waived");
      }
      next.edges.push_back(b);
      if (std::int64_t(next.edges.size()) > kPartitionCellCap)
        throw PartitionBudgetExceeded(
            "build_partition: reference-marginal refinement exceeded 10^6 cells");
    }
    for (std::size_t j = 0; j + 1 < next.edges.size(); ++j)
      next.representatives.push_back(
          pick_representative(comp, next.edges[j], next.edges[j + 1]));
    ap = std::move(next);
  }
}

}  // namespace detail

struct PartitionOptions {
  std::int64_t refinement_draws = 10000;  // R_gamma sample for the marginal check
  std::int64_t refinement_max_proposals_factor = 1000;
};

/// Builds the support partition backing the moment-function dictionary: each
/// cell has CDF increment <= epsilon/8 on both axes; when `ref` is supplied
/// the cells are further bisected until the estimated R_gamma-marginal CDF
/// increments also fit the epsilon/8 budget.
inline SievePartition build_partition(const Marginal& x_marg, const Marginal& y_marg,
                                      double epsilon,
                                      const ReferenceMeasure* ref = nullptr,
                                      Rng* rng = nullptr,
                                      const PartitionOptions& opts = {}) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw InvalidArgument("build_partition: epsilon must lie in (0,1)");
  if (x_marg.dimension() != 1 || y_marg.dimension() != 1)
    throw InvalidArgument("build_partition: implemented for 1-D marginals");

  SievePartition p;
  p.epsilon = epsilon;
  p.x = detail::build_axis_cells(x_marg.component(0), epsilon, "X", p.warnings);
  p.y = detail::build_axis_cells(y_marg.component(0), epsilon, "Y", p.warnings);

  if (ref != nullptr) {
    if (rng == nullptr)
      throw InvalidArgument("build_partition: reference refinement needs an rng");
    p.check_reference_marginals = true;
    ReferenceSample s = sample_reference(
        *ref, opts.refinement_draws,
        opts.refinement_draws * opts.refinement_max_proposals_factor, *rng);
    std::vector<double> xs(s.x.size()), ys(s.y.size());
    for (std::size_t i = 0; i < s.x.size(); ++i) xs[i] = s.x[i][0];
    for (std::size_t i = 0; i < s.y.size(); ++i) ys[i] = s.y[i][0];
    detail::refine_axis_until(p.x, x_marg.component(0), xs, epsilon / 8.0, "X",
                              p.warnings);
    detail::refine_axis_until(p.y, y_marg.component(0), ys, epsilon / 8.0, "Y",
                              p.warnings);
  }

  p.n_x = p.x.cells();
  p.n_y = p.y.cells();
  p.n_total = p.n_x + p.n_y;
  if (p.n_total > detail::kPartitionCellCap)
    throw PartitionBudgetExceeded("build_partition: n_total exceeds 10^6 cells");
  // Cell-count bound in 1-D CDF-only mode (quantile cells are near-minimal).
  if (!p.check_reference_marginals &&
      x_marg.kind() == MarginalKind::uniform && y_marg.kind() == MarginalKind::uniform) {
    const std::int64_t cap = 2 * std::int64_t(std::ceil(8.0 / epsilon)) + 4;
    if (p.n_total > cap)
      throw NumericalError("partition-count",
                           "build_partition: n_total exceeds ceil(8/eps)*2 + 4");
  }
  return p;
}

enum class DictionaryKind { reduced_tau, general_alpha_mu };

/// The finite moment-function dictionary v_1..v_{n_total}: coordinate j < n_x
/// is F_X(x'_j) - 1[x <= x'_j], coordinate n_x + i is F_Y(y'_i) - 1[y <= y'_i].
/// Values always lie in [-1, 1]; sign flips live in the coefficients.
class SieveDictionary {
 public:
  SieveDictionary(SievePartition partition, DictionaryKind kind, double gamma,
                  double kappa_value, double cost_sup_norm, const Marginal& x_marg,
                  const Marginal& y_marg)
      : partition_(std::move(partition)),
        kind_(kind),
        kappa_(kappa_value),
        gamma_(gamma),
        sup_norm_(cost_sup_norm) {
    if (gamma <= 0 || kappa_value <= 0 || cost_sup_norm < 0)
      throw InvalidArgument("dictionary: gamma, kappa positive; sup_norm >= 0");
    scale_ = kind == DictionaryKind::reduced_tau ? gamma * cost_sup_norm
                                                 : gamma * kappa_value * cost_sup_norm;
    fx_.reserve(partition_.x.representatives.size());
    for (double r : partition_.x.representatives) fx_.push_back(x_marg.cdf1(r));
    fy_.reserve(partition_.y.representatives.size());
    for (double r : partition_.y.representatives) fy_.push_back(y_marg.cdf1(r));
  }

  const SievePartition& partition() const { return partition_; }
  DictionaryKind kind() const { return kind_; }
  double scale() const { return scale_; }
  double kappa() const { return kappa_; }
  double gamma() const { return gamma_; }
  double cost_sup_norm() const { return sup_norm_; }
  int size() const { return partition_.n_total; }

  /// Dictionary values at one sample point omega = (x, y).
  Vector evaluate(double x, double y) const {
    Vector v(size());
    const auto& xr = partition_.x.representatives;
    const auto& yr = partition_.y.representatives;
    for (std::size_t j = 0; j < xr.size(); ++j)
      v[Eigen::Index(j)] = fx_[j] - (x <= xr[j] ? 1.0 : 0.0);
    for (std::size_t i = 0; i < yr.size(); ++i)
      v[Eigen::Index(xr.size() + i)] = fy_[i] - (y <= yr[i] ? 1.0 : 0.0);
    return v;
  }

  /// N x n matrix of dictionary values at the sample.
  Matrix evaluate_rows(const std::vector<Vector>& xs, const std::vector<Vector>& ys) const {
    if (xs.size() != ys.size())
      throw InvalidArgument("dictionary: sample size mismatch");
    Matrix m(Eigen::Index(xs.size()), size());
    for (std::size_t r = 0; r < xs.size(); ++r)
      m.row(Eigen::Index(r)) = evaluate(xs[r][0], ys[r][0]).transpose();
    return m;
  }

  /// N x 2n matrix holding each v and -v (the four-family form).
  Matrix evaluate_rows_signed(const std::vector<Vector>& xs,
                              const std::vector<Vector>& ys) const {
    const Matrix base = evaluate_rows(xs, ys);
    Matrix m(base.rows(), 2 * base.cols());
    m.leftCols(base.cols()) = base;
    m.rightCols(base.cols()) = -base;
    return m;
  }

 private:
  SievePartition partition_;
  DictionaryKind kind_;
  double kappa_;
  double gamma_;
  double sup_norm_;
  double scale_;
  std::vector<double> fx_, fy_;
};

/// Sample size balancing the stochastic error sqrt(2 log n / N) against the
/// partition accuracy epsilon: N = 2 log(n) / eps^2, rounded up, except that
/// values within 0.01% of an integer from above snap down to it (the balance
/// is already met to within ceiling slack there).
inline std::int64_t optimal_sample_size(double epsilon, std::int64_t n_total) {
  if (n_total < 2) throw InvalidArgument("optimal_sample_size: n_total >= 2 required");
  if (epsilon <= 0) throw InvalidArgument("optimal_sample_size: epsilon must be positive");
  const double x = 2.0 * std::log(double(n_total)) / (epsilon * epsilon);
  const double f = std::floor(x);
  const std::int64_t n = (x - f) <= 1e-4 * x ? std::int64_t(f)
                                             : std::int64_t(std::ceil(x));
  return std::max<std::int64_t>(n, 1);
}

struct ScheduleLevel {
  double epsilon = 0;
  std::int64_t n_total = 0;
  std::int64_t sample_size = 0;
};

/// Finite-schedule surrogate for lim log(n)/N = 0: each level must not see
/// log(n)/N rise above the previous level's value.
inline std::vector<bool> entropy_condition_ok(const std::vector<ScheduleLevel>& schedule) {
  if (schedule.empty()) throw InvalidArgument("entropy_condition_ok: empty schedule");
  std::vector<bool> ok;
  ok.reserve(schedule.size());
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& level : schedule) {
    const double ratio = std::log(double(level.n_total)) / double(level.sample_size);
    ok.push_back(ratio <= prev);
    prev = ratio;
  }
  return ok;
}

}  // namespace eotsieve
