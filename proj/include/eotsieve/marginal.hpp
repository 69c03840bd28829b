#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "eotsieve/errors.hpp"
#include "eotsieve/numerics.hpp"
#include "eotsieve/random.hpp"

namespace eotsieve {

enum class MarginalKind { uniform, discrete, empirical, custom };

inline const char* to_string(MarginalKind k) {
  switch (k) {
    case MarginalKind::uniform: return "uniform";
    case MarginalKind::discrete: return "discrete";
    case MarginalKind::empirical: return "empirical";
    case MarginalKind::custom: return "custom";
  }
  return "?";
}

/// One-dimensional compactly supported law: closed-form CDF/quantile/sampler
/// for the built-in kinds, user callbacks for the custom kind.
class Component {
 public:
  static Component uniform(double lo, double hi) {
    if (!(lo <= hi)) throw InvalidArgument("uniform: need lo <= hi");
    Component c;
    c.kind_ = MarginalKind::uniform;
    c.lo_ = lo;
    c.hi_ = hi;
    return c;
  }

  static Component discrete(std::vector<double> atoms, std::vector<double> weights) {
    if (atoms.empty() || atoms.size() != weights.size())
      throw InvalidArgument("discrete: atoms/weights size mismatch or empty");
    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return atoms[a] < atoms[b]; });
    Component c;
    c.kind_ = MarginalKind::discrete;
    double total = 0;
    for (std::size_t i : order) {
      if (weights[i] < 0) throw InvalidArgument("discrete: negative weight");
      c.atoms_.push_back(atoms[i]);
      total += weights[i];
      c.weights_.push_back(weights[i]);
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw InvalidArgument("discrete: weights must sum to 1");
    c.cum_.resize(c.weights_.size());
    std::partial_sum(c.weights_.begin(), c.weights_.end(), c.cum_.begin());
    c.cum_.back() = 1.0;
    c.lo_ = c.atoms_.front();
    c.hi_ = c.atoms_.back();
    return c;
  }

  static Component empirical(std::vector<double> atoms) {
    if (atoms.empty()) throw InvalidArgument("empirical: no atoms");
    std::vector<double> w(atoms.size(), 1.0 / double(atoms.size()));
    Component c = discrete(std::move(atoms), std::move(w));
    c.kind_ = MarginalKind::empirical;
    return c;
  }

  /// User-supplied law. `quantile` may be empty: it is then computed by
  /// bisection on the CDF. `atom_at_lo` is the mass of the point {lo}.
  static Component custom(double lo, double hi,
                          std::function<double(double)> cdf,
                          std::function<double(Rng&)> sampler,
                          std::function<double(double)> quantile = {},
                          double atom_at_lo = 0.0) {
    if (!(lo <= hi)) throw InvalidArgument("custom: need lo <= hi");
    if (!cdf || !sampler) throw InvalidArgument("custom: cdf and sampler required");
    Component c;
    c.kind_ = MarginalKind::custom;
    c.lo_ = lo;
    c.hi_ = hi;
    c.cdf_fn_ = std::move(cdf);
    c.sampler_fn_ = std::move(sampler);
    c.quantile_fn_ = std::move(quantile);
    c.atom_at_lo_ = atom_at_lo;
    return c;
  }

  MarginalKind kind() const { return kind_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

  double cdf(double x) const {
    switch (kind_) {
      case MarginalKind::uniform:
        if (x < lo_) return 0.0;
        if (x >= hi_) return 1.0;
        return hi_ == lo_ ? 1.0 : (x - lo_) / (hi_ - lo_);
      case MarginalKind::discrete:
      case MarginalKind::empirical: {
        // Mass of atoms <= x.
        auto it = std::upper_bound(atoms_.begin(), atoms_.end(), x);
        if (it == atoms_.begin()) return 0.0;
        return cum_[std::size_t(it - atoms_.begin()) - 1];
      }
      case MarginalKind::custom:
        if (x < lo_) return 0.0;
        if (x >= hi_) return 1.0;
        return cdf_fn_(x);
    }
    return 0.0;
  }

  /// Generalized inverse CDF: smallest in-support x with F(x) >= u.
  double quantile(double u) const {
    u = std::clamp(u, 0.0, 1.0);
    switch (kind_) {
      case MarginalKind::uniform:
        return lo_ + u * (hi_ - lo_);
      case MarginalKind::discrete:
      case MarginalKind::empirical: {
        auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
        if (it == cum_.end()) return atoms_.back();
        return atoms_[std::size_t(it - cum_.begin())];
      }
      case MarginalKind::custom: {
        if (quantile_fn_) return quantile_fn_(u);
        double a = lo_, b = hi_;
        for (int i = 0; i < 200 && b - a > 0; ++i) {
          const double m = 0.5 * (a + b);
          if (cdf(m) >= u)
            b = m;
          else
            a = m;
        }
        return b;
      }
    }
    return lo_;
  }

  double sample(Rng& rng) const {
    switch (kind_) {
      case MarginalKind::uniform:
        return lo_ + (hi_ - lo_) * rng.uniform01();
      case MarginalKind::discrete:
      case MarginalKind::empirical:
        return quantile(rng.uniform01());
      case MarginalKind::custom:
        return sampler_fn_(rng);
    }
    return lo_;
  }

  /// Mass of the single point {x}; zero for continuous kinds.
  double atom_mass(double x) const {
    switch (kind_) {
      case MarginalKind::uniform:
        return hi_ == lo_ ? 1.0 : 0.0;
      case MarginalKind::discrete:
      case MarginalKind::empirical: {
        auto it = std::lower_bound(atoms_.begin(), atoms_.end(), x);
        if (it != atoms_.end() && *it == x)
          return weights_[std::size_t(it - atoms_.begin())];
        return 0.0;
      }
      case MarginalKind::custom:
        return x == lo_ ? atom_at_lo_ : 0.0;
    }
    return 0.0;
  }

  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  MarginalKind kind_ = MarginalKind::uniform;
  double lo_ = 0, hi_ = 1;
  std::vector<double> atoms_, weights_, cum_;
  std::function<double(double)> cdf_fn_;
  std::function<double(Rng&)> sampler_fn_;
  std::function<double(double)> quantile_fn_;
  double atom_at_lo_ = 0.0;
};

/// Compactly supported marginal distribution: a product of independent 1-D
/// components. All built-ins are one-dimensional; product() composes them.
class Marginal {
 public:
  static Marginal uniform(double lo, double hi) {
    return Marginal({Component::uniform(lo, hi)});
  }
  static Marginal discrete(std::vector<double> atoms, std::vector<double> weights) {
    return Marginal({Component::discrete(std::move(atoms), std::move(weights))});
  }
  static Marginal point_mass(double x) { return discrete({x}, {1.0}); }
  static Marginal empirical(std::vector<double> atoms) {
    return Marginal({Component::empirical(std::move(atoms))});
  }
  static Marginal custom(Component c) { return Marginal({std::move(c)}); }
  static Marginal product(std::vector<Component> components) {
    return Marginal(std::move(components));
  }

  int dimension() const { return int(components_.size()); }
  const Component& component(int i) const { return components_[std::size_t(i)]; }

  /// Joint CDF F(point) = prod_i F_i(point_i).
  double cdf(const Vector& point) const {
    check_dim(point);
    double p = 1.0;
    for (int i = 0; i < dimension(); ++i) p *= components_[std::size_t(i)].cdf(point[i]);
    return p;
  }

  double cdf1(double x) const {
    require_1d();
    return components_[0].cdf(x);
  }

  double quantile1(double u) const {
    require_1d();
    return components_[0].quantile(u);
  }

  Vector support_lo() const {
    Vector v(dimension());
    for (int i = 0; i < dimension(); ++i) v[i] = components_[std::size_t(i)].lo();
    return v;
  }
  Vector support_hi() const {
    Vector v(dimension());
    for (int i = 0; i < dimension(); ++i) v[i] = components_[std::size_t(i)].hi();
    return v;
  }

  Vector sample_point(Rng& rng) const {
    Vector v(dimension());
    for (int i = 0; i < dimension(); ++i) v[i] = components_[std::size_t(i)].sample(rng);
    return v;
  }

  std::vector<Vector> sample(std::int64_t count, Rng& rng) const {
    if (count < 0) throw InvalidArgument("sample: negative count");
    std::vector<Vector> out;
    out.reserve(std::size_t(count));
    for (std::int64_t i = 0; i < count; ++i) out.push_back(sample_point(rng));
    return out;
  }

  /// P({support infimum}); the kappa formula evaluates F at inf X this way.
  double atom_mass_at_infimum() const {
    double p = 1.0;
    for (const auto& c : components_) p *= c.atom_mass(c.lo());
    return p;
  }

  MarginalKind kind() const { return components_[0].kind(); }

 private:
  explicit Marginal(std::vector<Component> components)
      : components_(std::move(components)) {
    if (components_.empty()) throw InvalidArgument("marginal: no components");
  }

  void check_dim(const Vector& point) const {
    if (point.size() != dimension())
      throw InvalidArgument("marginal: point dimension mismatch");
  }
  void require_1d() const {
    if (dimension() != 1) throw InvalidArgument("marginal: operation requires d = 1");
  }

  std::vector<Component> components_;
};

}  // namespace eotsieve
