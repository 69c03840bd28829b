#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "eotsieve/cost.hpp"
#include "eotsieve/errors.hpp"
#include "eotsieve/marginal.hpp"
#include "eotsieve/numerics.hpp"

namespace eotsieve {

/// Finite EOT instance: atoms carry weights on each side, entropic
/// regularization 1/gamma against the product of the weight vectors.
struct DiscreteEotProblem {
  Vector x_weights;
  Vector y_weights;
  Matrix cost;  // nx x ny, nonnegative
  double gamma = 0;

  DiscreteEotProblem(Vector xw, Vector yw, Matrix c, double gamma_in)
      : x_weights(std::move(xw)),
        y_weights(std::move(yw)),
        cost(std::move(c)),
        gamma(gamma_in) {
    if (gamma <= 0) throw InvalidArgument("discrete EOT: gamma must be positive");
    if (cost.rows() != x_weights.size() || cost.cols() != y_weights.size())
      throw InvalidArgument("discrete EOT: cost/weights shape mismatch");
    if ((x_weights.array() < 0).any() || (y_weights.array() < 0).any())
      throw InvalidArgument("discrete EOT: negative weights");
    if (std::abs(x_weights.sum() - 1.0) > 1e-12 || std::abs(y_weights.sum() - 1.0) > 1e-12)
      throw InvalidArgument("discrete EOT: weights must sum to 1 within 1e-12");
    if ((cost.array() < 0).any())
      throw InvalidArgument("discrete EOT: negative cost entries");
  }
};

struct SinkhornResult {
  Vector f, g;  // log-domain potentials
  double reg_value = 0;          // transport cost + KL(plan | product)/gamma
  double marginal_residual = 0;  // max |row/col plan mass - weight|
  int iterations = 0;
  bool converged = false;
};

struct SinkhornOptions {
  double tol = 1e-9;
  int max_iters = 100000;
};

/// Log-domain Sinkhorn: alternating soft-min updates of the potentials until
/// the plan's marginals match the weights within tol. No kernel-matrix
/// scaling anywhere, so large gamma cannot underflow.
inline SinkhornResult sinkhorn(const DiscreteEotProblem& p, const SinkhornOptions& opts = {}) {
  if (opts.tol <= 0) throw InvalidArgument("sinkhorn: tol must be positive");
  const Eigen::Index nx = p.x_weights.size(), ny = p.y_weights.size();
  const double gamma = p.gamma;

  Vector la(nx), lb(ny);
  for (Eigen::Index i = 0; i < nx; ++i) la[i] = std::log(p.x_weights[i]);
  for (Eigen::Index j = 0; j < ny; ++j) lb[j] = std::log(p.y_weights[j]);

  // Row-major copy for contiguous row scans; gC(i,j) = gamma*C(i,j).
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> gc_rows =
      gamma * p.cost;
  Matrix gc_cols = gamma * p.cost;  // column-major for the column scans

  SinkhornResult r;
  r.f = Vector::Zero(nx);
  r.g = Vector::Zero(ny);
  Vector t(ny), s(nx);
  double residual = std::numeric_limits<double>::infinity();

  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    // f-update: f_i = -(1/gamma) * LSE_j(lb_j + gamma*g_j - gamma*C_ij).
    for (Eigen::Index j = 0; j < ny; ++j) t[j] = lb[j] + gamma * r.g[j];
    for (Eigen::Index i = 0; i < nx; ++i) {
      const double* row = gc_rows.data() + i * ny;
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < ny; ++j) m = std::max(m, t[j] - row[j]);
      double acc = 0;
      for (Eigen::Index j = 0; j < ny; ++j) acc += std::exp(t[j] - row[j] - m);
      r.f[i] = -(m + std::log(acc)) / gamma;
    }
    // Column pass: measure the residual against the current g first (the row
    // constraint holds exactly right after the f-update), and only update g
    // when not yet converged, so the returned pair has exact rows and a
    // column residual equal to the reported one.
    for (Eigen::Index i = 0; i < nx; ++i) s[i] = la[i] + gamma * r.f[i];
    residual = 0;
    Vector lse(ny);
    for (Eigen::Index j = 0; j < ny; ++j) {
      const double* col = gc_cols.data() + j * nx;
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < nx; ++i) m = std::max(m, s[i] - col[i]);
      double acc = 0;
      for (Eigen::Index i = 0; i < nx; ++i) acc += std::exp(s[i] - col[i] - m);
      lse[j] = m + std::log(acc);
      const double col_mass = std::exp(lb[j] + gamma * r.g[j] + lse[j]);
      residual = std::max(residual, std::abs(col_mass - p.y_weights[j]));
    }
    if (residual <= opts.tol) {
      ++iter;
      break;
    }
    for (Eigen::Index j = 0; j < ny; ++j) r.g[j] = -lse[j] / gamma;
  }
  r.iterations = iter;
  r.marginal_residual = residual;
  r.converged = residual <= opts.tol;

  // reg_value from the converged plan: sum pi*C + gamma^-1 sum pi*log(pi/(ab)),
  // with 0*log0 = 0 (vanished entries contribute nothing).
  double cost_term = 0, kl_term = 0;
  for (Eigen::Index i = 0; i < nx; ++i) {
    const double* row = gc_rows.data() + i * ny;
    for (Eigen::Index j = 0; j < ny; ++j) {
      const double log_ratio = gamma * (r.f[i] + r.g[j]) - row[j];
      const double pi = std::exp(la[i] + lb[j] + log_ratio);
      cost_term += pi * row[j] / gamma;
      kl_term += pi * log_ratio;
    }
  }
  r.reg_value = cost_term + kl_term / gamma;
  return r;
}

/// Materializes the transport plan pi_ij = a_i b_j exp(gamma(f_i+g_j-C_ij)).
inline Matrix sinkhorn_plan(const DiscreteEotProblem& p, const SinkhornResult& r) {
  Matrix plan(p.x_weights.size(), p.y_weights.size());
  for (Eigen::Index i = 0; i < plan.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.cols(); ++j)
      plan(i, j) = std::exp(std::log(p.x_weights[i]) + std::log(p.y_weights[j]) +
                            p.gamma * (r.f[i] + r.g[j] - p.cost(i, j)));
  return plan;
}

/// The empirical Sinkhorn divergence: EOT value of the two samples with
/// uniform weights. Throws on non-convergence since there is no flag channel.
inline double empirical_sinkhorn_value(const std::vector<Vector>& x_samples,
                                       const std::vector<Vector>& y_samples,
                                       const CostFunction& cost, double gamma,
                                       const SinkhornOptions& opts = {}) {
  if (x_samples.empty() || y_samples.empty())
    throw InvalidArgument("empirical_sinkhorn_value: empty sample");
  const Eigen::Index nx = Eigen::Index(x_samples.size());
  const Eigen::Index ny = Eigen::Index(y_samples.size());
  Matrix c(nx, ny);
  for (Eigen::Index i = 0; i < nx; ++i)
    for (Eigen::Index j = 0; j < ny; ++j)
      c(i, j) = cost(x_samples[std::size_t(i)], y_samples[std::size_t(j)]);
  DiscreteEotProblem p(Vector::Constant(nx, 1.0 / double(nx)),
                       Vector::Constant(ny, 1.0 / double(ny)), std::move(c), gamma);
  SinkhornResult r = sinkhorn(p, opts);
  if (!r.converged)
    throw NumericalError("sinkhorn-unconverged",
                         "empirical_sinkhorn_value: residual " +
                             std::to_string(r.marginal_residual) + " after " +
                             std::to_string(r.iterations) + " iterations");
  return r.reg_value;
}

}  // namespace eotsieve
