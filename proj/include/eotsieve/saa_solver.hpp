#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eotsieve/errors.hpp"
#include "eotsieve/numerics.hpp"
#include "eotsieve/projections.hpp"

namespace eotsieve {

struct SolveOptions {
  int max_iters = 20000;
  double tol = 1e-8;              // on the gradient-mapping norm
  double armijo_decrease = 1e-4;  // sufficient-decrease constant
  int max_backtracks = 60;
  std::string step_rule = "newton";  // "newton" (PGD warmup + face polish) | "pgd"
  std::string trace_path;            // optional per-iteration CSV dump
};

struct SaaSolution {
  Vector tau;    // reduced coordinates (empty in general mode)
  double alpha = 0;
  Vector mu;     // general coordinates (empty in reduced mode)
  double log_value_stabilized = 0;  // optimum of the log-stabilized objective
  double log_theta_hat = 0;         // log_value_stabilized + shift
  double shift = 0;
  int iterations = 0;
  double final_gradient_mapping_norm = 0;
  bool converged = false;
};

/// Stabilized reduced objective and gradient at tau:
///   value    = -shift + log((1/N) sum_j exp(scale * <tau, v(omega_j)> + offset_j))
///   gradient = scale * sum_j softmax_j * v(omega_j)
/// Rows of `dictionary_values` are the dictionary evaluations at the draws.
/// Offsets are zero when the draws come from R_gamma itself; the importance
/// form over product draws supplies -gamma*c_j - log a_gamma there.
inline std::pair<double, Vector> reduced_objective_and_gradient(
    const Vector& tau, const Matrix& dictionary_values, double scale, double shift,
    const Vector& offsets = Vector()) {
  if (!dictionary_values.allFinite())
    throw InvalidArgument("reduced_objective: non-finite dictionary entries");
  if (tau.size() != dictionary_values.cols())
    throw InvalidArgument("reduced_objective: tau size mismatch");
  if (offsets.size() != 0 && offsets.size() != dictionary_values.rows())
    throw InvalidArgument("reduced_objective: offsets size mismatch");
  Vector e = scale * (dictionary_values * tau);
  if (offsets.size() > 0) e += offsets;
  const double value = -shift + log_mean_exp(e);
  Vector w;
  softmax_into(e, w);
  Vector grad = scale * (dictionary_values.transpose() * w);
  return {value, std::move(grad)};
}

namespace detail {

struct TraceRow {
  int iter;
  double value;
  double gm_norm;
  double step;
};

inline void dump_trace(const std::string& path, const std::vector<TraceRow>& rows) {
  if (path.empty()) return;
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) return;
  std::fputs("iter,objective,gradient_mapping_norm,step\n", f);
  for (const auto& r : rows)
    std::fprintf(f, "%d,%.17g,%.17g,%.17g\n", r.iter, r.value, r.gm_norm, r.step);
  std::fclose(f);
}

/// Shared state for the reduced solve, with cached softmax weights.
struct ReducedProblem {
  const Matrix& values;
  double scale;
  double shift;
  Vector offsets;  // empty or per-sample exponent offsets
  ReducedFeasibleSet set;
  Vector weights_at_cache;  // softmax weights memo for the Newton Hessian

  double value_at(const Vector& tau) const {
    Vector e = scale * (values * tau);
    if (offsets.size() > 0) e += offsets;
    return -shift + log_mean_exp(e);
  }
  std::pair<double, Vector> value_grad_at(const Vector& tau) const {
    return reduced_objective_and_gradient(tau, values, scale, shift, offsets);
  }
  /// Softmax weights at tau (for the Hessian).
  Vector weights_at(const Vector& tau) const {
    Vector e = scale * (values * tau);
    if (offsets.size() > 0) e += offsets;
    Vector w;
    softmax_into(e, w);
    return w;
  }
  Vector project(const Vector& p) const { return project_reduced(p, set); }
  double ref_step() const {
    return scale > 0 ? 1.0 / (scale * scale) : 1.0;
  }
  /// Reference-step gradient mapping norm; zero exactly at stationary points.
  double gm_norm(const Vector& tau, const Vector& grad) const {
    const double t = ref_step();
    return (tau - project(tau - t * grad)).norm() / t;
  }
};

/// One Armijo-backtracked projected step along direction d (gradient or
/// Newton). Returns true when a decreasing step was accepted.
inline bool armijo_projected_step(const ReducedProblem& prob, Vector& tau, double& f,
                                  Vector& g, const Vector& d, double t0,
                                  double armijo_c, int max_backtracks) {
  double t = t0;
  // Floating-point noise floor: near the optimum the true decrease drops
  // below the resolution of the objective, so exact ties are acceptable.
  const double noise = 1e-15 * (1.0 + std::abs(f));
  for (int bt = 0; bt < max_backtracks; ++bt) {
    const Vector cand = prob.project(tau + t * d);
    const Vector step = cand - tau;
    const double fc = prob.value_at(cand);
    if (fc <= f + armijo_c * g.dot(step) + noise && fc <= f + noise) {
      tau = cand;
      std::tie(f, g) = prob.value_grad_at(tau);
      return true;
    }
    t *= 0.5;
    if (t < 1e-18) break;
  }
  return false;
}

/// Solves the face-restricted Newton system: min 1/2 d'Hd + g'd over the free
/// coordinates, with a'd = 0 when an equality face is active. Returns the
/// direction in full coordinates and the equality multiplier.
inline bool solve_face_system(const ReducedProblem& prob, const Vector& g,
                              const std::vector<Eigen::Index>& free_idx,
                              const Vector& face_normal, bool equality_active,
                              Vector& direction, double& nu) {
  const Eigen::Index m = Eigen::Index(free_idx.size());
  if (m == 0) return false;
  const Vector w = prob.weights_at_cache;
  Matrix vf(prob.values.rows(), m);
  for (Eigen::Index k = 0; k < m; ++k) vf.col(k) = prob.values.col(free_idx[std::size_t(k)]);
  const Vector vw = vf.transpose() * w;
  Matrix h = prob.scale * prob.scale *
             (vf.transpose() * w.asDiagonal() * vf - vw * vw.transpose());
  const double ridge = 1e-12 * h.diagonal().maxCoeff() + 1e-300;
  h.diagonal().array() += ridge;

  Vector gf(m), af(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    gf[k] = g[free_idx[std::size_t(k)]];
    af[k] = face_normal[free_idx[std::size_t(k)]];
  }

  Vector df(m);
  nu = 0;
  if (equality_active) {
    Matrix kkt = Matrix::Zero(m + 1, m + 1);
    kkt.topLeftCorner(m, m) = h;
    kkt.topRightCorner(m, 1) = af;
    kkt.bottomLeftCorner(1, m) = af.transpose();
    Vector rhs = Vector::Zero(m + 1);
    rhs.head(m) = -gf;
    Eigen::LDLT<Matrix> ldlt(kkt);
    if (ldlt.info() != Eigen::Success) return false;
    const Vector sol = ldlt.solve(rhs);
    df = sol.head(m);
    nu = sol[m];
  } else {
    Eigen::LDLT<Matrix> ldlt(h);
    if (ldlt.info() != Eigen::Success) return false;
    df = ldlt.solve(-gf);
  }
  if (!df.allFinite()) return false;
  direction = Vector::Zero(g.size());
  for (Eigen::Index k = 0; k < m; ++k) direction[free_idx[std::size_t(k)]] = df[k];
  return true;
}

/// Two-metric Newton direction on the active face. Coordinates pinned at zero
/// on an active l1 face are first frozen; after the face solve, zeros whose
/// gradient beats the face multiplier are released (with the profitable sign)
/// and the system is re-solved once.
inline bool face_newton_direction(ReducedProblem& prob, const Vector& tau,
                                  const Vector& g, Vector& direction) {
  const Eigen::Index n = tau.size();
  const double box_tol = 1e-12, zero_tol = 1e-14;
  prob.weights_at_cache = prob.weights_at(tau);

  std::vector<Eigen::Index> free_idx;
  Vector face_normal = Vector::Zero(n);
  bool equality_active = false;
  double nu = 0;

  if (prob.set.strict_l1) {
    const double l1 = tau.cwiseAbs().sum();
    equality_active = l1 >= prob.set.l1_bound * (1.0 - 1e-12);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(tau[i]) >= prob.set.box_hi - box_tol) continue;  // box face
      if (equality_active && std::abs(tau[i]) <= zero_tol) continue;
      free_idx.push_back(i);
      face_normal[i] = tau[i] >= 0 ? 1.0 : -1.0;
    }
    if (!solve_face_system(prob, g, free_idx, face_normal, equality_active, direction, nu))
      return false;
    if (equality_active) {
      // Release zeros that profit against the face multiplier.
      bool released = false;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(tau[i]) > zero_tol) continue;
        if (std::abs(g[i]) > nu + 1e-12 * (1.0 + std::abs(nu))) {
          free_idx.push_back(i);
          face_normal[i] = g[i] > 0 ? -1.0 : 1.0;
          released = true;
        }
      }
      if (released &&
          !solve_face_system(prob, g, free_idx, face_normal, true, direction, nu))
        return false;
    }
    return true;
  }

  const double s = tau.sum();
  equality_active = s >= prob.set.sum_hi - 1e-12 || s <= prob.set.sum_lo + 1e-12;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (tau[i] <= prob.set.box_lo + box_tol || tau[i] >= prob.set.box_hi - box_tol)
      continue;
    free_idx.push_back(i);
    face_normal[i] = 1.0;
  }
  return solve_face_system(prob, g, free_idx, face_normal, equality_active, direction, nu);
}

struct ReducedSolveResult {
  Vector tau;
  double value = 0;
  int iterations = 0;
  double gm_norm = 0;
  bool converged = false;
};

/// BB projected gradient with Armijo, optionally interleaved with active-face
/// Newton steps once warm. Accepted iterates are nonincreasing in objective.
inline ReducedSolveResult solve_reduced_program(ReducedProblem& prob,
                                                const SolveOptions& opts) {
  std::vector<TraceRow> trace;
  Vector tau = prob.project(Vector::Zero(prob.set.n));
  auto [f, g] = prob.value_grad_at(tau);
  Vector best_tau = tau;
  double best_f = f;

  const double step0 = prob.ref_step();
  Vector prev_tau, prev_g;
  bool have_prev = false;
  const bool use_newton = opts.step_rule != "pgd";
  const int warmup = use_newton ? std::min(100, opts.max_iters) : opts.max_iters;

  ReducedSolveResult out;
  int iter = 0;
  double gm = prob.gm_norm(tau, g);
  for (; iter < opts.max_iters && gm > opts.tol; ++iter) {
    bool moved = false;
    if (use_newton && iter >= warmup && iter % 2 == 1) {
      Vector d;
      if (face_newton_direction(prob, tau, g, d) && d.norm() > 0)
        moved = armijo_projected_step(prob, tau, f, g, d, 1.0, opts.armijo_decrease,
                                      opts.max_backtracks);
    }
    if (!moved) {
      double t = step0;
      if (have_prev) {
        const Vector s = tau - prev_tau;
        const Vector y = g - prev_g;
        const double sy = s.dot(y);
        if (sy > 0) t = std::clamp(s.dot(s) / sy, 1e-18, 1e12);
      }
      prev_tau = tau;
      prev_g = g;
      moved = armijo_projected_step(prob, tau, f, g, -g, t, opts.armijo_decrease,
                                    opts.max_backtracks);
      have_prev = moved;
    }
    if (f < best_f) {
      best_f = f;
      best_tau = tau;
    }
    gm = prob.gm_norm(tau, g);
    if (!opts.trace_path.empty()) trace.push_back({iter, f, gm, 0.0});
    if (!moved) break;  // floating-point resolution reached
  }

  out.tau = best_f < f ? best_tau : tau;
  out.value = std::min(best_f, f);
  out.iterations = iter;
  out.gm_norm = gm;
  out.converged = gm <= opts.tol;
  dump_trace(opts.trace_path, trace);
  return out;
}

}  // namespace detail

/// Solves the log-stabilized reduced SAA program over the l1-capped box
/// {tau in [-1,1]^n, sum|tau_i| <= kappa} (default) or the verbatim slab set
/// {sum(tau) in [-1,1]}, by projected descent from tau = 0 with an
/// active-face Newton polish.
inline SaaSolution solve_reduced(const Matrix& dictionary_values, double scale,
                                 double shift, const SolveOptions& opts = {},
                                 bool strict_l1 = true, double kappa_value = 1.0,
                                 const Vector& offsets = Vector()) {
  if (dictionary_values.rows() < 1 || dictionary_values.cols() < 1)
    throw InvalidArgument("solve_reduced: need N >= 1 and n >= 1");
  if (!dictionary_values.allFinite())
    throw InvalidArgument("solve_reduced: non-finite dictionary entries");

  detail::ReducedProblem prob{dictionary_values, scale, shift, offsets, {}};
  prob.set.n = int(dictionary_values.cols());
  prob.set.strict_l1 = strict_l1;
  prob.set.l1_bound = kappa_value;

  detail::ReducedSolveResult r = detail::solve_reduced_program(prob, opts);

  SaaSolution sol;
  sol.tau = r.tau;
  sol.log_value_stabilized = r.value;
  sol.shift = shift;
  sol.log_theta_hat = r.value + shift;
  sol.iterations = r.iterations;
  sol.final_gradient_mapping_norm = r.gm_norm;
  sol.converged = r.converged;
  return sol;
}

/// Solves the general SAA program min log((1/N) sum_j exp(alpha <mu, v_j>))
/// over alpha in [0, gamma*kappa*||c||_inf] and mu in the simplex, by
/// projected gradient with interval clipping of alpha and sorted-threshold
/// simplex projection of mu. The signed dictionary holds each v and -v.
inline SaaSolution solve_general(const Matrix& dictionary_values_signed, double gamma,
                                 double kappa_value, double sup_norm,
                                 const SolveOptions& opts = {},
                                 const Vector& offsets = Vector()) {
  if (dictionary_values_signed.rows() < 1 || dictionary_values_signed.cols() < 1)
    throw InvalidArgument("solve_general: need N >= 1 and n >= 1");
  if (!dictionary_values_signed.allFinite())
    throw InvalidArgument("solve_general: non-finite dictionary entries");
  if (gamma <= 0 || kappa_value <= 0 || sup_norm < 0)
    throw InvalidArgument("solve_general: bad gamma/kappa/sup_norm");
  if (offsets.size() != 0 && offsets.size() != dictionary_values_signed.rows())
    throw InvalidArgument("solve_general: offsets size mismatch");

  const Eigen::Index m = dictionary_values_signed.cols();
  const double alpha_max = gamma * kappa_value * sup_norm;
  const double shift = alpha_max;

  // Coordinates: u = [alpha/alpha_max; mu]; alpha is rescaled to [0,1] so the
  // two blocks share a comparable gradient scale.
  auto unpack = [&](const Vector& u) {
    const double alpha = alpha_max > 0 ? u[0] * alpha_max : 0.0;
    return std::make_pair(alpha, u.tail(m));
  };
  auto exponents_at = [&](const Vector& u) {
    auto [alpha, mu] = unpack(u);
    Vector e = alpha * (dictionary_values_signed * mu);
    if (offsets.size() > 0) e += offsets;
    return e;
  };
  auto value_at = [&](const Vector& u) { return -shift + log_mean_exp(exponents_at(u)); };
  auto value_grad_at = [&](const Vector& u) {
    auto [alpha, mu] = unpack(u);
    const Vector s = dictionary_values_signed * mu;
    Vector e = alpha * s;
    if (offsets.size() > 0) e += offsets;
    const double value = -shift + log_mean_exp(e);
    Vector w;
    softmax_into(e, w);
    Vector grad(1 + m);
    grad[0] = alpha_max * w.dot(s);
    grad.tail(m) = alpha * (dictionary_values_signed.transpose() * w);
    return std::make_pair(value, std::move(grad));
  };
  auto project = [&](const Vector& u) {
    Vector out(1 + m);
    out[0] = std::clamp(u[0], 0.0, 1.0);
    out.tail(m) = project_simplex(u.tail(m));
    return out;
  };
  const double ref_scale = alpha_max > 0 ? alpha_max : 1.0;
  auto gm_norm = [&](const Vector& u, const Vector& g) {
    const double t = 1.0 / (ref_scale * ref_scale);
    return (u - project(u - t * g)).norm() / t;
  };

  Vector u(1 + m);
  u[0] = 0.5;
  u.tail(m).setConstant(1.0 / double(m));
  auto [f, g] = value_grad_at(u);
  Vector best_u = u;
  double best_f = f;
  Vector prev_u, prev_g;
  bool have_prev = false;

  int iter = 0;
  double gm = gm_norm(u, g);
  for (; iter < opts.max_iters && gm > opts.tol; ++iter) {
    double t = have_prev ? 0.0 : 1.0 / (ref_scale * ref_scale);
    if (have_prev) {
      const Vector s = u - prev_u;
      const Vector y = g - prev_g;
      const double sy = s.dot(y);
      t = sy > 0 ? std::clamp(s.dot(s) / sy, 1e-18, 1e12) : 1.0 / (ref_scale * ref_scale);
    }
    bool moved = false;
    const double noise = 1e-15 * (1.0 + std::abs(f));
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      const Vector cand = project(u - t * g);
      const double fc = value_at(cand);
      if (fc <= f + opts.armijo_decrease * g.dot(cand - u) + noise && fc <= f + noise) {
        prev_u = u;
        prev_g = g;
        have_prev = true;
        u = cand;
        std::tie(f, g) = value_grad_at(u);
        moved = true;
        break;
      }
      t *= 0.5;
      if (t < 1e-18) break;
    }
    if (f < best_f) {
      best_f = f;
      best_u = u;
    }
    gm = gm_norm(u, g);
    if (!moved) break;
  }
  if (best_f < f) {
    u = best_u;
    f = best_f;
  }

  SaaSolution sol;
  auto [alpha, mu] = unpack(u);
  sol.alpha = alpha;
  sol.mu = mu;
  sol.log_value_stabilized = f;
  sol.shift = shift;
  sol.log_theta_hat = f + shift;
  sol.iterations = iter;
  sol.final_gradient_mapping_norm = gm;
  sol.converged = gm <= opts.tol;
  return sol;
}

/// Maps a general-mode solution into reduced tau coordinates on the unsigned
/// dictionary: tau_k = alpha (mu_k - mu_{n+k}) / (gamma*||c||_inf).
inline Vector general_to_reduced_tau(const SaaSolution& sol, double gamma,
                                     double sup_norm) {
  if (sol.mu.size() == 0 || sol.mu.size() % 2 != 0)
    throw InvalidArgument("general_to_reduced_tau: not a general-mode solution");
  const Eigen::Index n = sol.mu.size() / 2;
  const double denom = gamma * sup_norm;
  Vector tau(n);
  for (Eigen::Index k = 0; k < n; ++k)
    tau[k] = denom > 0 ? sol.alpha * (sol.mu[k] - sol.mu[n + k]) / denom : 0.0;
  return tau;
}

}  // namespace eotsieve
