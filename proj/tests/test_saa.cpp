#include "eotsieve/saa_solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "eotsieve/reference_measure.hpp"
#include "eotsieve/sieve.hpp"
#include "oracle_helpers.hpp"

using namespace eotsieve;

namespace {

Matrix random_dictionary(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

ReducedFeasibleSet slab_set(int n) {
  ReducedFeasibleSet s;
  s.n = n;
  return s;
}

TEST(ReducedObjective, TauZeroAndSingleSample) {
  Rng rng(1);
  const Matrix values = random_dictionary(rng, 12, 5);
  const double scale = 3.0, shift = 7.0;
  auto [f0, g0] = reduced_objective_and_gradient(Vector::Zero(5), values, scale, shift);
  EXPECT_NEAR(f0, -shift, 1e-14);
  const Vector expected_g0 = scale * values.colwise().mean().transpose();
  EXPECT_LT((g0 - expected_g0).cwiseAbs().maxCoeff(), 1e-13);

  const Matrix one_row = values.topRows(1);
  Vector tau(5);
  tau << 0.2, -0.3, 0.1, 0.0, 0.4;
  auto [f1, g1] = reduced_objective_and_gradient(tau, one_row, scale, shift);
  EXPECT_NEAR(f1, -shift + scale * one_row.row(0).dot(tau), 1e-13);
  EXPECT_LT((g1 - scale * one_row.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-13);

  Matrix bad = values;
  bad(3, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(reduced_objective_and_gradient(tau, bad, scale, shift), InvalidArgument);
}

TEST(ReducedObjective, GradientMatchesCentralDifferences) {
  Rng rng(2);
  for (int instance = 0; instance < 100; ++instance) {
    const int n = 2 + int(rng.uniform_index(11));
    const int rows = 5 + int(rng.uniform_index(76));
    const Matrix values = random_dictionary(rng, rows, n);
    const double scale = rng.uniform(0.5, 4.0);
    const double shift = scale * rng.uniform(0.5, 2.0);
    const Vector tau = slab_set(n).sample_uniform(rng);
    auto [f, grad] = reduced_objective_and_gradient(tau, values, scale, shift);
    const double h = 1e-6;
    for (int i = 0; i < n; ++i) {
      Vector tp = tau, tm = tau;
      tp[i] += h;
      tm[i] -= h;
      const double fp = reduced_objective_and_gradient(tp, values, scale, shift).first;
      const double fm = reduced_objective_and_gradient(tm, values, scale, shift).first;
      const double fd = (fp - fm) / (2 * h);
      EXPECT_LE(std::abs(fd - grad[i]), 1e-5 * (1.0 + std::abs(grad[i])))
          << "instance " << instance << " coord " << i;
    }
  }
}

TEST(ReducedObjective, ConvexityOnRandomTriples) {
  Rng rng(3);
  const Matrix values = random_dictionary(rng, 40, 6);
  const double scale = 2.5, shift = 5.0;
  auto f = [&](const Vector& t) {
    return reduced_objective_and_gradient(t, values, scale, shift).first;
  };
  for (int trial = 0; trial < 100; ++trial) {
    const Vector t1 = slab_set(6).sample_uniform(rng);
    const Vector t2 = slab_set(6).sample_uniform(rng);
    const double lam = rng.uniform01();
    const Vector mid = lam * t1 + (1 - lam) * t2;
    EXPECT_LE(f(mid), lam * f(t1) + (1 - lam) * f(t2) + 1e-12);
  }
}

TEST(ProjectReduced, Examples) {
  ReducedFeasibleSet set = slab_set(4);
  Vector feasible(4);
  feasible << 0.2, -0.1, 0.3, 0.1;
  EXPECT_LT((project_reduced(feasible, set) - feasible).norm(), 1e-15);

  const Vector ones = Vector::Ones(4);
  const Vector p1 = project_reduced(ones, set);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p1[i], 0.25, 1e-12);
  EXPECT_NEAR(p1.sum(), 1.0, 1e-12);

  ReducedFeasibleSet set2 = slab_set(2);
  Vector p(2);
  p << 2.0, -2.0;
  const Vector p2 = project_reduced(p, set2);
  EXPECT_DOUBLE_EQ(p2[0], 1.0);
  EXPECT_DOUBLE_EQ(p2[1], -1.0);

  Vector bad(2);
  bad << 1.0, std::numeric_limits<double>::infinity();
  EXPECT_THROW(project_reduced(bad, set2), InvalidArgument);
}

TEST(ProjectReduced, IdempotentAndFeasible) {
  Rng rng(5);
  ReducedFeasibleSet set = slab_set(10);
  for (int trial = 0; trial < 300; ++trial) {
    Vector p(10);
    for (int i = 0; i < 10; ++i) p[i] = rng.uniform(-3.0, 3.0);
    const Vector q = project_reduced(p, set);
    EXPECT_TRUE(set.contains(q, 1e-12));
    EXPECT_LT((project_reduced(q, set) - q).norm(), 1e-12);
  }
}

TEST(ProjectReduced, VariationalInequalityAgainstRandomFeasiblePoints) {
  Rng rng(7);
  ReducedFeasibleSet set = slab_set(8);
  for (int trial = 0; trial < 10; ++trial) {
    Vector p(8);
    for (int i = 0; i < 8; ++i) p[i] = rng.uniform(-3.0, 3.0);
    const Vector q = project_reduced(p, set);
    const double d = (p - q).norm();
    for (int k = 0; k < 1000; ++k) {
      const Vector z = set.sample_uniform(rng);
      EXPECT_LE(d, (p - z).norm() + 1e-12);
    }
  }
}

TEST(ProjectReduced, MatchesDenseQpOracleAtN4) {
  Rng rng(11);
  ReducedFeasibleSet set = slab_set(4);
  for (int trial = 0; trial < 60; ++trial) {
    Vector p(4);
    for (int i = 0; i < 4; ++i) p[i] = rng.uniform(-2.5, 2.5);
    const Vector ours = project_reduced(p, set);
    const Vector oracle = test_oracle::qp_project_box_slab(p);
    EXPECT_LT((ours - oracle).cwiseAbs().maxCoeff(), 1e-9)
        << "p = " << p.transpose();
  }
}

TEST(ProjectReduced, StrictL1Mode) {
  Rng rng(13);
  ReducedFeasibleSet set = slab_set(6);
  set.strict_l1 = true;
  set.l1_bound = 1.0;
  for (int trial = 0; trial < 200; ++trial) {
    Vector p(6);
    for (int i = 0; i < 6; ++i) p[i] = rng.uniform(-2.0, 2.0);
    const Vector q = project_reduced(p, set);
    EXPECT_LE(q.cwiseAbs().sum(), 1.0 + 1e-12);
    EXPECT_LT((project_reduced(q, set) - q).norm(), 1e-12);
    const double d = (p - q).norm();
    for (int k = 0; k < 50; ++k) {
      const Vector z = set.sample_uniform(rng);
      EXPECT_LE(d, (p - z).norm() + 1e-12);
    }
  }
}

TEST(ProjectSimplex, ExamplesAndProperties) {
  Vector p(3);
  p << 0.5, 0.5, 0.5;
  const Vector q = project_simplex(p);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(q[i], 1.0 / 3.0, 1e-14);

  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    Vector x(7);
    for (int i = 0; i < 7; ++i) x[i] = rng.uniform(-2.0, 2.0);
    const Vector s = project_simplex(x);
    EXPECT_NEAR(s.sum(), 1.0, 1e-12);
    EXPECT_GE(s.minCoeff(), 0.0);
    // Variational characterization against random simplex points.
    const double d = (x - s).norm();
    for (int k = 0; k < 30; ++k) {
      Vector z(7);
      double total = rng.exponential();
      for (int i = 0; i < 7; ++i) {
        z[i] = rng.exponential();
        total += 0;
      }
      z /= z.sum();
      EXPECT_LE(d, (x - z).norm() + 1e-12);
    }
  }
}

TEST(SolveReduced, DegenerateAllZeroDictionary) {
  const Matrix values = Matrix::Zero(30, 5);
  SaaSolution sol = solve_reduced(values, 200.0, 200.0);
  EXPECT_TRUE(sol.converged);
  EXPECT_NEAR(sol.log_value_stabilized, -200.0, 1e-12);
  EXPECT_NEAR(sol.log_theta_hat, 0.0, 1e-12);
  EXPECT_NEAR(std::exp(sol.log_theta_hat), 1.0, 1e-12);
}

TEST(SolveReduced, OneDimensionalBoundarySolution) {
  const double s = 3.0, shift = 7.0;
  const Matrix values = Matrix::Constant(40, 1, 0.5);
  SaaSolution sol = solve_reduced(values, s, shift);
  ASSERT_TRUE(sol.converged);
  EXPECT_NEAR(sol.tau[0], -1.0, 1e-9);
  EXPECT_NEAR(sol.log_value_stabilized, -shift - 0.5 * s, 1e-9);

  // 1-D grid-search oracle over the feasible interval.
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 100000; ++k) {
    const double tau = -1.0 + 2.0 * double(k) / 100000.0;
    best = std::min(best,
                    reduced_objective_and_gradient(Vector::Constant(1, tau), values, s,
                                                   shift)
                        .first);
  }
  EXPECT_NEAR(sol.log_value_stabilized, best, 1e-9);
}

TEST(SolveReduced, MonotoneDescentTrace) {
  Rng rng(19);
  const Matrix values = random_dictionary(rng, 200, 12);
  SolveOptions opts;
  opts.trace_path = "/tmp/eots_trace_test.csv";
  SaaSolution sol = solve_reduced(values, 4.0, 4.0, opts);
  EXPECT_TRUE(sol.converged);
  std::ifstream in(opts.trace_path);
  ASSERT_TRUE(in.good());
  std::string line;
  std::getline(in, line);  // header
  double prev = std::numeric_limits<double>::infinity();
  int rows = 0;
  while (std::getline(in, line)) {
    const double obj = std::stod(line.substr(line.find(',') + 1));
    EXPECT_LE(obj, prev + 1e-12);
    prev = obj;
    ++rows;
  }
  EXPECT_GT(rows, 1);
  std::remove(opts.trace_path.c_str());
}

TEST(SolveReduced, FeasibilityOfReportedSolution) {
  Rng rng(23);
  const Matrix values = random_dictionary(rng, 150, 20);
  SaaSolution sol = solve_reduced(values, 10.0, 10.0);
  EXPECT_TRUE(sol.converged);
  EXPECT_TRUE(slab_set(20).contains(sol.tau, 1e-12));
  EXPECT_DOUBLE_EQ(sol.log_theta_hat, sol.log_value_stabilized + 10.0);
}

TEST(SolveGeneral, AlphaCapZeroGivesThetaOne) {
  Rng rng(29);
  const Matrix signed_values = random_dictionary(rng, 50, 8);
  SaaSolution sol = solve_general(signed_values, 5.0, 1.0, 0.0);
  EXPECT_TRUE(sol.converged);
  EXPECT_DOUBLE_EQ(sol.alpha, 0.0);
  EXPECT_NEAR(sol.log_theta_hat, 0.0, 1e-12);
}

TEST(SolveGeneral, AgreesWithReducedOnSharedDraws) {
  // gamma = 5, n_total = 8, N = 400 shared R_gamma draws.
  Marginal ux = Marginal::uniform(0.0, 1.0);
  Marginal uy = Marginal::uniform(0.0, 2.0);
  CostFunction cost = CostFunction::quadratic(ux, uy);
  Rng rng(31);
  ReferenceMeasure ref = ReferenceMeasure::make(5.0, cost, ux, uy, 100000, rng);

  SievePartition p;
  p.epsilon = 0.5;
  for (int k = 0; k <= 4; ++k) {
    p.x.edges.push_back(double(k) / 4.0);
    p.y.edges.push_back(2.0 * double(k) / 4.0);
  }
  for (int k = 0; k < 4; ++k) {
    p.x.representatives.push_back((double(k) + 0.5) / 4.0);
    p.y.representatives.push_back(2.0 * (double(k) + 0.5) / 4.0);
  }
  p.n_x = p.n_y = 4;
  p.n_total = 8;

  SieveDictionary dict(p, DictionaryKind::reduced_tau, 5.0, 1.0, cost.sup_norm(), ux, uy);
  ReferenceSample draws = sample_reference(ref, 400, 4000000, rng);
  const Matrix values = dict.evaluate_rows(draws.x, draws.y);
  Matrix signed_values(values.rows(), 2 * values.cols());
  signed_values.leftCols(values.cols()) = values;
  signed_values.rightCols(values.cols()) = -values;

  const double scale = 5.0 * cost.sup_norm();
  const double shift = 5.0 * 1.0 * cost.sup_norm();
  SaaSolution reduced = solve_reduced(values, scale, shift);
  SaaSolution general = solve_general(signed_values, 5.0, 1.0, cost.sup_norm());
  ASSERT_TRUE(reduced.converged);
  ASSERT_TRUE(general.converged);
  EXPECT_LE(std::abs(general.log_theta_hat - reduced.log_theta_hat), 1e-4);
}

TEST(Boundedness, StabilizedExponentsAndGeneralIntegrand) {
  Rng rng(37);
  const int n = 10;
  const Matrix values = random_dictionary(rng, 60, n);
  const double gamma = 5.0, kappa_value = 1.0, sup = 2.0;
  const double scale = gamma * sup, shift = gamma * kappa_value * sup;

  ReducedFeasibleSet strict = slab_set(n);
  strict.strict_l1 = true;
  strict.l1_bound = kappa_value;
  for (int trial = 0; trial < 200; ++trial) {
    const Vector tau = strict.sample_uniform(rng);
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      const double e = scale * values.row(r).dot(tau) - shift;
      EXPECT_TRUE(std::isfinite(e));
      EXPECT_LE(e, 1e-12);  // exponent capped at the stabilization shift
    }
  }

  // General mode: the unstabilized integrand never exceeds exp(gamma*kappa*||c||).
  Matrix signed_values(values.rows(), 2 * n);
  signed_values.leftCols(n) = values;
  signed_values.rightCols(n) = -values;
  const double alpha_max = gamma * kappa_value * sup;
  for (int trial = 0; trial < 200; ++trial) {
    const double alpha = rng.uniform(0.0, alpha_max);
    Vector mu(2 * n);
    for (int i = 0; i < 2 * n; ++i) mu[i] = rng.exponential();
    mu /= mu.sum();
    for (Eigen::Index r = 0; r < signed_values.rows(); ++r) {
      const double integrand = std::exp(alpha * signed_values.row(r).dot(mu));
      EXPECT_LE(integrand, std::exp(alpha_max) * (1 + 1e-12));
    }
  }
}

}  // namespace
