#include "eotsieve/estimator.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "eotsieve/harness.hpp"
#include "eotsieve/oracle.hpp"
#include "eotsieve/sieve.hpp"

using namespace eotsieve;

namespace {

TEST(EstimateEot, RefusesUnconvergedSolutions) {
  Rng rng(1);
  Marginal u = Marginal::uniform(0.0, 1.0);
  CostFunction cost = CostFunction::quadratic(u, u);
  ReferenceMeasure ref = ReferenceMeasure::make(2.0, cost, u, u, 1000, rng);
  SaaSolution sol;
  sol.converged = false;
  sol.log_theta_hat = -1.0;
  EXPECT_THROW(estimate_eot(sol, ref), UnconvergedSolution);
}

TEST(EstimateEot, ZeroCostGivesExactZeroNormalizerAndTinyValue) {
  ExperimentConfig cfg;
  cfg.gamma = 5.0;
  cfg.epsilon = 0.3;
  cfg.master_seed = 7;
  cfg.normalizer_draws = 10000;
  Marginal x = Marginal::uniform(0.0, 1.0);
  Marginal y = Marginal::uniform(0.0, 1.0);
  cfg.y_marginal = MarginalSpec{.kind = "uniform", .lo = 0.0, .hi = 1.0};
  Instruments inst{x, y,
                   CostFunction("zero", [](const Vector&, const Vector&) { return 0.0; },
                                0.0, 0.0)};
  Campaign c = prepare_campaign(cfg, &inst);
  EXPECT_EQ(c.reference->log_a_gamma(), 0.0);  // exact, every weight is 1
  ReplicationRecord rec = run_replication(c, 0);
  ASSERT_EQ(rec.status, "ok");
  // ||c||_inf = 0 collapses the dictionary scale, so theta_hat = 1 and the
  // estimate is exactly zero.
  EXPECT_EQ(rec.sieve_value, 0.0);
  EXPECT_EQ(rec.theta_hat, 1.0);
}

TEST(EstimateEot, TinyDiscreteInstanceMatchesExactOracle) {
  Marginal x = Marginal::discrete({0.0, 1.0}, {0.5, 0.5});
  Marginal y = Marginal::discrete({0.0, 1.0}, {0.3, 0.7});
  CostFunction cost = CostFunction::quadratic(x, y);
  const double gamma = 2.0;

  // Exact discrete EOT value by the baseline oracle.
  Matrix c2(2, 2);
  Vector px(1), py(1);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      px[0] = i;
      py[0] = j;
      c2(i, j) = cost(px, py);
    }
  Vector wx(2), wy(2);
  wx << 0.5, 0.5;
  wy << 0.3, 0.7;
  SinkhornOptions so;
  so.tol = 1e-12;
  SinkhornResult oracle = sinkhorn(DiscreteEotProblem(wx, wy, c2, gamma), so);
  ASSERT_TRUE(oracle.converged);

  ExperimentConfig cfg;
  cfg.gamma = gamma;
  cfg.epsilon = 0.3;
  cfg.sample_size = 400000;
  cfg.master_seed = 11;
  cfg.normalizer_draws = 1000000;
  Instruments inst{x, y, cost};
  Campaign c = prepare_campaign(cfg, &inst);
  EXPECT_EQ(c.partition.n_total, 4);  // each atom its own cell
  EXPECT_NEAR(c.kappa_value, 1.0 / 0.7, 1e-12);
  ReplicationRecord rec = run_replication(c, 0);
  ASSERT_EQ(rec.status, "ok");
  EXPECT_NEAR(rec.sieve_value, oracle.reg_value, 1e-3);
}

TEST(RateBound, PinnedValues) {
  // Table-1 primitives: stochastic term sqrt(2 ln 160 / 1015) = 0.10000171...
  const double b = rate_bound_log10(0.1, 160, 1015, 100.0, 1.0, 2.0);
  EXPECT_NEAR(b, 173.31986, 1e-3);
  // epsilon -> 0: the stochastic term governs.
  const double stoch = std::sqrt(2.0 * std::log(160.0) / 1015.0);
  EXPECT_NEAR(rate_bound_log10(1e-9, 160, 1015, 100.0, 1.0, 2.0),
              std::log10(stoch * 4.0) + 200.0 * 2.0 / std::log(10.0), 1e-9);
  // gamma -> 0+: the exponential factor vanishes.
  EXPECT_NEAR(rate_bound_log10(0.1, 160, 1015, 1e-12, 1.0, 2.0),
              std::log10(stoch * 4.0), 1e-6);
  EXPECT_THROW(rate_bound_log10(0.0, 160, 1015, 1.0, 1.0, 2.0), InvalidArgument);
}

TEST(RateBound, BalancePropertyAtAutoSampleSize) {
  for (double eps : {0.4, 0.2, 0.1, 0.05}) {
    for (std::int64_t n : {8, 40, 160, 320}) {
      const std::int64_t N = optimal_sample_size(eps, n);
      const double stoch = std::sqrt(2.0 * std::log(double(n)) / double(N));
      EXPECT_LE(std::abs(stoch - eps), eps / double(N))
          << "eps=" << eps << " n=" << n << " N=" << N;
    }
  }
}

TEST(SymmetricCi, ZeroMultipliersGiveDegenerateInterval) {
  Rng rng(3);
  Matrix centered(4, 50);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 50; ++j) centered(i, j) = rng.uniform(-1.0, 1.0);
  centered.colwise() -= centered.rowwise().mean().eval();
  const Matrix zeros = Matrix::Zero(50, 30);
  std::vector<double> sups;
  detail::bootstrap_sups_direct(centered, zeros, sups);
  ASSERT_EQ(sups.size(), 60u);
  for (double s : sups) EXPECT_DOUBLE_EQ(s, 0.0);
  EXPECT_DOUBLE_EQ(empirical_quantile(sups, 0.975), 0.0);
}

TEST(SymmetricCi, LogDomainFallbackMatchesDirectArithmetic) {
  Rng rng(5);
  const int g_count = 6, n = 40, draws = 20;
  Matrix exponents(g_count, n);
  for (int g = 0; g < g_count; ++g)
    for (int j = 0; j < n; ++j) exponents(g, j) = rng.uniform(-3.0, 3.0);
  Matrix multipliers(n, draws);
  for (int j = 0; j < n; ++j)
    for (int b = 0; b < draws; ++b) multipliers(j, b) = rng.normal();

  Matrix values = exponents.array().exp().matrix();
  values.colwise() -= values.rowwise().mean().eval();
  std::vector<double> direct, logdomain;
  detail::bootstrap_sups_direct(values, multipliers, direct);
  detail::bootstrap_sups_logdomain(exponents, multipliers, logdomain);
  ASSERT_EQ(direct.size(), logdomain.size());
  for (std::size_t k = 0; k < direct.size(); ++k)
    EXPECT_NEAR(direct[k], logdomain[k], 1e-9 * (1.0 + std::abs(direct[k])));
}

class CiFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    Marginal x = Marginal::uniform(0.0, 1.0);
    Marginal y = Marginal::uniform(0.0, 2.0);
    CostFunction cost = CostFunction::quadratic(x, y);
    Rng rng(17);
    ref_ = std::make_unique<ReferenceMeasure>(
        ReferenceMeasure::make(5.0, cost, x, y, 100000, rng));
    partition_ = build_partition(x, y, 0.2);
    dict_ = std::make_unique<SieveDictionary>(partition_, DictionaryKind::reduced_tau,
                                              5.0, 1.0, cost.sup_norm(), x, y);
    ReferenceSample draws = sample_reference(*ref_, 220, 2200000, rng);
    values_ = dict_->evaluate_rows(draws.x, draws.y);
    scale_ = 5.0 * cost.sup_norm();
    shift_ = 5.0 * 1.0 * cost.sup_norm();
    sol_ = solve_reduced(values_, scale_, shift_);
    ASSERT_TRUE(sol_.converged);
  }
  std::unique_ptr<ReferenceMeasure> ref_;
  SievePartition partition_;
  std::unique_ptr<SieveDictionary> dict_;
  Matrix values_;
  double scale_ = 0, shift_ = 0;
  SaaSolution sol_;
};

TEST_F(CiFixture, BracketsThetaHatAndValidatesArguments) {
  Rng rng(19);
  auto [lo, hi] = symmetric_ci(sol_, values_, scale_, shift_, 0.95, 500, 64, rng);
  const double theta_hat = std::exp(sol_.log_theta_hat);
  EXPECT_LE(lo, theta_hat);
  EXPECT_GE(hi, theta_hat);
  EXPECT_GE(lo, 0.0);

  EXPECT_THROW(symmetric_ci(sol_, values_, scale_, shift_, 0.4, 500, 64, rng),
               InvalidArgument);
  EXPECT_THROW(symmetric_ci(sol_, values_, scale_, shift_, 0.95, 100, 64, rng),
               InvalidArgument);
  SaaSolution bad = sol_;
  bad.converged = false;
  EXPECT_THROW(symmetric_ci(bad, values_, scale_, shift_, 0.95, 500, 64, rng),
               UnconvergedSolution);
}

TEST_F(CiFixture, BootstrapSelfConsistencyWithinFivePercent) {
  Rng rng1(23), rng2(29);
  auto [lo1, hi1] = symmetric_ci(sol_, values_, scale_, shift_, 0.95, 2000, 128, rng1);
  auto [lo2, hi2] = symmetric_ci(sol_, values_, scale_, shift_, 0.95, 2000, 128, rng2);
  const double w1 = hi1 - lo1, w2 = hi2 - lo2;
  EXPECT_LE(std::abs(w1 - w2), 0.05 * std::max(w1, w2));
}

TEST_F(CiFixture, ValueScaleMapInvertsOrder) {
  Rng rng(31);
  EotEstimate est = estimate_eot(sol_, *ref_);
  auto [lo, hi] = symmetric_ci(sol_, values_, scale_, shift_, 0.9, 400, 64, rng);
  est.has_ci = true;
  est.ci_lo = lo;
  est.ci_hi = hi;
  est.ci_level = 0.9;
  ASSERT_LE(est.ci_lo, est.theta_hat);
  ASSERT_GE(est.ci_hi, est.theta_hat);
  auto [vlo, vhi] = est.value_scale_ci();
  EXPECT_LE(vlo, est.eot_value);
  EXPECT_GE(vhi, est.eot_value);
  // Strictly decreasing transform: the theta upper endpoint gives the value
  // lower endpoint.
  EXPECT_DOUBLE_EQ(vlo, -(est.log_a_gamma + std::log(est.ci_hi)) / est.gamma);
  nlohmann::json j = est.to_json();
  EXPECT_TRUE(j.contains("theta_ci"));
}

}  // namespace
