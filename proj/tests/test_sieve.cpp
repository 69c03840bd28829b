#include "eotsieve/sieve.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace eotsieve;

namespace {

Marginal ux() { return Marginal::uniform(0.0, 1.0); }
Marginal uy() { return Marginal::uniform(0.0, 2.0); }

TEST(Partition, AppendixPrimitivesCellCounts) {
  SievePartition p = build_partition(ux(), uy(), 0.1);
  EXPECT_EQ(p.n_x, 80);
  EXPECT_EQ(p.n_y, 80);
  EXPECT_EQ(p.n_total, 160);
  // Equal-width quantile cells for uniforms.
  for (int j = 0; j < p.n_x; ++j)
    EXPECT_NEAR(p.x.edges[std::size_t(j) + 1] - p.x.edges[std::size_t(j)], 1.0 / 80.0, 1e-12);
  for (int i = 0; i < p.n_y; ++i)
    EXPECT_NEAR(p.y.edges[std::size_t(i) + 1] - p.y.edges[std::size_t(i)], 2.0 / 80.0, 1e-12);
}

TEST(Partition, CdfIncrementsWithinBudget) {
  for (double eps : {0.37, 0.2, 0.11}) {
    SievePartition p = build_partition(ux(), uy(), eps);
    for (int j = 0; j < p.n_x; ++j) {
      const double inc = ux().cdf1(p.x.edges[std::size_t(j) + 1]) -
                         ux().cdf1(p.x.edges[std::size_t(j)]);
      EXPECT_LE(inc, eps / 8.0 + 1e-12);
    }
    const std::int64_t cap = 2 * std::int64_t(std::ceil(8.0 / eps)) + 4;
    EXPECT_LE(p.n_total, cap);
  }
}

TEST(Partition, RepresentativesLieInsideCells) {
  SievePartition p = build_partition(ux(), Marginal::discrete({0.0, 0.5, 0.6, 2.0},
                                                              {0.25, 0.25, 0.25, 0.25}),
                                     0.3);
  for (int j = 0; j < p.n_x; ++j) {
    EXPECT_GE(p.x.representatives[std::size_t(j)], p.x.edges[std::size_t(j)]);
    EXPECT_LE(p.x.representatives[std::size_t(j)], p.x.edges[std::size_t(j) + 1]);
  }
  for (int i = 0; i < p.n_y; ++i) {
    EXPECT_GE(p.y.representatives[std::size_t(i)], p.y.edges[std::size_t(i)]);
    EXPECT_LE(p.y.representatives[std::size_t(i)], p.y.edges[std::size_t(i) + 1]);
  }
}

TEST(Partition, PointMassSingleCell) {
  SievePartition p = build_partition(Marginal::point_mass(0.3), uy(), 0.1);
  EXPECT_EQ(p.n_x, 1);
  EXPECT_DOUBLE_EQ(p.x.representatives[0], 0.3);
  // The heavy atom is flagged (its mass exceeds epsilon/8).
  EXPECT_FALSE(p.warnings.empty());
}

TEST(Partition, EpsilonValidationAndBudget) {
  EXPECT_THROW(build_partition(ux(), uy(), 0.0), InvalidArgument);
  EXPECT_THROW(build_partition(ux(), uy(), 1.0), InvalidArgument);
  EXPECT_THROW(build_partition(ux(), uy(), 2e-6), PartitionBudgetExceeded);
}

TEST(Partition, ScalingAtMostDoubles) {
  int prev_nx = 0, prev_ny = 0;
  for (double eps : {0.4, 0.2, 0.1}) {
    SievePartition p = build_partition(ux(), uy(), eps);
    if (prev_nx > 0) {
      EXPECT_LE(p.n_x, 2 * prev_nx);
      EXPECT_LE(p.n_y, 2 * prev_ny);
    }
    prev_nx = p.n_x;
    prev_ny = p.n_y;
  }
}

TEST(Partition, JsonSummary) {
  SievePartition p = build_partition(ux(), uy(), 0.2);
  nlohmann::json j = p.to_json();
  EXPECT_EQ(j["n_total"], p.n_total);
  EXPECT_EQ(j["x_breakpoints"].size(), p.x.edges.size());
  EXPECT_EQ(j["x_representatives"].size(), std::size_t(p.n_x));
  EXPECT_EQ(j["epsilon"], 0.2);
}

TEST(Kappa, Examples) {
  EXPECT_DOUBLE_EQ(kappa(ux(), uy()), 1.0);
  Marginal atom_at_inf = Marginal::discrete({0.0, 1.0}, {0.5, 0.5});
  EXPECT_DOUBLE_EQ(kappa(atom_at_inf, uy()), 1.0);  // max picks the atomless side
  EXPECT_DOUBLE_EQ(kappa(atom_at_inf, atom_at_inf), 2.0);
  EXPECT_THROW(kappa(Marginal::point_mass(0.0), Marginal::point_mass(1.0)),
               DegenerateMarginal);
}

SievePartition single_cell_partition() {
  SievePartition p;
  p.epsilon = 0.5;
  p.x.edges = {0.0, 1.0};
  p.x.representatives = {0.5};
  p.y.edges = {0.0, 2.0};
  p.y.representatives = {1.0};
  p.n_x = 1;
  p.n_y = 1;
  p.n_total = 2;
  return p;
}

TEST(Dictionary, EntryExamples) {
  SieveDictionary dict(single_cell_partition(), DictionaryKind::reduced_tau, 100.0, 1.0,
                       2.0, ux(), uy());
  // x' = 0.5 with F_X(0.5) = 0.5: indicator fires at x = 0.3, not at x = 0.7.
  EXPECT_DOUBLE_EQ(dict.evaluate(0.3, 1.5)[0], -0.5);
  EXPECT_DOUBLE_EQ(dict.evaluate(0.7, 1.5)[0], 0.5);
  EXPECT_DOUBLE_EQ(dict.evaluate(0.5, 1.5)[0], -0.5);  // closed at the representative
  EXPECT_DOUBLE_EQ(dict.scale(), 100.0 * 2.0);
}

TEST(Dictionary, ValuesBoundedByOne) {
  SievePartition p = build_partition(ux(), uy(), 0.15);
  SieveDictionary dict(p, DictionaryKind::reduced_tau, 5.0, 1.0, 2.0, ux(), uy());
  Rng rng(3);
  for (int k = 0; k < 500; ++k) {
    const Vector v = dict.evaluate(rng.uniform01(), rng.uniform(0.0, 2.0));
    EXPECT_LE(v.maxCoeff(), 1.0);
    EXPECT_GE(v.minCoeff(), -1.0);
  }
}

TEST(Dictionary, CoordinatesAreCenteredUnderProductDraws) {
  SievePartition p = build_partition(ux(), uy(), 0.1);
  SieveDictionary dict(p, DictionaryKind::reduced_tau, 100.0, 1.0, 2.0, ux(), uy());
  Rng rng(31);
  const int draws = 100000;
  Vector mean = Vector::Zero(dict.size());
  for (int k = 0; k < draws; ++k)
    mean += dict.evaluate(rng.uniform01(), rng.uniform(0.0, 2.0));
  mean /= double(draws);
  // Population mean is exactly 0; each coordinate has sd <= 1/2.
  const double tol = 4.0 * 0.5 / std::sqrt(double(draws));
  for (Eigen::Index j = 0; j < mean.size(); ++j) EXPECT_NEAR(mean[j], 0.0, tol);
}

TEST(Dictionary, SignedMatrixHoldsEachVAndMinusV) {
  SievePartition p = build_partition(ux(), uy(), 0.4);
  SieveDictionary dict(p, DictionaryKind::general_alpha_mu, 5.0, 1.0, 2.0, ux(), uy());
  Rng rng(7);
  std::vector<Vector> xs, ys;
  for (int i = 0; i < 20; ++i) {
    xs.push_back(ux().sample_point(rng));
    ys.push_back(uy().sample_point(rng));
  }
  const Matrix signed_vals = dict.evaluate_rows_signed(xs, ys);
  const Matrix plain = dict.evaluate_rows(xs, ys);
  EXPECT_EQ(signed_vals.cols(), 2 * plain.cols());
  EXPECT_NEAR((signed_vals.leftCols(plain.cols()) - plain).cwiseAbs().maxCoeff(), 0, 0);
  EXPECT_NEAR((signed_vals.rightCols(plain.cols()) + plain).cwiseAbs().maxCoeff(), 0, 0);
}

TEST(SampleSize, BalanceRuleMatchesPinnedValues) {
  EXPECT_EQ(optimal_sample_size(0.1, 160), 1015);  // Table-1 primitives
  EXPECT_EQ(optimal_sample_size(1.0 - 1e-12, 8), 5);
  EXPECT_EQ(optimal_sample_size(0.1, 2), 139);
  EXPECT_EQ(optimal_sample_size(0.2, 80), 220);
  EXPECT_THROW(optimal_sample_size(0.1, 1), InvalidArgument);
  EXPECT_THROW(optimal_sample_size(0.0, 10), InvalidArgument);
}

TEST(SampleSize, EntropyConditionFlags) {
  const auto r1 = entropy_condition_ok({{0.2, 80, 500}, {0.1, 160, 1015}});
  EXPECT_EQ(r1, std::vector<bool>({true, true}));
  const auto r2 = entropy_condition_ok({{0.1, 160, 1015}});
  EXPECT_EQ(r2, std::vector<bool>({true}));
  const auto r3 = entropy_condition_ok({{0.1, 160, 100}, {0.05, 320, 100}});
  EXPECT_EQ(r3, std::vector<bool>({true, false}));
  EXPECT_THROW(entropy_condition_ok({}), InvalidArgument);
}

class RefinedPartition : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng norm_rng(101);
    ref_ = std::make_unique<ReferenceMeasure>(ReferenceMeasure::make(
        5.0, CostFunction::quadratic(ux(), uy()), ux(), uy(), 100000, norm_rng));
  }
  std::unique_ptr<ReferenceMeasure> ref_;
};

TEST_F(RefinedPartition, ReferenceMarginalIncrementsWithinBudget) {
  Rng rng(103);
  const double eps = 0.2;
  SievePartition p = build_partition(ux(), uy(), eps, ref_.get(), &rng);
  EXPECT_TRUE(p.check_reference_marginals);
  EXPECT_GE(p.n_total, build_partition(ux(), uy(), eps).n_total);

  // Fresh R_gamma sample; estimated per-cell marginal CDF increments fit the
  // budget up to Monte Carlo noise.
  Rng rng2(107);
  ReferenceSample s = sample_reference(*ref_, 20000, 20000000, rng2);
  std::vector<double> xs(s.x.size());
  for (std::size_t i = 0; i < s.x.size(); ++i) xs[i] = s.x[i][0];
  for (int j = 0; j < p.n_x; ++j) {
    double frac = 0;
    for (double c : xs)
      if (c > p.x.edges[std::size_t(j)] && c <= p.x.edges[std::size_t(j) + 1])
        frac += 1.0;
    frac /= double(xs.size());
    const double se = std::sqrt(frac * (1 - frac) / double(xs.size()));
    EXPECT_LE(frac, eps / 8.0 + 4.0 * se + 0.004);
  }
}

TEST_F(RefinedPartition, MomentFunctionVariationTransfersAcrossCells) {
  Rng rng(109);
  const double eps = 0.2;
  SievePartition p = build_partition(ux(), uy(), eps, ref_.get(), &rng);

  Rng rng2(113);
  ReferenceSample s = sample_reference(*ref_, 10000, 10000000, rng2);
  Rng pick(127);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t j = std::size_t(pick.uniform_index(std::uint64_t(p.n_x)));
    const double a = p.x.edges[j], b = p.x.edges[j + 1];
    if (b <= a) continue;
    const double x1 = pick.uniform(a, b), x2 = pick.uniform(a, b);
    // L1(R_gamma) distance of g_{x1} and g_{x2} estimated on the sample.
    const double df = ux().cdf1(x1) - ux().cdf1(x2);
    double mean = 0, m2 = 0;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const double ind1 = s.x[k][0] <= x1 ? 1.0 : 0.0;
      const double ind2 = s.x[k][0] <= x2 ? 1.0 : 0.0;
      const double v = std::abs(df - (ind1 - ind2));
      const double delta = v - mean;
      mean += delta / double(k + 1);
      m2 += delta * (v - mean);
    }
    const double se = std::sqrt(m2 / double(s.x.size() - 1) / double(s.x.size()));
    EXPECT_LE(mean, eps / 2.0 + 4.0 * se)
        << "cell " << j << " params " << x1 << ", " << x2;
  }
}

}  // namespace
