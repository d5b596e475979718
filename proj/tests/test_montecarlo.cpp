#include "pds/montecarlo.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace pds;

namespace {

double corr(const Matrix& Z, Index a, Index b) {
  const Vector u = Z.col(a).array() - Z.col(a).mean();
  const Vector v = Z.col(b).array() - Z.col(b).mean();
  return u.dot(v) / std::sqrt(u.squaredNorm() * v.squaredNorm());
}

}  // namespace

TEST(Toeplitz, Moments) {
  Rng rng(1);
  const Matrix Z = draw_toeplitz_gaussian(100000, 6, 0.5, rng);
  const Matrix T = [] {
    Matrix t(6, 6);
    for (Index j = 0; j < 6; ++j)
      for (Index k = 0; k < 6; ++k) t(j, k) = std::pow(0.5, static_cast<double>(std::abs(j - k)));
    return t;
  }();
  const Matrix C = (Z.rowwise() - Z.colwise().mean()).transpose() * (Z.rowwise() - Z.colwise().mean()) / 99999.0;
  EXPECT_LT((C - T).cwiseAbs().maxCoeff(), 0.02);
  for (Index j = 0; j < 6; ++j) EXPECT_NEAR(C(j, j), 1.0, 0.02);
  EXPECT_NEAR(corr(Z, 0, 1), 0.5, 0.02);
  EXPECT_NEAR(corr(Z, 0, 2), 0.25, 0.02);
}

TEST(Toeplitz, IndependentWhenRhoZero) {
  Rng rng(2);
  const Matrix Z = draw_toeplitz_gaussian(10000, 3, 0.0, rng);
  EXPECT_LT(std::fabs(corr(Z, 0, 1)), 0.05);
  EXPECT_LT(std::fabs(corr(Z, 1, 2)), 0.05);
  EXPECT_THROW(draw_toeplitz_gaussian(5, 2, 1.0, rng), DomainError);
}

TEST(Dgp, StructuralIdentities) {
  EXPECT_EQ(g_true(0.0), 0.0);
  Matrix e1 = Matrix::Zero(1, 10);
  e1(0, 0) = 1.0;
  EXPECT_EQ(h_of_row(Design::high_dim, e1, 0), 1.0);
  EXPECT_EQ(h_of_row(Design::low_dim, Matrix::Zero(1, 4), 0), 0.0);

  DgpConfig cfg;
  cfg.n = 50;
  cfg.sigma_eps = 1e-300;
  Rng rng(3);
  const Sample s = generate_sample(cfg, rng);
  for (Index i = 0; i < cfg.n; ++i) EXPECT_NEAR(s.y(i) - g_true(s.x(i)) - s.h_true(i), 0.0, 1e-15);
  EXPECT_EQ(s.Z.cols(), 4);

  DgpConfig hi;
  hi.design = Design::high_dim;
  hi.n = 30;
  EXPECT_EQ(hi.resolved_dim_z(), 60);
}

TEST(Dgp, IndexVariance) {
  DgpConfig lo;
  EXPECT_NEAR(index_variance(lo), 8.25, 1e-12);
  DgpConfig hi;
  hi.design = Design::high_dim;
  hi.n = 500;
  EXPECT_NEAR(index_variance(hi), 20.0 / 9.0, 1e-12);
}

TEST(TrueTheta, FrozenFixtures) {
  DgpConfig lo;
  EXPECT_NEAR(true_theta(lo, Target::theta1), 0.20258847689, 1e-3);
  EXPECT_NEAR(true_theta(lo, Target::theta2), 0.34487225471, 1e-3);
  DgpConfig hi;
  hi.design = Design::high_dim;
  hi.n = 500;
  EXPECT_NEAR(true_theta(hi, Target::theta1), 0.16116990251, 1e-3);
  EXPECT_NEAR(true_theta(hi, Target::theta2), 0.54086189196, 1e-3);
  lo.sigma_v = 2.0;
  EXPECT_NEAR(true_theta(lo, Target::theta1), 0.14994487420, 1e-3);
}

TEST(TrueTheta, BoundsAndSymmetry) {
  DgpConfig lo;
  const double t1 = true_theta(lo, Target::theta1, 1'000'000);
  EXPECT_GT(t1, 0.0);
  EXPECT_LT(t1, 0.25);
  // x is symmetric about 0, so q25 = -q75 and theta2 = 2 g(q75).
  lo.n = 400000;
  Rng rng(17);
  const Sample s = generate_sample(lo, rng);
  std::vector<double> xs(s.x.data(), s.x.data() + s.x.size());
  std::sort(xs.begin(), xs.end());
  const double q25 = xs[100000 - 1], q75 = xs[300000 - 1];
  EXPECT_NEAR(q25, -q75, 0.02);
  EXPECT_NEAR(true_theta(lo, Target::theta2), 2.0 * g_true(q75), 0.01);
}

TEST(Metrics, Examples) {
  Metrics m = aggregate_metrics({-1.0, 0.0, 1.0}, {false, false, true}, 0.0);
  EXPECT_EQ(m.median_bias, 0.0);
  EXPECT_EQ(m.mad, 1.0);
  EXPECT_NEAR(m.rp5, 1.0 / 3.0, 1e-15);
  m = aggregate_metrics({1.0, 2.0, 4.0}, {}, 2.0);
  EXPECT_EQ(m.median_bias, 0.0);
  EXPECT_EQ(m.mad, 1.0);
  m = aggregate_metrics({0.3, 0.3}, {true, false}, 0.3);
  EXPECT_EQ(m.median_bias, 0.0);
  EXPECT_EQ(m.mad, 0.0);
  EXPECT_EQ(m.rp5, 0.5);
  EXPECT_THROW(aggregate_metrics({}, {}, 0.0), DomainError);
}

TEST(Metrics, PermutationInvariant) {
  const std::vector<double> a = {0.1, -0.4, 0.9, 0.25, 0.0, -0.2};
  std::vector<double> b = {0.9, 0.0, 0.1, -0.2, 0.25, -0.4};
  EXPECT_EQ(aggregate_metrics(a, {}, 0.05).mad, aggregate_metrics(b, {}, 0.05).mad);
  EXPECT_EQ(median(a), 0.05);
}

TEST(Seeds, DistinctAndStable) {
  EXPECT_EQ(replication_seed(1, 0), replication_seed(1, 0));
  EXPECT_NE(replication_seed(1, 0), replication_seed(1, 1));
  EXPECT_NE(replication_seed(1, 0), replication_seed(2, 0));
}

TEST(MonteCarlo, DeterministicAcrossThreadCounts) {
  DgpConfig cfg;
  cfg.n = 200;
  const std::vector<Estimator> est = {Estimator::post_double, Estimator::oracle, Estimator::series_1};
  MonteCarloOptions one, many;
  many.threads = 3;
  const McReport a = run_monte_carlo(cfg, est, 6, 42, one);
  const McReport b = run_monte_carlo(cfg, est, 6, 42, many);
  std::ostringstream sa, sb;
  write_mc_csv(a, sa);
  write_mc_csv(b, sb);
  EXPECT_EQ(sa.str(), sb.str());
  ASSERT_EQ(a.rows.size(), 6u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].theta_hats, b.rows[i].theta_hats);
  for (const auto& r : a.rows) {
    EXPECT_GE(r.metrics.mad, 0.0);
    EXPECT_GE(r.metrics.rp5, 0.0);
    EXPECT_LE(r.metrics.rp5, 1.0);
    const double hits = r.metrics.rp5 * static_cast<double>(r.theta_hats.size());
    EXPECT_NEAR(hits, std::round(hits), 1e-9);
  }
}

TEST(MonteCarlo, CsvLayout) {
  DgpConfig cfg;
  cfg.n = 150;
  const McReport rep = run_monte_carlo(cfg, {Estimator::oracle, Estimator::post_single_1}, 2, 1);
  std::ostringstream os;
  write_mc_csv(rep, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "design,n,sigma_v,sigma_eps,functional,estimator,med_bias,mad,rp5,n_reps,failures");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 4);
  std::ostringstream table;
  write_mc_table(rep, table);
  EXPECT_NE(table.str().find("Oracle"), std::string::npos);
}

TEST(HighDim, ProblemShapes) {
  DgpConfig cfg;
  cfg.design = Design::high_dim;
  cfg.n = 50;
  Rng rng(5);
  const Sample s = generate_sample(cfg, rng);
  const EstimationProblem pr = build_problem(cfg, s, rng, {kAllEstimators.begin(), kAllEstimators.end()});
  EXPECT_EQ(pr.Q.cols(), 100);
  EXPECT_EQ(pr.series_1_controls->cols(), 40);
  EXPECT_EQ(pr.series_2_controls->cols(), 40);
  EXPECT_EQ(pr.K, 3);
}
