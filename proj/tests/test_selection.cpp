#include "pds/estimators.hpp"
#include "pds/montecarlo.hpp"
#include "pds/selection.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace pds;

namespace {

bool subset(const IndexSet& a, const IndexSet& b) { return std::includes(b.begin(), b.end(), a.begin(), a.end()); }

EstimationProblem low_dim_problem(std::uint64_t seed, Index n = 500) {
  DgpConfig cfg;
  cfg.n = n;
  Rng rng(seed);
  const Sample s = generate_sample(cfg, rng);
  return build_problem(cfg, s, rng, {kAllEstimators.begin(), kAllEstimators.end()});
}

}  // namespace

TEST(Selection, UnionInvariants) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const EstimationProblem pr = low_dim_problem(seed);
    const Matrix P = evaluate(DictionarySpec::hermite(pr.K), pr.x);
    const ConditioningDesign cond(pr.Q);
    const SelectionResult sel = double_selection(P, P.cols(), cond, pr.y, LassoConfig{});
    IndexSet expect = sel.rf_set;
    for (const auto& s : sel.fs_sets) {
      EXPECT_TRUE(subset(s, sel.union_set));
      expect = set_union(expect, s);
    }
    EXPECT_TRUE(subset(sel.rf_set, sel.union_set));
    EXPECT_EQ(expect, sel.union_set);
    EXPECT_TRUE(std::is_sorted(sel.union_set.begin(), sel.union_set.end()));
    for (Index j : sel.union_set) {
      EXPECT_GE(j, 0);
      EXPECT_LT(j, pr.Q.cols());
    }
    EXPECT_EQ(sel.fs_coefficients.rows(), pr.Q.cols());
    EXPECT_EQ(sel.fs_coefficients.cols(), P.cols());
  }
}

TEST(Selection, FirstStageTouchesEveryCoordinate) {
  // h drives x through all four z_j; the first stage should pick up each of them.
  int hits = 0;
  const auto terms = tensor_index_set(4, k_cube_root(500));
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const EstimationProblem pr = low_dim_problem(seed);
    const Matrix P = evaluate(DictionarySpec::hermite(pr.K), pr.x);
    const FirstStage fs = first_stage_select(P, pr.Q, LassoConfig{});
    std::vector<bool> touched(4, false);
    for (const auto& s : fs.sets)
      for (Index j : s)
        for (int c = 0; c < 4; ++c)
          if (terms[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] > 0) touched[static_cast<std::size_t>(c)] = true;
    hits += std::all_of(touched.begin(), touched.end(), [](bool b) { return b; });
  }
  EXPECT_GE(hits, 90);
}

TEST(Selection, ReducedFormSingleStrongTerm) {
  int exact = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix Q = oracle::gaussian_matrix(200, 50, rng);
    const Vector y = 5.0 * Q.col(3) + 0.1 * oracle::gaussian_vector(200, rng);
    const ReducedForm rf = reduced_form_select(Q, y, LassoConfig{});
    exact += rf.set == IndexSet{3};
  }
  EXPECT_GE(exact, 95);
}

TEST(Selection, IndependentTargetsSelectNothing) {
  std::mt19937_64 rng(8);
  const Matrix Q = oracle::gaussian_matrix(300, 20, rng);
  const Matrix P = oracle::gaussian_matrix(300, 3, rng);
  LassoConfig cfg;
  cfg.c = 5.0;
  const FirstStage fs = first_stage_select(P, Q, cfg);
  for (const auto& s : fs.sets) EXPECT_TRUE(s.empty());
}

TEST(Selection, ExactTargetIsSelected) {
  std::mt19937_64 rng(4);
  const Matrix Q = oracle::gaussian_matrix(100, 15, rng);
  const ReducedForm rf = reduced_form_select(Q, Vector(Q.col(1)), LassoConfig{});
  EXPECT_TRUE(std::find(rf.set.begin(), rf.set.end(), 1) != rf.set.end());
}

TEST(Selection, DoubleContainsSingleAndFitsBetter) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const EstimationProblem pr = low_dim_problem(seed);
    EstimatorRunner runner(pr, LassoConfig{});
    const EstimatorResult d = runner.run(Estimator::post_double);
    const EstimatorResult s1 = runner.run(Estimator::post_single_1);
    EXPECT_TRUE(subset(s1.fit.selected, d.fit.selected));
    EXPECT_EQ(s1.fit.selected, d.selection->rf_set);
    EXPECT_LE(d.fit.rss(), s1.fit.rss() * (1 + 1e-12));
  }
}

TEST(PdsFit, SimpleRegression) {
  std::mt19937_64 rng(1);
  const Vector x = oracle::gaussian_vector(40, rng);
  const Vector y = 1.5 + 0.7 * x.array() + 0.1 * oracle::gaussian_vector(40, rng).array();
  const PdsFit fit = pds_fit(Matrix(x), Matrix(40, 3), y, SelectionResult{});
  const double xm = x.mean(), ym = y.mean();
  const double slope = ((x.array() - xm) * (y.array() - ym)).sum() / (x.array() - xm).square().sum();
  EXPECT_NEAR(fit.beta_hat(0), slope, 1e-12);
  EXPECT_NEAR(fit.intercept, ym - slope * xm, 1e-12);
}

TEST(PdsFit, OrthogonalControlsLeaveBetaUnchanged) {
  std::mt19937_64 rng(2);
  const Matrix G = oracle::gaussian_matrix(30, 3, rng);
  Matrix B(30, 4);
  B << Vector::Ones(30), G;
  const Matrix O = Eigen::HouseholderQR<Matrix>(B).householderQ() * Matrix::Identity(30, 4);
  const Matrix P = O.middleCols(1, 2);
  const Matrix Q = O.col(3);
  const Vector y = oracle::gaussian_vector(30, rng);
  SelectionResult sel;
  sel.union_set = {0};
  const PdsFit with = pds_fit(P, Q, y, sel);
  const PdsFit without = pds_fit(P, Q, y, SelectionResult{});
  EXPECT_LT((with.beta_hat - without.beta_hat).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PdsFit, ExactRecoveryAndOrthogonality) {
  std::mt19937_64 rng(3);
  const Matrix P = oracle::gaussian_matrix(60, 3, rng);
  const Matrix Q = oracle::gaussian_matrix(60, 10, rng);
  const Vector y = 2.0 * P.col(0) + 3.0 * Q.col(5);
  SelectionResult sel;
  sel.union_set = {2, 5, 7};
  const PdsFit fit = pds_fit(P, Q, y, sel);
  EXPECT_NEAR(fit.beta_hat(0), 2.0, 1e-8);
  EXPECT_NEAR(fit.beta_hat(1), 0.0, 1e-8);
  EXPECT_NEAR(fit.eta_hat(2), 3.0, 1e-8);  // intercept, Q_2, Q_5, Q_7
  EXPECT_NEAR(fit.intercept, 0.0, 1e-8);
  EXPECT_FALSE(fit.rank_deficient);

  const Vector noisy = y + oracle::gaussian_vector(60, rng);
  const PdsFit f2 = pds_fit(P, Q, noisy, sel);
  EXPECT_LT(std::fabs(f2.residuals.sum()), 1e-8);
  for (Index j = 0; j < P.cols(); ++j) EXPECT_LT(std::fabs(P.col(j).dot(f2.residuals)), 1e-8);
  for (Index j = 0; j < f2.controls.cols(); ++j) EXPECT_LT(std::fabs(f2.controls.col(j).dot(f2.residuals)), 1e-8);
  const Vector rebuilt = noisy.array() - f2.intercept - (P * f2.beta_hat).array() -
                         (f2.controls * f2.eta_hat.tail(3)).array();
  EXPECT_LT((rebuilt - f2.residuals).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PdsFit, RankDeficiencyFlagged) {
  std::mt19937_64 rng(4);
  const Matrix P = oracle::gaussian_matrix(20, 2, rng);
  Matrix Q(20, 1);
  Q.col(0) = P.col(0);
  SelectionResult sel;
  sel.union_set = {0};
  EXPECT_TRUE(pds_fit(P, Q, oracle::gaussian_vector(20, rng), sel).rank_deficient);
}

TEST(KGrid, CubeRootsAndGrid) {
  EXPECT_EQ(k_cube_root(1000), 10);
  EXPECT_EQ(k_cube_root(999), 9);
  EXPECT_EQ(k_cube_root(500), 7);
  EXPECT_EQ(k_fourth_root(625), 5);
  EXPECT_EQ(k_fourth_root(624), 4);
  std::vector<int> want;
  for (int k = 5; k <= 20; ++k) want.push_back(k);
  EXPECT_EQ(k_grid(1000), want);
  EXPECT_EQ(k_grid(500).front(), 3);
  EXPECT_EQ(k_grid(500).back(), 15);
}

TEST(KGrid, BicPlusOneWithClamp) {
  const std::vector<int> grid = k_grid(1000);
  EXPECT_EQ(k_hat_from_bic(5, grid), 6);
  EXPECT_EQ(k_hat_from_bic(20, grid), 20);
}

TEST(ChooseK, SetEstimatorReportsGrid) {
  const EstimationProblem pr = low_dim_problem(3);
  const ConditioningDesign cond(pr.Q);
  const std::vector<int> grid = {3, 4, 5};
  const KChoice kc = choose_k_bic(pr.x, cond, pr.Q, pr.y, grid, LassoConfig{});
  ASSERT_EQ(kc.bic.size(), grid.size());
  const auto best = std::min_element(kc.bic.begin(), kc.bic.end()) - kc.bic.begin();
  EXPECT_EQ(kc.k_bic, grid[static_cast<std::size_t>(best)]);
  EXPECT_EQ(kc.k_hat, std::min(kc.k_bic + 1, 5));
  EXPECT_EQ(kc.fit.beta_hat.size(), kc.k_hat);
  EXPECT_NEAR(bic(kc.fit), kc.bic[static_cast<std::size_t>(kc.k_hat - 3)], 1e-9);
}

TEST(Estimators, OracleRecoversPolynomialG) {
  std::mt19937_64 rng(5);
  EstimationProblem pr;
  pr.x = oracle::gaussian_vector(100, rng);
  pr.K = 3;
  pr.h_true = oracle::gaussian_vector(100, rng);
  const Vector g = 0.5 * pr.x.array() - 0.2 * pr.x.array().cube();
  pr.y = g + *pr.h_true;
  pr.Q = oracle::gaussian_matrix(100, 5, rng);
  EstimatorRunner runner(pr, LassoConfig{});
  const PdsFit fit = runner.run(Estimator::oracle).fit;
  const Vector ghat = (evaluate(DictionarySpec::hermite(3), pr.x) * fit.beta_hat).array() + fit.intercept;
  EXPECT_LT((ghat - g).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Estimators, AllNineRunOnLowDim) {
  const EstimationProblem pr = low_dim_problem(7);
  const auto out = comparison_estimators(pr, {kAllEstimators.begin(), kAllEstimators.end()}, LassoConfig{});
  ASSERT_EQ(out.size(), 9u);
  for (const auto& [e, o] : out) {
    EXPECT_TRUE(o.result.has_value()) << estimator_id(e) << ": " << o.error;
    if (o.result && e != Estimator::post_double_set && e != Estimator::post_double_set_ext)
      EXPECT_EQ(o.result->fit.beta_hat.size(), pr.K);
  }
  const auto& s2 = out.at(Estimator::post_single_2).result->fit;
  EXPECT_EQ(s2.beta_hat.size(), pr.K);
}

TEST(Estimators, MissingInputsAreReportedPerEstimator) {
  EstimationProblem pr = low_dim_problem(9, 200);
  pr.h_true.reset();
  pr.series_1_controls.reset();
  const auto out = comparison_estimators(pr, {Estimator::oracle, Estimator::series_1, Estimator::post_double},
                                         LassoConfig{});
  EXPECT_FALSE(out.at(Estimator::oracle).result);
  EXPECT_FALSE(out.at(Estimator::series_1).result);
  EXPECT_TRUE(out.at(Estimator::post_double).result);
}

TEST(Estimators, DeterministicSelection) {
  const EstimationProblem pr = low_dim_problem(11);
  EstimatorRunner a(pr, LassoConfig{}), b(pr, LassoConfig{});
  const auto ra = a.run(Estimator::post_double_ext);
  const auto rb = b.run(Estimator::post_double_ext);
  EXPECT_EQ(ra.fit.selected, rb.fit.selected);
  EXPECT_EQ(ra.fit.beta_hat, rb.fit.beta_hat);
}
