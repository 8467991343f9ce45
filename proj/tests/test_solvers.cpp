#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "splr/solvers.hpp"

using namespace splr;

namespace {

matrix columns(const matrix& phi, const std::vector<index_t>& cols) {
  matrix out(phi.rows(), static_cast<index_t>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<index_t>(i)) = phi.col(cols[i]);
  return out;
}

matrix orthonormal_design(int q, int p, std::mt19937_64& gen) {
  const matrix a = oracle::random_matrix(q, p, gen);
  Eigen::HouseholderQR<matrix> qr(a);
  return qr.householderQ() * matrix::Identity(q, p);
}

} // namespace

TEST(Ols, Examples) {
  const vector v = ols(matrix::Identity(2, 2), (vector(2) << 5, -1).finished());
  EXPECT_NEAR(v[0], 5.0, 1e-15);
  EXPECT_NEAR(v[1], -1.0, 1e-15);
  EXPECT_NEAR(ols(matrix::Ones(4, 1), (vector(4) << 1, 2, 3, 4).finished())[0], 2.5, 1e-15);
  std::mt19937_64 gen(31);
  const matrix a = oracle::random_matrix(10, 4, gen);
  const vector z = oracle::random_vector(10, gen);
  EXPECT_LT((ols(a, z) - oracle::normal_equations(a, z)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ridge, Examples) {
  const vector v = ridge_solve(matrix::Identity(2, 2), (vector(2) << 2, 2).finished(), 2.0);
  EXPECT_NEAR(v[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(v[1], 2.0 / 3.0, 1e-15);
  std::mt19937_64 gen(32);
  const matrix a = oracle::random_matrix(12, 5, gen);
  const vector z = oracle::random_vector(12, gen);
  EXPECT_LT((ridge_solve(a, z, 1e-12) - ols(a, z)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((ridge_solve(a, z, 0.7) - oracle::ridge(a, z, 0.7)).cwiseAbs().maxCoeff(), 1e-12);
  const auto zero = ridge_cv(a, z, {0.0}, 3);
  EXPECT_LT((zero.coefficients - ols(a, z)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ridge, CrossValidationMatchesBruteForce) {
  std::mt19937_64 gen(33);
  const std::vector<double> grid = {0.01, 0.1, 1.0};
  for (int trial = 0; trial < 10; ++trial) {
    const matrix a = oracle::random_matrix(12, 5, gen);
    const vector z = a * oracle::random_vector(5, gen) + 0.5 * oracle::random_vector(12, gen);
    const int folds = 4;
    std::vector<double> cv;
    for (double lambda : grid) {
      double total = 0.0;
      for (int f = 0; f < folds; ++f) {
        std::vector<int> tr, va;
        for (int r = 0; r < 12; ++r) (r % folds == f ? va : tr).push_back(r);
        matrix at(static_cast<int>(tr.size()), 5);
        vector zt(static_cast<int>(tr.size()));
        for (std::size_t i = 0; i < tr.size(); ++i) {
          at.row(static_cast<int>(i)) = a.row(tr[i]);
          zt[static_cast<int>(i)] = z[tr[i]];
        }
        const vector v = oracle::ridge(at, zt, lambda);
        double sse = 0.0;
        for (int r : va) sse += std::pow(z[r] - a.row(r).dot(v), 2);
        total += sse / static_cast<double>(va.size());
      }
      cv.push_back(total / folds);
    }
    const auto best = static_cast<std::size_t>(std::min_element(cv.begin(), cv.end()) - cv.begin());
    const auto res = ridge_cv(a, z, grid, folds);
    EXPECT_EQ(res.lambda, grid[best]);
    for (std::size_t g = 0; g < grid.size(); ++g) EXPECT_NEAR(res.cv_errors[g], cv[g], 1e-10);
    EXPECT_LT((res.coefficients - oracle::ridge(a, z, grid[best])).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(LarsPath, SinglePredictor) {
  matrix phi(4, 1);
  phi << 1, 2, -1, 0.5;
  const vector z = (vector(4) << 2, 3, -1, 1).finished();
  const auto path = lars_lasso_path(phi, z);
  ASSERT_EQ(path.size(), 2u);
  EXPECT_EQ(path.steps[0].coefficients[0], 0.0);
  EXPECT_NEAR(path.steps[1].coefficients[0], oracle::normal_equations(phi, z)[0], 1e-12);
  EXPECT_NEAR(path.steps[1].lambda, 0.0, 1e-12);
}

TEST(LarsPath, OrthonormalDesignIsSoftThresholding) {
  std::mt19937_64 gen(34);
  for (int trial = 0; trial < 10; ++trial) {
    const matrix phi = orthonormal_design(20, 6, gen);
    const vector z = oracle::random_vector(20, gen);
    const vector c = phi.transpose() * z;
    const auto path = lars_lasso_path(phi, z);
    ASSERT_GE(path.size(), 2u);
    for (std::size_t j = 1; j < path.size(); ++j) EXPECT_LT(path.steps[j].lambda, path.steps[j - 1].lambda);
    for (const auto& st : path.steps)
      for (index_t i = 0; i < 6; ++i)
        EXPECT_NEAR(st.coefficients[i], oracle::soft_threshold(c[i], st.lambda / 2.0), 1e-8);
  }
}

TEST(LarsPath, MatchesCoordinateDescentKktAndMonotone) {
  std::mt19937_64 gen(35);
  for (int trial = 0; trial < 50; ++trial) {
    const matrix phi = oracle::random_matrix(30, 8, gen);
    const vector z = oracle::random_vector(30, gen);
    const auto path = lars_lasso_path(phi, z);
    ASSERT_GE(path.size(), 2u);
    for (std::size_t j = 0; j < path.size(); ++j) {
      const auto& st = path.steps[j];
      // support equals the active set
      std::set<index_t> nz, act(st.active_set.begin(), st.active_set.end());
      for (index_t i = 0; i < 8; ++i)
        if (st.coefficients[i] != 0.0) nz.insert(i);
      EXPECT_EQ(nz, act) << "trial " << trial << " step " << j;
      // KKT: |Phi^T r| = lambda/2 on the support with matching sign, <= lambda/2 elsewhere
      const vector g = phi.transpose() * (z - phi * st.coefficients);
      for (index_t i = 0; i < 8; ++i) {
        if (st.coefficients[i] != 0.0)
          EXPECT_NEAR(g[i], std::copysign(st.lambda / 2.0, st.coefficients[i]), 1e-8);
        else
          EXPECT_LE(std::abs(g[i]), st.lambda / 2.0 + 1e-8);
      }
      const vector ref = st.lambda > 0.0 ? oracle::lasso_cd(phi, z, st.lambda) : oracle::normal_equations(phi, z);
      EXPECT_LT((st.coefficients - ref).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial << " step " << j;
      if (j > 0) EXPECT_GT(st.coefficients.lpNorm<1>(), path.steps[j - 1].coefficients.lpNorm<1>());
    }
  }
}

TEST(LarsPath, ZeroColumnRejected) {
  matrix phi = matrix::Ones(5, 2);
  phi.col(1).setZero();
  EXPECT_THROW(lars_lasso_path(phi, vector::Ones(5)), degenerate_column);
}

TEST(LarsPath, TieGoesToLowestIndex) {
  // columns 0 and 1 equally correlated with z; column 0 must enter first
  matrix phi(4, 2);
  phi << 1, 0, 0, 1, 0, 0, 0, 0;
  const vector z = (vector(4) << 1, 1, 0, 0).finished();
  const auto path = lars_lasso_path(phi, z);
  ASSERT_GE(path.size(), 2u);
  EXPECT_EQ(path.steps[1].active_set.front(), 0);
}

TEST(LooSelect, ExactSingleColumnSelected) {
  std::mt19937_64 gen(36);
  const matrix phi = oracle::random_matrix(12, 4, gen);
  const vector z = 2.5 * phi.col(2);
  auto path = lars_lasso_path(phi, z);
  const auto sel = loo_select(path, phi, z);
  ASSERT_EQ(sel.active_set.size(), 1u);
  EXPECT_EQ(sel.active_set[0], 2);
  EXPECT_NEAR(sel.loo_error, 0.0, 1e-20);
  EXPECT_NEAR(sel.coefficients[2], 2.5, 1e-12);
}

TEST(LooSelect, FastFormulaEqualsExplicitRefits) {
  std::mt19937_64 gen(37);
  std::uniform_int_distribution<int> pdist(1, 8);
  for (int trial = 0; trial < 60; ++trial) {
    const int q = trial < 10 ? 10 : 15;
    const int p = trial < 10 ? 3 : pdist(gen);
    const matrix phi = oracle::random_matrix(q, p, gen);
    const vector z = oracle::random_vector(q, gen);
    auto path = lars_lasso_path(phi, z);
    const auto sel = loo_select(path, phi, z);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& st : path.steps) {
      if (!std::isfinite(st.loo_error)) continue;
      double ref;
      if (st.active_set.empty()) {
        const double mean = z.mean();
        const double var = (z.array() - mean).square().sum() / (q - 1);
        ref = z.squaredNorm() / q / var;
      } else {
        ref = oracle::explicit_loo(columns(phi, st.active_set), z);
      }
      EXPECT_NEAR(st.loo_error, ref, 1e-10 * std::max(1.0, ref));
      best = std::min(best, st.loo_error);
    }
    EXPECT_EQ(sel.loo_error, best);
  }
}

TEST(LooSelect, SupportRecoveryMonteCarlo) {
  int hits = 0;
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 gen(1000 + seed);
    const matrix phi = oracle::random_matrix(20, 15, gen);
    std::vector<index_t> idx(15);
    for (int i = 0; i < 15; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::shuffle(idx.begin(), idx.end(), gen);
    vector truth = vector::Zero(15);
    truth[idx[0]] = 3.0;
    truth[idx[1]] = -2.0;
    truth[idx[2]] = 2.5;
    const vector z = phi * truth + 0.1 * oracle::random_vector(20, gen);
    const auto sel = lasso_loo(phi, z);
    std::set<index_t> got(sel.active_set.begin(), sel.active_set.end());
    hits += got == std::set<index_t>{idx[0], idx[1], idx[2]};
  }
  EXPECT_GE(hits, 8);
}

TEST(LooSelect, SaturatedStepsSkipped) {
  std::mt19937_64 gen(38);
  const matrix phi = oracle::random_matrix(6, 10, gen);
  const vector z = oracle::random_vector(6, gen);
  auto path = lars_lasso_path(phi, z);
  loo_select(path, phi, z);
  for (const auto& st : path.steps)
    if (static_cast<index_t>(st.active_set.size()) >= 6) EXPECT_TRUE(std::isinf(st.loo_error));
}

TEST(LooSelect, ConstantResponse) {
  std::mt19937_64 gen(39);
  const matrix phi = oracle::random_matrix(8, 3, gen);
  const vector z = vector::Constant(8, 2.0);
  auto path = lars_lasso_path(phi, z);
  try {
    loo_select(path, phi, z);
    FAIL() << "expected constant_response";
  } catch (const constant_response& e) {
    EXPECT_EQ(e.fallback().coefficients.size(), 3);
  }
  // lasso_loo resolves the fallback instead of throwing
  EXPECT_NO_THROW(lasso_loo(phi, z));
}
