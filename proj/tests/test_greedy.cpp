#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "splr/bench.hpp"

using namespace splr;

namespace {

sample_set uniform_points(int q, int d, double lo, double hi, std::uint64_t seed) {
  return draw_samples(std::vector<interval>(static_cast<std::size_t>(d), interval(lo, hi)), q, seed);
}

greedy_config config_for(regularization r, update_mode u, int rank) {
  greedy_config cfg;
  cfg.max_rank = rank;
  cfg.als.backend = r;
  cfg.update = u;
  return cfg;
}

} // namespace

TEST(SparseRankOne, RecoversExactRankOneTarget) {
  const auto leg = univariate_basis::legendre(3, interval(-1, 1));
  const tensor_basis basis({leg, leg});
  const auto pts = uniform_points(80, 2, -1, 1, 5);
  const double c = 1.7;
  auto target = [&](double y1, double y2) { return c * leg.eval(y1)[2] * leg.eval(y2)[1]; };
  vector z(pts.size());
  for (index_t q = 0; q < pts.size(); ++q) z[q] = target(pts.points(q, 0), pts.points(q, 1));
  for (auto r : {regularization::l1_loo, regularization::l2_cv, regularization::ols}) {
    // OLS and ridge sweeps converge linearly, so stop on a tight stagnation test
    als_config cfg;
    cfg.backend = r;
    cfg.max_sweeps = 50;
    cfg.stagnation_tol = 1e-12;
    const auto res = sparse_rank_one(z, pts, basis, cfg);
    canonical_model m(basis);
    m.terms = {res.term};
    m.alphas = vector::Constant(1, res.scale);
    double worst = 0.0;
    for (int i = 0; i <= 10; ++i)
      for (int j = 0; j <= 10; ++j) {
        const double y1 = -1 + 0.2 * i, y2 = -1 + 0.2 * j;
        worst = std::max(worst, std::abs(evaluate(m, (vector(2) << y1, y2).finished()) - target(y1, y2)));
      }
    EXPECT_LT(worst, 1e-8) << to_string(r);
    for (const auto& f : res.term.factors) EXPECT_NEAR(f.norm(), 1.0, 1e-14);
  }
}

TEST(SparseRankOne, ZeroResidualIsDegenerate) {
  const auto leg = univariate_basis::legendre(2, interval(0, 1));
  const auto pts = uniform_points(30, 2, 0, 1, 6);
  EXPECT_THROW(sparse_rank_one(vector::Zero(30), pts, tensor_basis({leg, leg}), als_config{}), degenerate_factor);
}

TEST(SparseRankOne, CheckerboardFirstTermIsSparse) {
  const auto pw = univariate_basis::piecewise_legendre(2, 6, interval(0, 1));
  const tensor_basis basis({pw, pw});
  const auto s = draw_evaluated(benchmark_function::checkerboard(), 200, 1);
  const auto res = sparse_rank_one(*s.values, s, basis, als_config{});
  for (const auto& f : res.term.factors) EXPECT_LE((f.array() != 0.0).count(), 6);
}

TEST(SparseRankOne, OlsInnerSolvesAreMonotone) {
  const auto leg = univariate_basis::legendre(4, interval(0, 1));
  const tensor_basis basis({leg, leg, leg});
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = draw_evaluated(benchmark_function::friedman(), 150, seed);
    // friedman in the first three coordinates only is enough for a 3-d fit
    sample_set three;
    three.points = s.points.leftCols(3);
    vector z(s.size());
    for (index_t q = 0; q < s.size(); ++q)
      z[q] = std::sin(3.0 * s.points(q, 0) * s.points(q, 1)) + s.points(q, 2) * s.points(q, 2);
    als_config cfg;
    cfg.backend = regularization::ols;
    const auto res = sparse_rank_one(z, three, basis, cfg);
    for (std::size_t i = 1; i < res.residual_norms.size(); ++i)
      EXPECT_LE(res.residual_norms[i], res.residual_norms[i - 1] + 1e-10);
  }
}

TEST(UpdateCoefficients, Examples) {
  std::mt19937_64 gen(51);
  const auto leg = univariate_basis::legendre(3, interval(0, 1));
  const tensor_basis basis({leg, leg});
  const auto pts = uniform_points(60, 2, 0, 1, 7);
  const auto values = basis_values(basis, pts.points);
  rank_one_term t;
  t.factors = {oracle::random_vector(4, gen), oracle::random_vector(4, gen)};
  normalize_term(t);
  const vector z = oracle::random_vector(60, gen);

  // m = 1, OLS: scalar projection
  const vector w = term_matrix({t}, values).col(0);
  const vector a1 = update_coefficients({t}, values, z, update_mode::ols, vector(0));
  EXPECT_NEAR(a1[0], w.dot(z) / w.squaredNorm(), 1e-10);

  // duplicated term: at most one nonzero
  const vector a2 = update_coefficients({t, t}, values, 3.0 * w + 0.01 * oracle::random_vector(60, gen), update_mode::l1_loo, vector(0));
  EXPECT_LE((a2.array() != 0.0).count(), 1);

  // z orthogonal to the term values
  const vector zp = z - w * (w.dot(z) / w.squaredNorm());
  const vector a3 = update_coefficients({t}, values, zp, update_mode::ols, vector(0));
  EXPECT_NEAR(a3[0], 0.0, 1e-12);

  // none keeps previous alphas and appends the scalar projection of the newest term on the residual
  rank_one_term t2;
  t2.factors = {oracle::random_vector(4, gen), oracle::random_vector(4, gen)};
  normalize_term(t2);
  const vector prev = (vector(1) << 0.5).finished();
  const vector a4 = update_coefficients({t, t2}, values, z, update_mode::none, prev);
  const vector w2 = term_matrix({t2}, values).col(0);
  EXPECT_EQ(a4[0], 0.5);
  EXPECT_NEAR(a4[1], w2.dot(z - 0.5 * w) / w2.squaredNorm(), 1e-10);
}

TEST(GreedyFit, ExactRankOneTargetGivesNormAsAlpha) {
  const auto leg = univariate_basis::legendre(3, interval(0, 1));
  const tensor_basis basis({leg, leg});
  const auto pts = uniform_points(100, 2, 0, 1, 8);
  vector w1 = vector::Zero(4), w2 = vector::Zero(4);
  w1 << 0.5, -1.0, 0.0, 0.25;
  w2 << 1.0, 0.0, 2.0, 0.0;
  const double norm = w1.norm() * w2.norm();
  vector z(100);
  for (index_t q = 0; q < 100; ++q) z[q] = leg.eval(pts.points(q, 0)).dot(w1) * leg.eval(pts.points(q, 1)).dot(w2);
  const auto fit = greedy_fit(pts, z, basis, config_for(regularization::l1_loo, update_mode::l1_loo, 3));
  ASSERT_GE(fit.models.size(), 1u);
  EXPECT_NEAR(std::abs(fit.models[0].alphas[0]), norm, 1e-8);
  EXPECT_LT(fit.report.empirical_error[0], 1e-10);
}

TEST(GreedyFit, OlsUpdateIsMonotone) {
  for (const auto& name : {"friedman", "checkerboard", "rastrigin"}) {
    const auto f = benchmark_function::by_name(name);
    std::vector<univariate_basis> b;
    for (const auto& dom : f.domain) b.push_back(univariate_basis::legendre(3, dom));
    const tensor_basis basis(b);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto s = draw_evaluated(f, 120, seed);
      const auto fit = greedy_fit(s, *s.values, basis, config_for(regularization::ols, update_mode::ols, 5));
      const auto& e = fit.report.empirical_error;
      for (std::size_t m = 1; m < e.size(); ++m) EXPECT_LE(e[m], e[m - 1] + 1e-10) << name << " seed " << seed;
    }
  }
}

TEST(GreedyFit, StoredTermsAreNormalized) {
  const auto pw = univariate_basis::piecewise_legendre(1, 3, interval(0, 1));
  const auto s = draw_evaluated(benchmark_function::checkerboard(), 120, 3);
  const auto fit = greedy_fit(s, *s.values, tensor_basis({pw, pw}), config_for(regularization::l1_loo, update_mode::l1_loo, 4));
  for (const auto& m : fit.models)
    for (const auto& t : m.terms)
      for (const auto& f : t.factors) {
        EXPECT_NEAR(f.norm(), 1.0, 1e-14);
        index_t arg = 0;
        f.cwiseAbs().maxCoeff(&arg);
        EXPECT_GT(f[arg], 0.0);
      }
}

TEST(GreedyFit, Deterministic) {
  const auto pw = univariate_basis::piecewise_legendre(2, 6, interval(0, 1));
  const tensor_basis basis({pw, pw});
  const auto s = draw_evaluated(benchmark_function::checkerboard(), 200, 4);
  greedy_config cfg;
  const auto a = select_rank(s, *s.values, basis, cfg);
  const auto b = select_rank(s, *s.values, basis, cfg);
  EXPECT_EQ(a.selected_rank, b.selected_rank);
  EXPECT_EQ(a.full.report.cv_errors, b.full.report.cv_errors);
  EXPECT_EQ(serialize(a.model), serialize(b.model));
}

TEST(SelectRank, ExactRankTwoInPiecewiseConstants) {
  const auto pw = univariate_basis::piecewise_legendre(0, 6, interval(0, 1));
  const tensor_basis basis({pw, pw});
  const auto s = draw_evaluated(benchmark_function::checkerboard(), 200, 2);
  greedy_config cfg;
  cfg.max_rank = 5;
  const auto sel = select_rank(s, *s.values, basis, cfg);
  EXPECT_EQ(sel.selected_rank, 2u);
  const auto& cv = sel.full.report.cv_errors;
  const double best = *std::min_element(cv.begin(), cv.end());
  EXPECT_LE(cv[sel.selected_rank - 1], best + rank_tie_tolerance * s.values->squaredNorm() / 200.0);
  for (std::size_t m = 0; m + 1 < sel.selected_rank; ++m)
    EXPECT_GT(cv[m], best + rank_tie_tolerance * s.values->squaredNorm() / 200.0);

  cfg.max_rank = 1;
  EXPECT_EQ(select_rank(s, *s.values, basis, cfg).selected_rank, 1u);
}

TEST(SelectRank, FoldsAreBalancedPartition) {
  const auto fold = fold_assignment(200, 3, 9);
  std::vector<int> count(3, 0);
  for (int f : fold) ++count[static_cast<std::size_t>(f)];
  EXPECT_EQ(count[0], 67);
  EXPECT_EQ(count[1], 67);
  EXPECT_EQ(count[2], 66);
  EXPECT_EQ(fold, fold_assignment(200, 3, 9));
}

TEST(GreedyFit, FriedmanRankOneStableAcrossSeeds) {
  const auto leg = univariate_basis::legendre(4, interval(0, 1));
  experiment e;
  e.function = benchmark_function::friedman();
  e.basis = tensor_basis(std::vector<univariate_basis>(5, leg));
  e.samples = sample_rule(1.0, 5, 1, 4, 2);
  e.greedy.max_rank = 1;
  e.select_rank = false;
  const auto s = repetition_study(e, consecutive_seeds(1, 5));
  ASSERT_EQ(s.values.size(), 5u);
  EXPECT_LT(s.max / s.min, 3.0);
}
