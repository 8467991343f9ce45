#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "splr/bench.hpp"

using namespace splr;

namespace {

// rank-2 checkerboard written in the piecewise-constant basis on six cells
canonical_model exact_checkerboard() {
  const auto pw = univariate_basis::piecewise_legendre(0, 6, interval(0, 1));
  canonical_model m(tensor_basis({pw, pw}));
  vector c(6), nc(6);
  c << 1, 0, 1, 0, 1, 0;
  nc = vector::Ones(6) - c;
  rank_one_term a, b;
  a.factors = {c / std::sqrt(6.0), nc / std::sqrt(6.0)};
  b.factors = {nc / std::sqrt(6.0), c / std::sqrt(6.0)};
  m.terms = {a, b};
  m.alphas = vector::Ones(2);
  return m;
}

} // namespace

TEST(Benchmarks, Formulas) {
  const auto f = benchmark_function::friedman();
  const double v = evaluate_benchmark(f, vector::Constant(5, 0.5));
  EXPECT_NEAR(v, 10.0 * std::sin(std::numbers::pi / 4.0) + 5.0 + 2.5, 1e-13);
  EXPECT_NEAR(v, 14.5711, 1e-4);
  EXPECT_EQ(crenel(0.0), 1.0);
  EXPECT_EQ(crenel(0.2), 0.0);
  EXPECT_EQ(crenel(0.4), 1.0);
  EXPECT_EQ(crenel(1.0), 0.0);
  EXPECT_EQ(evaluate_benchmark(benchmark_function::rastrigin(), vector::Zero(2)), 0.0);
  const auto cb = benchmark_function::checkerboard();
  EXPECT_EQ(evaluate_benchmark(cb, (vector(2) << 0.05, 0.05).finished()), 0.0);
  EXPECT_EQ(evaluate_benchmark(cb, (vector(2) << 0.05, 0.25).finished()), 1.0);
  EXPECT_THROW(evaluate_benchmark(cb, (vector(2) << 1.5, 0.2).finished()), out_of_domain);
}

TEST(Benchmarks, RastriginIsSeparable) {
  const auto f = benchmark_function::rastrigin();
  auto g = [](double y) { return 10.0 + y * y - 10.0 * std::cos(2.0 * std::numbers::pi * y); };
  const auto s = draw_samples(f.domain, 50, 3);
  for (index_t q = 0; q < 50; ++q)
    EXPECT_NEAR(evaluate_benchmark(f, s.points.row(q).transpose()), g(s.points(q, 0)) + g(s.points(q, 1)), 1e-12);
}

TEST(Benchmarks, CheckerboardExactlyRankTwo) {
  const auto m = exact_checkerboard();
  const auto f = benchmark_function::checkerboard();
  EXPECT_LT(relative_error(m, f, 1000, 17), 1e-14);
  // direct OLS fit of the known factorization in a richer piecewise space
  const auto pw = univariate_basis::piecewise_legendre(2, 6, interval(0, 1));
  const auto s = draw_evaluated(f, 2 * 18 * 2, 5);
  vector c(6);
  c << 1, 0, 1, 0, 1, 0;
  matrix w(s.size(), 2);
  for (index_t q = 0; q < s.size(); ++q) {
    const double c1 = crenel(s.points(q, 0)), c2 = crenel(s.points(q, 1));
    w(q, 0) = c1 * (1 - c2);
    w(q, 1) = (1 - c1) * c2;
  }
  const vector a = solve_least_squares(w, *s.values);
  EXPECT_LT((w * a - *s.values).norm(), 1e-10);
}

TEST(RelativeError, Examples) {
  const auto f = benchmark_function::friedman();
  const auto leg = univariate_basis::legendre(1, interval(0, 1));
  const canonical_model zero(tensor_basis(std::vector<univariate_basis>(5, leg)));
  EXPECT_NEAR(relative_error(zero, f, 1000, 3), 1.0, 1e-15);
  EXPECT_THROW(relative_error(zero, f, 0, 3), invalid_argument);
  EXPECT_NE(validation_seed(3), 3u);
}

TEST(SampleRule, Examples) {
  EXPECT_EQ(sample_rule(1, 5, 1, 4, 2), 125);
  EXPECT_EQ(sample_rule(1, 5, 1, 4, 1), 25);
  EXPECT_EQ(sample_rule(2.5, 2, 3, 3, 2), 240);
  EXPECT_EQ(sample_rule(0.5, 5, 1, 2, 1), 8);
  EXPECT_THROW(sample_rule(1, 5, 1, 4, 3), invalid_argument);
}

TEST(Sampling, DeterministicAndCentered) {
  const auto f = benchmark_function::rastrigin();
  const auto a = draw_samples(f.domain, 400, 7);
  const auto b = draw_samples(f.domain, 400, 7);
  EXPECT_EQ(a.points, b.points);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto s = draw_samples(f.domain, 400, seed);
    for (index_t k = 0; k < 2; ++k) {
      // five standard errors of a uniform mean on [-4, 4]
      EXPECT_LT(std::abs(s.points.col(k).mean()), 5.0 * (8.0 / std::sqrt(12.0)) / std::sqrt(400.0));
      EXPECT_GE(s.points.col(k).minCoeff(), -4.0);
      EXPECT_LE(s.points.col(k).maxCoeff(), 4.0);
    }
  }
  EXPECT_NE(draw_samples(f.domain, 10, 1).points, draw_samples(f.domain, 10, 2).points);
}

TEST(RepetitionStudy, Aggregation) {
  const auto one = repetition_study([](std::uint64_t s) { return 0.5 * static_cast<double>(s); }, {4});
  EXPECT_EQ(one.mean, 2.0);
  EXPECT_EQ(one.min, 2.0);
  EXPECT_EQ(one.max, 2.0);

  const auto pw = univariate_basis::piecewise_legendre(1, 3, interval(0, 1));
  experiment e;
  e.function = benchmark_function::checkerboard();
  e.basis = tensor_basis({pw, pw});
  e.samples = 60;
  e.greedy.max_rank = 2;
  e.select_rank = false;
  const auto same = repetition_study(e, {5, 5, 5});
  ASSERT_EQ(same.values.size(), 3u);
  EXPECT_EQ(same.min, same.max);
  EXPECT_EQ(run_experiment(e, 5).validation_error, same.mean);

  const auto failing = repetition_study(
      [](std::uint64_t s) -> double {
        if (s == 2) throw std::runtime_error("boom");
        return 1.0;
      },
      {1, 2, 3});
  EXPECT_EQ(failing.values.size(), 2u);
  ASSERT_EQ(failing.failed_seeds.size(), 1u);
  EXPECT_EQ(failing.failed_seeds[0], 2u);
  EXPECT_THROW(repetition_study([](std::uint64_t) { return 0.0; }, {}), invalid_argument);
}

TEST(RepetitionStudy, FriedmanQuadraticRuleFlat) {
  std::vector<double> means;
  for (int p : {2, 4, 6, 8}) {
    experiment e;
    e.function = benchmark_function::friedman();
    e.basis = tensor_basis(std::vector<univariate_basis>(5, univariate_basis::legendre(p, interval(0, 1))));
    e.samples = sample_rule(1.0, 5, 1, p, 2);
    e.greedy.max_rank = 1;
    e.select_rank = false;
    means.push_back(repetition_study(e, consecutive_seeds(1, 11)).mean);
  }
  for (std::size_t i = 1; i < means.size(); ++i) EXPECT_LE(means[i], 2.0 * means[0]);
}

TEST(CustomTable, LookupAndDomain) {
  sample_set t;
  t.points = (matrix(3, 2) << 0, 0, 1, 2, 0.5, 1).finished();
  t.values = (vector(3) << 1, 2, 3).finished();
  const auto f = benchmark_function::custom(t);
  EXPECT_EQ(f.dimension(), 2);
  EXPECT_EQ(f.domain[1].upper, 2.0);
  EXPECT_EQ(evaluate_benchmark(f, (vector(2) << 0.5, 1).finished()), 3.0);
  EXPECT_EQ(draw_evaluated(f, 2, 0).size(), 2);
}
