#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "splr/greedy.hpp"
#include "splr/random.hpp"

namespace splr {

enum class benchmark_kind { friedman, checkerboard, rastrigin, custom };

inline std::string to_string(benchmark_kind k) {
  switch (k) {
  case benchmark_kind::friedman: return "friedman";
  case benchmark_kind::checkerboard: return "checkerboard";
  case benchmark_kind::rastrigin: return "rastrigin";
  case benchmark_kind::custom: return "custom";
  }
  return "unknown";
}

/// 1 on [0,1/6) + 2n/6 and 0 on [1/6,2/6) + 2n/6, n = 0,1,2; x = 1 falls in the last (zero) cell.
inline double crenel(double x) {
  const int cell = std::min(static_cast<int>(std::floor(6.0 * x)), 5);
  return cell % 2 == 0 ? 1.0 : 0.0;
}

struct benchmark_function {
  benchmark_kind kind = benchmark_kind::friedman;
  std::vector<interval> domain;
  std::optional<sample_set> table; // custom kind only

  static benchmark_function friedman() { return {benchmark_kind::friedman, std::vector<interval>(5, interval(0.0, 1.0)), {}}; }
  static benchmark_function checkerboard() { return {benchmark_kind::checkerboard, std::vector<interval>(2, interval(0.0, 1.0)), {}}; }
  static benchmark_function rastrigin() { return {benchmark_kind::rastrigin, std::vector<interval>(2, interval(-4.0, 4.0)), {}}; }

  /// Tabulated function: rows of (y, u(y)) produced elsewhere. The domain is
  /// the bounding box of the points unless given.
  static benchmark_function custom(sample_set rows, std::vector<interval> domain = {}) {
    if (!rows.values) throw invalid_argument("custom benchmark: table has no values column");
    if (domain.empty())
      for (index_t k = 0; k < rows.dimension(); ++k) {
        const double lo = rows.points.col(k).minCoeff(), hi = rows.points.col(k).maxCoeff();
        domain.emplace_back(lo, hi > lo ? hi : lo + 1.0);
      }
    if (static_cast<index_t>(domain.size()) != rows.dimension())
      throw invalid_argument("custom benchmark: domain count does not match table dimension");
    return {benchmark_kind::custom, std::move(domain), std::move(rows)};
  }

  index_t dimension() const { return static_cast<index_t>(domain.size()); }

  static benchmark_function by_name(const std::string& name) {
    if (name == "friedman") return friedman();
    if (name == "checkerboard") return checkerboard();
    if (name == "rastrigin") return rastrigin();
    throw invalid_argument("unknown benchmark '" + name + "'");
  }
};

inline double evaluate_benchmark(const benchmark_function& f, const Eigen::Ref<const vector>& y) {
  if (y.size() != f.dimension()) throw invalid_argument("benchmark: point dimension mismatch");
  for (index_t k = 0; k < y.size(); ++k) {
    const auto& dom = f.domain[static_cast<std::size_t>(k)];
    if (!(y[k] >= dom.lower - domain_slack && y[k] <= dom.upper + domain_slack))
      throw out_of_domain("benchmark: coordinate " + std::to_string(k) + " outside its interval");
  }
  constexpr double pi = std::numbers::pi;
  switch (f.kind) {
  case benchmark_kind::friedman:
    return 10.0 * std::sin(pi * y[0] * y[1]) + 20.0 * (y[2] - 0.5) * (y[2] - 0.5) + 10.0 * y[3] + 5.0 * y[4];
  case benchmark_kind::checkerboard: {
    const double c1 = crenel(y[0]), c2 = crenel(y[1]);
    return c1 * (1.0 - c2) + (1.0 - c1) * c2;
  }
  case benchmark_kind::rastrigin: {
    double s = 20.0;
    for (index_t i = 0; i < y.size(); ++i) s += y[i] * y[i] - 10.0 * std::cos(2.0 * pi * y[i]);
    return s;
  }
  case benchmark_kind::custom: {
    const auto& t = *f.table;
    for (index_t q = 0; q < t.size(); ++q)
      if ((t.points.row(q).transpose() - y).cwiseAbs().maxCoeff() == 0.0) return (*t.values)[q];
    throw invalid_argument("custom benchmark: point is not in the table");
  }
  }
  return 0.0;
}

inline vector evaluate_benchmark_batch(const benchmark_function& f, const matrix& points) {
  vector out(points.rows());
  for (index_t q = 0; q < points.rows(); ++q) out[q] = evaluate_benchmark(f, points.row(q).transpose());
  return out;
}

/// Q points i.i.d. uniform on the box, drawn row by row (coordinate k of
/// sample q is draw q*d + k of the seeded counter stream).
inline sample_set draw_samples(const std::vector<interval>& domain, index_t q, std::uint64_t seed) {
  sample_set s;
  s.seed = seed;
  const auto d = static_cast<index_t>(domain.size());
  s.points.resize(q, d);
  counter_rng rng(seed);
  for (index_t i = 0; i < q; ++i)
    for (index_t k = 0; k < d; ++k) {
      const auto& dom = domain[static_cast<std::size_t>(k)];
      s.points(i, k) = rng.uniform(dom.lower, dom.upper);
    }
  return s;
}

/// Samples with evaluations of f. A custom table is returned as stored (its first q rows).
inline sample_set draw_evaluated(const benchmark_function& f, index_t q, std::uint64_t seed) {
  if (f.kind == benchmark_kind::custom) {
    const auto& t = *f.table;
    if (q >= t.size()) return t;
    std::vector<index_t> rows(static_cast<std::size_t>(q));
    for (index_t i = 0; i < q; ++i) rows[static_cast<std::size_t>(i)] = i;
    return t.subset(rows);
  }
  auto s = draw_samples(f.domain, q, seed);
  s.values = evaluate_benchmark_batch(f, s.points);
  return s;
}

/// Seed of the validation sample paired with a training seed; always differs from it.
inline std::uint64_t validation_seed(std::uint64_t training_seed) {
  std::uint64_t v = counter_rng::mix(training_seed ^ 0x5EED5EED5EED5EEDULL);
  return v == training_seed ? v + 1 : v;
}

/// ||u_m - u||_{Q'} / ||u||_{Q'} on a fresh uniform sample of size q_prime.
inline double relative_error(const canonical_model& model, const benchmark_function& f, index_t q_prime,
                             std::uint64_t seed) {
  if (q_prime < 1) throw invalid_argument("relative_error: q_prime must be >= 1");
  if (f.kind == benchmark_kind::custom) throw invalid_argument("relative_error: needs an analytic function");
  const auto s = draw_samples(f.domain, q_prime, seed);
  const vector u = evaluate_benchmark_batch(f, s.points);
  const double denom = u.norm();
  if (!(denom > 0.0)) throw zero_denominator("relative_error: function vanishes on the validation sample");
  return (evaluate_batch(model, s.points) - u).norm() / denom;
}

/// Q = ceil(c d m (p+1)^alpha).
inline index_t sample_rule(double c, index_t d, index_t m, index_t p, int alpha) {
  if (!(c > 0.0) || d < 1 || m < 1 || p < 0 || (alpha != 1 && alpha != 2))
    throw invalid_argument("sample_rule: need c > 0, d, m >= 1, p >= 0, alpha in {1, 2}");
  const double base = static_cast<double>(p + 1);
  const double q = c * static_cast<double>(d) * static_cast<double>(m) * (alpha == 1 ? base : base * base);
  return static_cast<index_t>(std::ceil(q - 1e-9 * q));
}

// ---------------------------------------------------------------------------
// experiments

/// One fit configuration: function, basis, sample count and greedy settings.
struct experiment {
  benchmark_function function;
  tensor_basis basis;
  index_t samples = 0;
  greedy_config greedy;
  bool select_rank = true;          // k-fold rank selection; otherwise the last model is used
  index_t validation_samples = 1000;
};

struct experiment_result {
  std::uint64_t seed = 0;
  canonical_model model;           // u_{m_op} (or the last model without selection)
  greedy_result fit;               // full-data greedy sequence with report
  std::size_t selected_rank = 0;
  std::vector<double> validation_errors; // epsilon(u_m, u) per rank; empty for custom tables
  double validation_error = std::numeric_limits<double>::quiet_NaN();
};

inline experiment_result run_experiment(const experiment& e, std::uint64_t seed) {
  if (e.basis.dimension() != e.function.dimension())
    throw invalid_argument("experiment: basis dimension does not match the function");
  const auto samples = draw_evaluated(e.function, e.samples, seed);
  experiment_result out;
  out.seed = seed;
  greedy_config cfg = e.greedy;
  if (e.select_rank) {
    auto sel = select_rank(samples, *samples.values, e.basis, cfg);
    out.fit = std::move(sel.full);
    out.model = std::move(sel.model);
    out.selected_rank = sel.selected_rank;
  } else {
    out.fit = greedy_fit(samples, *samples.values, e.basis, cfg);
    out.selected_rank = out.fit.models.size();
    out.model = model_at_rank(out.fit, e.basis, out.selected_rank);
  }
  if (e.function.kind != benchmark_kind::custom) {
    const auto vseed = validation_seed(seed);
    for (const auto& m : out.fit.models) out.validation_errors.push_back(relative_error(m, e.function, e.validation_samples, vseed));
    out.validation_error = relative_error(out.model, e.function, e.validation_samples, vseed);
  }
  return out;
}

struct study_summary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double min = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> values; // successful runs in seed order
  std::vector<std::uint64_t> failed_seeds;
  std::vector<std::string> failures;

  bool ok() const { return !values.empty(); }
};

/// Runs `run(seed)` once per seed and aggregates the returned errors in seed
/// order. Exceptions are recorded per seed and do not abort the study.
inline study_summary repetition_study(const std::function<double(std::uint64_t)>& run,
                                      const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw invalid_argument("repetition_study: need at least one repetition");
  study_summary s;
  for (const auto seed : seeds) {
    try {
      s.values.push_back(run(seed));
    } catch (const std::exception& ex) {
      s.failed_seeds.push_back(seed);
      s.failures.emplace_back(ex.what());
    }
  }
  if (!s.values.empty()) {
    double sum = 0.0;
    for (double v : s.values) sum += v;
    s.mean = sum / static_cast<double>(s.values.size());
    s.min = *std::min_element(s.values.begin(), s.values.end());
    s.max = *std::max_element(s.values.begin(), s.values.end());
  }
  return s;
}

/// Seeds base, base+1, ..., base+R-1.
inline std::vector<std::uint64_t> consecutive_seeds(std::uint64_t base, std::size_t repetitions) {
  std::vector<std::uint64_t> seeds(repetitions);
  for (std::size_t i = 0; i < repetitions; ++i) seeds[i] = base + i;
  return seeds;
}

inline study_summary repetition_study(const experiment& e, const std::vector<std::uint64_t>& seeds) {
  return repetition_study([&](std::uint64_t seed) { return run_experiment(e, seed).validation_error; }, seeds);
}

} // namespace splr
