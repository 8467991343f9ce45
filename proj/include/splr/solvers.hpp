#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "splr/linalg.hpp"

namespace splr {

// Penalized objectives use ||z - Phi v||_2^2 + lambda * L(v), without 1/2 or
// 1/Q factors. For the l1 penalty the stationarity condition reads
// Phi^T (z - Phi v) = (lambda / 2) * sign(v) on the support.

struct path_step {
  vector coefficients;             // Lasso solution at this breakpoint
  std::vector<index_t> active_set; // support of `coefficients`, in order of entry
  double lambda = 0.0;
  double loo_error = std::numeric_limits<double>::infinity();
};

struct regularization_path {
  std::vector<path_step> steps;
  bool empty() const { return steps.empty(); }
  std::size_t size() const { return steps.size(); }
};

struct selected_solution {
  vector coefficients; // OLS refit on the selected support, zeros elsewhere
  std::vector<index_t> active_set;
  double loo_error = std::numeric_limits<double>::infinity();
  std::size_t step_index = 0;
};

/// The response has (numerically) zero spread, so the normalized leave-one-out
/// error is undefined. `fallback` holds the selection made with unnormalized
/// leave-one-out errors.
class constant_response : public error {
public:
  constant_response(const std::string& what, selected_solution fallback)
      : error(what), fallback_(std::move(fallback)) {}
  const selected_solution& fallback() const { return fallback_; }

private:
  selected_solution fallback_;
};

inline vector ols(const matrix& phi, const vector& z) { return solve_least_squares(phi, z); }

// ---------------------------------------------------------------------------
// ridge

/// argmin ||z - Phi v||^2 + lambda ||v||^2 through QR of [Phi; sqrt(lambda) I].
inline vector ridge_solve(const matrix& phi, const vector& z, double lambda) {
  if (lambda < 0.0) throw invalid_argument("ridge: negative lambda");
  if (lambda == 0.0) return solve_least_squares(phi, z);
  const index_t q = phi.rows(), p = phi.cols();
  matrix aug(q + p, p);
  aug.topRows(q) = phi;
  aug.bottomRows(p) = std::sqrt(lambda) * matrix::Identity(p, p);
  vector rhs = vector::Zero(q + p);
  rhs.head(q) = z;
  return aug.householderQr().solve(rhs);
}

/// Ten log-spaced values in [1e-8, 1e2] times the infinity norm of Phi^T Phi.
inline std::vector<double> ridge_default_grid(const matrix& phi) {
  const double scale = std::max((phi.transpose() * phi).cwiseAbs().rowwise().sum().maxCoeff(), 1e-300);
  std::vector<double> grid(10);
  for (int i = 0; i < 10; ++i) grid[static_cast<std::size_t>(i)] = scale * std::pow(10.0, -8.0 + 10.0 * i / 9.0);
  return grid;
}

struct ridge_result {
  vector coefficients;
  double lambda = 0.0;
  std::vector<double> cv_errors; // mean validation MSE per grid entry
};

/// k-fold cross-validated ridge. Row q belongs to fold q mod folds; a grid
/// entry whose training system is singular scores +inf. Ties go to the
/// earliest grid entry. The winner is refit on all rows.
inline ridge_result ridge_cv(const matrix& phi, const vector& z, const std::vector<double>& grid, int folds) {
  if (folds < 2) throw invalid_argument("ridge_cv: folds must be >= 2");
  if (grid.empty()) throw invalid_argument("ridge_cv: empty lambda grid");
  if (phi.rows() != z.size()) throw invalid_argument("ridge_cv: size mismatch");
  const index_t q = phi.rows();
  ridge_result out;
  out.cv_errors.assign(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (grid[g] < 0.0) throw invalid_argument("ridge_cv: negative lambda");
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<index_t> train, valid;
      for (index_t r = 0; r < q; ++r) (r % folds == f ? valid : train).push_back(r);
      if (valid.empty()) continue;
      matrix a(static_cast<index_t>(train.size()), phi.cols());
      vector b(static_cast<index_t>(train.size()));
      for (std::size_t i = 0; i < train.size(); ++i) {
        a.row(static_cast<index_t>(i)) = phi.row(train[i]);
        b[static_cast<index_t>(i)] = z[train[i]];
      }
      vector v;
      try {
        v = ridge_solve(a, b, grid[g]);
      } catch (const error&) {
        total = std::numeric_limits<double>::infinity();
        break;
      }
      double sse = 0.0;
      for (index_t r : valid) {
        const double e = z[r] - phi.row(r).dot(v);
        sse += e * e;
      }
      total += sse / static_cast<double>(valid.size());
    }
    out.cv_errors[g] = total / folds;
  }
  const auto best = std::min_element(out.cv_errors.begin(), out.cv_errors.end()) - out.cv_errors.begin();
  out.lambda = grid[static_cast<std::size_t>(best)];
  out.coefficients = ridge_solve(phi, z, out.lambda);
  return out;
}

// ---------------------------------------------------------------------------
// Lasso path

/// Default path cap: 3 * min(Q - 1, P).
inline std::size_t default_max_steps(index_t rows, index_t cols) {
  return static_cast<std::size_t>(3 * std::max<index_t>(1, std::min(rows - 1, cols)));
}

/// Lasso-modified least angle regression: the exact piecewise-linear path of
/// argmin ||z - Phi v||^2 + lambda ||v||_1 from lambda_max down to 0.
///
/// Breakpoints are recorded in order of decreasing lambda, starting with
/// v = 0. Correlation ties go to the lowest column index. A column that is
/// linearly dependent on the active set is never activated. New variables
/// stop entering once the active set holds min(Q - 1, P) columns; the path
/// then runs to lambda = 0 on that set.
inline regularization_path lars_lasso_path(const matrix& phi, const vector& z, std::size_t max_steps = 0) {
  const index_t q = phi.rows();
  const index_t p = phi.cols();
  if (z.size() != q) throw invalid_argument("lars: size mismatch");
  if (p < 1 || q < 1) throw invalid_argument("lars: empty design");
  require_finite(z, "lars response");
  for (index_t i = 0; i < p; ++i)
    if (!(phi.col(i).squaredNorm() > 0.0))
      throw degenerate_column("lars: column " + std::to_string(i) + " has zero norm");
  if (max_steps == 0) max_steps = default_max_steps(q, p);

  const matrix gram = phi.transpose() * phi;
  const vector phiz = phi.transpose() * z;
  const index_t cap = std::max<index_t>(1, std::min(q - 1, p));

  regularization_path path;
  vector v = vector::Zero(p);
  vector corr = phiz;
  std::vector<index_t> active;
  std::vector<double> sign(static_cast<std::size_t>(p), 0.0);
  std::vector<char> in_active(static_cast<std::size_t>(p), 0), excluded(static_cast<std::size_t>(p), 0);

  index_t first = 0;
  double c_max = -1.0;
  for (index_t i = 0; i < p; ++i)
    if (std::abs(corr[i]) > c_max) {
      c_max = std::abs(corr[i]);
      first = i;
    }
  double c = c_max;
  const double c0 = c_max;
  path.steps.push_back({v, {}, 2.0 * c, std::numeric_limits<double>::infinity()});
  if (!(c0 > 0.0)) {
    path.steps.back().lambda = 0.0;
    return path;
  }
  const double eps = 1e-12 * c0;
  index_t last_dropped = -1;

  auto activate = [&](index_t i) {
    active.push_back(i);
    in_active[static_cast<std::size_t>(i)] = 1;
    sign[static_cast<std::size_t>(i)] = corr[i] >= 0.0 ? 1.0 : -1.0;
  };
  activate(first);

  auto support_of = [&]() {
    std::vector<index_t> s;
    for (index_t i : active)
      if (v[i] != 0.0) s.push_back(i);
    return s;
  };

  while (path.steps.size() < max_steps) {
    // equiangular direction: (Phi_A^T Phi_A) d = s_A, solved through QR of Phi_A
    const auto k = static_cast<index_t>(active.size());
    vector dir_a;
    {
      matrix pa(q, k);
      for (index_t j = 0; j < k; ++j) pa.col(j) = phi.col(active[static_cast<std::size_t>(j)]);
      Eigen::ColPivHouseholderQR<matrix> qr(pa);
      const auto diag = qr.matrixR().diagonal().cwiseAbs();
      if (k > q || diag.minCoeff() < rank_tolerance * diag.maxCoeff()) {
        // newest column is dependent on the others: never use it
        const index_t bad = active.back();
        active.pop_back();
        in_active[static_cast<std::size_t>(bad)] = 0;
        excluded[static_cast<std::size_t>(bad)] = 1;
        if (active.empty()) break;
        continue;
      }
      vector s(k);
      for (index_t j = 0; j < k; ++j) s[j] = sign[static_cast<std::size_t>(active[static_cast<std::size_t>(j)])];
      const auto r = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
      vector t = qr.colsPermutation().transpose() * s;
      r.transpose().solveInPlace(t);
      r.solveInPlace(t);
      dir_a = qr.colsPermutation() * t;
    }
    vector dir = vector::Zero(p);
    for (index_t j = 0; j < k; ++j) dir[active[static_cast<std::size_t>(j)]] = dir_a[j];
    const vector a = gram * dir;

    enum class event { end, join, drop } ev = event::end;
    double gamma = c;
    index_t who = -1;
    if (k < cap) {
      for (index_t i = 0; i < p; ++i) {
        if (in_active[static_cast<std::size_t>(i)] || excluded[static_cast<std::size_t>(i)]) continue;
        for (const double g : {(1.0 - a[i]) > 1e-14 ? (c - corr[i]) / (1.0 - a[i]) : -1.0,
                               (1.0 + a[i]) > 1e-14 ? (c + corr[i]) / (1.0 + a[i]) : -1.0}) {
          // a variable already on the boundary (a correlation tie) joins at
          // zero step; the one just dropped must move away first
          const double lo = i == last_dropped ? eps : -eps;
          if (g > lo && std::max(g, 0.0) < gamma) {
            gamma = std::max(g, 0.0);
            who = i;
            ev = event::join;
          }
        }
      }
    }
    for (index_t i : active) {
      if (dir[i] == 0.0 || v[i] == 0.0) continue;
      const double g = -v[i] / dir[i];
      if (g > eps && g < gamma) {
        gamma = g;
        who = i;
        ev = event::drop;
      }
    }

    const double l1_before = v.lpNorm<1>();
    v += gamma * dir;
    c -= gamma;
    if (ev == event::end) c = 0.0;
    corr = phiz - gram * v;

    last_dropped = -1;
    if (ev == event::drop) {
      last_dropped = who;
      v[who] = 0.0;
      active.erase(std::find(active.begin(), active.end(), who));
      in_active[static_cast<std::size_t>(who)] = 0;
    }
    path_step step{v, support_of(), 2.0 * std::max(c, 0.0), std::numeric_limits<double>::infinity()};
    // zero-length moves (ties, simultaneous events) are merged into the previous breakpoint
    if (step.coefficients.lpNorm<1>() > l1_before)
      path.steps.push_back(std::move(step));
    else if (path.steps.size() > 1)
      path.steps.back() = std::move(step);

    if (ev == event::end || c <= 1e-14 * c0) break;
    if (ev == event::join) activate(who);
    if (active.empty()) {
      // everything dropped: restart from the most correlated admissible column
      index_t best = -1;
      double cm = -1.0;
      for (index_t i = 0; i < p; ++i)
        if (!excluded[static_cast<std::size_t>(i)] && std::abs(corr[i]) > cm) {
          cm = std::abs(corr[i]);
          best = i;
        }
      if (best < 0) break;
      activate(best);
    }
  }
  return path;
}

// ---------------------------------------------------------------------------
// leave-one-out selection

/// Empirical standard deviation with the Q - 1 denominator.
inline double empirical_stddev(const vector& z) {
  if (z.size() < 2) return 0.0;
  const double mean = z.mean();
  return std::sqrt((z.array() - mean).square().sum() / static_cast<double>(z.size() - 1));
}

/// Fast leave-one-out selection along a Lasso path. For every step the
/// support is refit by OLS and scored by
///   eps_j = (1/Q) sum_q ((z_q - zhat_q) / ((1 - h_q) sigma(z)))^2
/// with h_q the projector diagonal. Steps with #A >= Q, a rank-deficient
/// support or h_q > 1 - 1e-10 are skipped (loo_error stays +inf).
/// Fills `path.steps[j].loo_error` and returns the minimizing refit.
inline selected_solution loo_select(regularization_path& path, const matrix& phi, const vector& z) {
  const index_t q = phi.rows();
  if (z.size() != q) throw invalid_argument("loo_select: size mismatch");
  if (path.empty()) throw all_steps_invalid("loo_select: empty path");
  const double sigma = empirical_stddev(z);
  const bool constant = sigma < 1e-14 * std::max(1.0, z.cwiseAbs().maxCoeff());
  const double scale = constant ? 1.0 : sigma;

  selected_solution best;
  bool found = false;
  for (std::size_t j = 0; j < path.steps.size(); ++j) {
    auto& step = path.steps[j];
    step.loo_error = std::numeric_limits<double>::infinity();
    const auto k = static_cast<index_t>(step.active_set.size());
    if (k >= q) continue;
    vector refit = vector::Zero(phi.cols());
    double err = 0.0;
    if (k == 0) {
      err = z.squaredNorm() / (scale * scale) / static_cast<double>(q);
    } else {
      matrix pa(q, k);
      for (index_t i = 0; i < k; ++i) pa.col(i) = phi.col(step.active_set[static_cast<std::size_t>(i)]);
      try {
        const least_squares_factor fac(pa);
        const vector va = fac.solve(z);
        const vector h = fac.hat_diagonal();
        if (h.maxCoeff() > 1.0 - 1e-10) continue;
        const vector resid = z - pa * va;
        err = ((resid.array() / ((1.0 - h.array()) * scale)).square().sum()) / static_cast<double>(q);
        for (index_t i = 0; i < k; ++i) refit[step.active_set[static_cast<std::size_t>(i)]] = va[i];
      } catch (const rank_deficient&) {
        continue;
      }
    }
    step.loo_error = err;
    if (!found || err < best.loo_error) {
      found = true;
      best.coefficients = std::move(refit);
      best.active_set = step.active_set;
      best.loo_error = err;
      best.step_index = j;
    }
  }
  if (!found) throw all_steps_invalid("loo_select: every path step was skipped");
  if (constant) throw constant_response("loo_select: response has zero spread", std::move(best));
  return best;
}

/// Lasso path + leave-one-out selection on (Phi, z). Zero-norm columns are
/// left out of the path and get zero coefficients. A constant response uses
/// the unnormalized fallback selection.
inline selected_solution lasso_loo(const matrix& phi, const vector& z, std::size_t max_steps = 0) {
  std::vector<index_t> keep;
  for (index_t i = 0; i < phi.cols(); ++i)
    if (phi.col(i).squaredNorm() > 0.0) keep.push_back(i);
  selected_solution out;
  if (keep.empty()) {
    out.coefficients = vector::Zero(phi.cols());
    out.loo_error = std::numeric_limits<double>::infinity();
    return out;
  }
  matrix sub(phi.rows(), static_cast<index_t>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) sub.col(static_cast<index_t>(i)) = phi.col(keep[i]);
  auto path = lars_lasso_path(sub, z, max_steps);
  selected_solution sel;
  try {
    sel = loo_select(path, sub, z);
  } catch (const constant_response& e) {
    sel = e.fallback();
  }
  out.coefficients = vector::Zero(phi.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.coefficients[keep[i]] = sel.coefficients[static_cast<index_t>(i)];
  for (index_t i : sel.active_set) out.active_set.push_back(keep[static_cast<std::size_t>(i)]);
  out.loo_error = sel.loo_error;
  out.step_index = sel.step_index;
  return out;
}

} // namespace splr
