#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "splr/random.hpp"
#include "splr/solvers.hpp"
#include "splr/tensor.hpp"

namespace splr {

enum class regularization { l1_loo, l2_cv, ols };
enum class update_mode { l1_loo, ols, none };

/// stagnation: stop when ||zhat_l - zhat_{l-1}|| <= stagnation_tol ||zhat_l||.
/// residual: stop when ||z - zhat_l|| <= residual_tol (the literal criterion).
enum class stopping_rule { stagnation, residual };

/// Starting factors of the alternating scheme.
/// correlated: each factor is the unit vector of the basis function most
///   correlated with the residual in that dimension.
/// first_basis: each factor is e_1.
enum class factor_init { correlated, first_basis };

inline std::string to_string(regularization r) {
  switch (r) {
  case regularization::l1_loo: return "l1_loo";
  case regularization::l2_cv: return "l2_cv";
  case regularization::ols: return "ols";
  }
  return "unknown";
}

inline std::string to_string(update_mode u) {
  switch (u) {
  case update_mode::l1_loo: return "l1_loo";
  case update_mode::ols: return "ols";
  case update_mode::none: return "none";
  }
  return "unknown";
}

struct als_config {
  regularization backend = regularization::l1_loo;
  int max_sweeps = 10;
  double stagnation_tol = 1e-6;
  stopping_rule rule = stopping_rule::stagnation;
  double residual_tol = 0.0;
  factor_init init = factor_init::correlated;
  std::uint64_t seed = 0;
  int ridge_folds = 5;

  void check() const {
    if (max_sweeps < 1) throw invalid_argument("als: max_sweeps must be >= 1");
    if (!(stagnation_tol > 0.0)) throw invalid_argument("als: stagnation_tol must be > 0");
    if (ridge_folds < 2) throw invalid_argument("als: ridge_folds must be >= 2");
  }
};

struct greedy_config {
  int max_rank = 10;
  als_config als;
  update_mode update = update_mode::l1_loo;
  int cv_folds = 3;
  std::uint64_t cv_seed = 0;

  void check() const {
    if (max_rank < 1) throw invalid_argument("greedy: max_rank must be >= 1");
    als.check();
  }
};

struct rank_one_result {
  rank_one_term term;  // normalized
  double scale = 0.0;  // signed product of the factor norms removed by normalization
  int sweeps = 0;
  bool random_start = false;
  std::vector<double> residual_norms; // ||z - zhat|| after every inner solve
};

struct fit_report {
  std::vector<double> empirical_error;     // ||z - zhat_m|| / ||z|| per rank
  std::vector<double> cv_errors;           // mean k-fold validation MSE per rank (rank selection only)
  std::size_t selected_rank = 0;           // m_op (rank selection only)
  std::vector<int> sweeps;                 // ALS sweeps per correction
  std::vector<double> term_sparsity;       // rank-one sparsity ratio per correction
  std::vector<std::size_t> effective_rank; // nonzero alphas per rank
  std::string stop_reason;
};

struct greedy_result {
  std::vector<canonical_model> models; // u_1 .. u_m, m <= max_rank
  fit_report report;
};

/// One regularized least-squares solve of the alternating scheme.
inline vector solve_factor(const matrix& phi, const vector& z, const als_config& cfg) {
  switch (cfg.backend) {
  case regularization::ols:
    if (phi.rows() >= phi.cols()) {
      try {
        return solve_least_squares(phi, z);
      } catch (const rank_deficient&) {
      }
    }
    return solve_minimum_norm(phi, z);
  case regularization::l2_cv: {
    if (phi.rows() < 2 * cfg.ridge_folds) return ridge_solve(phi, z, ridge_default_grid(phi).front());
    return ridge_cv(phi, z, ridge_default_grid(phi), cfg.ridge_folds).coefficients;
  }
  case regularization::l1_loo:
    return lasso_loo(phi, z).coefficients;
  }
  return vector();
}

namespace detail {

inline rank_one_result alternating_sweeps(const vector& z, const std::vector<matrix>& values,
                                          std::vector<vector> factors, const als_config& cfg) {
  const auto d = factors.size();
  rank_one_result out;
  vector zhat_prev;
  vector zhat;
  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    out.sweeps = sweep;
    for (std::size_t j = 0; j < d; ++j) {
      vector weights = vector::Ones(z.size());
      for (std::size_t k = 0; k < d; ++k)
        if (k != j) weights.array() *= (values[k] * factors[k]).array();
      const matrix phi = weights.asDiagonal() * values[j];
      vector w = solve_factor(phi, z, cfg);
      zhat = phi * w;
      // a fit that explains nothing but roundoff counts as a collapse
      if (!(w.cwiseAbs().maxCoeff() > 0.0) || !(zhat.norm() > 1e-10 * z.norm()))
        throw degenerate_factor("rank-one correction: factor " + std::to_string(j) + " collapsed to zero");
      out.residual_norms.push_back((z - zhat).norm());
      factors[j] = std::move(w);
    }
    if (cfg.rule == stopping_rule::residual) {
      if ((z - zhat).norm() <= cfg.residual_tol) break;
    } else if (sweep > 1 && (zhat - zhat_prev).norm() <= cfg.stagnation_tol * zhat.norm()) {
      break;
    }
    zhat_prev = zhat;
  }
  out.term.factors = std::move(factors);
  out.scale = normalize_term(out.term);
  if (out.scale == 0.0) throw degenerate_factor("rank-one correction: zero factor");
  return out;
}

} // namespace detail

/// Starting factors per `init`.
inline std::vector<vector> initial_factors(const vector& residual, const std::vector<matrix>& values, factor_init init) {
  std::vector<vector> out;
  for (const auto& v : values) {
    vector e = vector::Zero(v.cols());
    index_t best = 0;
    if (init == factor_init::correlated) {
      const vector corr = v.transpose() * residual;
      const vector norms = v.colwise().norm().transpose();
      double top = -1.0;
      for (index_t i = 0; i < v.cols(); ++i) {
        const double c = norms[i] > 0.0 ? std::abs(corr[i]) / norms[i] : 0.0;
        if (c > top) {
          top = c;
          best = i;
        }
      }
    }
    e[best] = 1.0;
    out.push_back(std::move(e));
  }
  return out;
}

/// Rank-one approximation of `residual` by alternating regularized least
/// squares over the dimensions, starting from `cfg.init`. If that start
/// collapses, one retry is made from seeded random unit-norm factors.
/// `stream` decorrelates the retries of successive corrections.
inline rank_one_result sparse_rank_one(const vector& residual, const std::vector<matrix>& values,
                                       const als_config& cfg, std::uint64_t stream = 0) {
  cfg.check();
  if (residual.size() < 2) throw invalid_argument("sparse_rank_one: need at least two samples");
  require_finite(residual, "sparse_rank_one residual");
  std::vector<vector> init = initial_factors(residual, values, cfg.init);
  try {
    return detail::alternating_sweeps(residual, values, init, cfg);
  } catch (const degenerate_factor&) {
    counter_rng rng(counter_rng::mix(cfg.seed) ^ (0xA5A5A5A5ULL + stream));
    for (auto& f : init) {
      for (index_t i = 0; i < f.size(); ++i) f[i] = rng.normal();
      f.normalize();
    }
    auto out = detail::alternating_sweeps(residual, values, init, cfg);
    out.random_start = true;
    return out;
  }
}

inline rank_one_result sparse_rank_one(const vector& residual, const sample_set& points, const tensor_basis& basis,
                                       const als_config& cfg, std::uint64_t stream = 0) {
  return sparse_rank_one(residual, basis_values(basis, points.points), cfg, stream);
}

/// W with (W)_{qi} = w_i(y^q).
inline matrix term_matrix(const std::vector<rank_one_term>& terms, const std::vector<matrix>& values) {
  const index_t q = values.empty() ? 0 : values[0].rows();
  matrix w(q, static_cast<index_t>(terms.size()));
  for (std::size_t i = 0; i < terms.size(); ++i) w.col(static_cast<index_t>(i)) = term_values(values, terms[i]);
  return w;
}

/// Coefficients alpha of the m normalized terms against z.
/// l1_loo: Lasso path on W with leave-one-out selection (zeros lower the effective rank).
/// ols: dense refit; if W is rank deficient the previous alphas are kept and the new one is 0.
/// none: previous alphas kept, the newest gets its scalar projection on the current residual.
inline vector update_coefficients(const std::vector<rank_one_term>& terms, const std::vector<matrix>& values,
                                  const vector& z, update_mode mode, const vector& previous) {
  if (terms.empty()) throw invalid_argument("update_coefficients: no terms");
  const auto m = static_cast<index_t>(terms.size());
  const matrix w = term_matrix(terms, values);
  auto keep_previous = [&](double last) {
    vector a = vector::Zero(m);
    a.head(std::min<index_t>(previous.size(), m - 1)) = previous.head(std::min<index_t>(previous.size(), m - 1));
    a[m - 1] = last;
    return a;
  };
  switch (mode) {
  case update_mode::l1_loo:
    return lasso_loo(w, z).coefficients;
  case update_mode::ols:
    try {
      return solve_least_squares(w, z);
    } catch (const rank_deficient&) {
      return keep_previous(0.0);
    } catch (const invalid_argument&) {
      return keep_previous(0.0);
    }
  case update_mode::none: {
    vector r = z;
    if (m > 1) r -= w.leftCols(m - 1) * previous.head(m - 1);
    const double nn = w.col(m - 1).squaredNorm();
    return keep_previous(nn > 0.0 ? w.col(m - 1).dot(r) / nn : 0.0);
  }
  }
  return vector();
}

/// Updated greedy construction: u_0 = 0, then for m = 1..M a rank-one
/// correction of the residual followed by an update of all coefficients.
/// Stops early when a correction collapses.
inline greedy_result greedy_fit(const sample_set& points, const vector& z, const tensor_basis& basis,
                                const greedy_config& cfg) {
  cfg.check();
  if (z.size() != points.size()) throw invalid_argument("greedy_fit: value count does not match samples");
  if (z.size() < 2) throw invalid_argument("greedy_fit: need at least two samples");
  require_finite(z, "greedy_fit values");
  const auto values = basis_values(basis, points.points);
  greedy_result out;
  std::vector<rank_one_term> terms;
  vector alphas(0);
  vector zhat = vector::Zero(z.size());
  const double znorm = z.norm();
  out.report.stop_reason = "max_rank";
  for (int m = 1; m <= cfg.max_rank; ++m) {
    rank_one_result corr;
    try {
      corr = sparse_rank_one(z - zhat, values, cfg.als, static_cast<std::uint64_t>(m));
    } catch (const degenerate_factor&) {
      out.report.stop_reason = "degenerate_factor";
      break;
    }
    terms.push_back(corr.term);
    alphas = update_coefficients(terms, values, z, cfg.update, alphas);
    zhat = term_matrix(terms, values) * alphas;

    canonical_model model(basis);
    model.terms = terms;
    model.alphas = alphas;
    out.report.empirical_error.push_back(znorm > 0.0 ? (z - zhat).norm() / znorm : (z - zhat).norm());
    out.report.sweeps.push_back(corr.sweeps);
    out.report.term_sparsity.push_back(term_sparsity(corr.term));
    out.report.effective_rank.push_back(model.effective_rank());
    out.models.push_back(std::move(model));
  }
  return out;
}

/// Fold index per sample: round-robin over a seeded shuffle of {0..Q-1}.
inline std::vector<int> fold_assignment(index_t q, int folds, std::uint64_t seed) {
  const auto perm = seeded_permutation(static_cast<std::size_t>(q), seed);
  std::vector<int> fold(static_cast<std::size_t>(q));
  for (std::size_t i = 0; i < perm.size(); ++i) fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  return fold;
}

/// Model at rank m from a greedy sequence that may have stopped early.
inline canonical_model model_at_rank(const greedy_result& fit, const tensor_basis& basis, std::size_t m) {
  if (fit.models.empty() || m == 0) return canonical_model(basis);
  return fit.models[std::min(m, fit.models.size()) - 1];
}

struct rank_selection {
  std::size_t selected_rank = 0;
  canonical_model model;
  greedy_result full; // greedy sequence on all samples, report carries the CV errors
};

/// CV errors within this fraction of mean(z^2) of the minimum count as equal.
inline constexpr double rank_tie_tolerance = 1e-12;

/// k-fold selection of the rank over the greedy sequence, then the
/// corresponding model from a fit on all samples. Ties go to the smaller rank.
inline rank_selection select_rank(const sample_set& points, const vector& z, const tensor_basis& basis,
                                  const greedy_config& cfg) {
  cfg.check();
  if (cfg.cv_folds < 2) throw invalid_argument("select_rank: cv_folds must be >= 2");
  const index_t q = points.size();
  if (q < 2 * cfg.cv_folds) throw invalid_argument("select_rank: need at least 2 * cv_folds samples");
  const auto fold = fold_assignment(q, cfg.cv_folds, cfg.cv_seed);
  const auto ranks = static_cast<std::size_t>(cfg.max_rank);
  std::vector<double> cv(ranks, 0.0);
  for (int f = 0; f < cfg.cv_folds; ++f) {
    std::vector<index_t> train, valid;
    for (index_t i = 0; i < q; ++i) (fold[static_cast<std::size_t>(i)] == f ? valid : train).push_back(i);
    const sample_set tr = points.subset(train);
    vector ztr(static_cast<index_t>(train.size())), zva(static_cast<index_t>(valid.size()));
    for (std::size_t i = 0; i < train.size(); ++i) ztr[static_cast<index_t>(i)] = z[train[i]];
    for (std::size_t i = 0; i < valid.size(); ++i) zva[static_cast<index_t>(i)] = z[valid[i]];
    matrix vpts(static_cast<index_t>(valid.size()), points.dimension());
    for (std::size_t i = 0; i < valid.size(); ++i) vpts.row(static_cast<index_t>(i)) = points.points.row(valid[i]);
    const auto fit = greedy_fit(tr, ztr, basis, cfg);
    for (std::size_t m = 1; m <= ranks; ++m) {
      const vector pred = evaluate_batch(model_at_rank(fit, basis, m), vpts);
      cv[m - 1] += (zva - pred).squaredNorm() / static_cast<double>(valid.size()) / cfg.cv_folds;
    }
  }
  rank_selection out;
  // errors that differ only by roundoff relative to the data energy are ties;
  // the smallest such rank wins
  const double best = *std::min_element(cv.begin(), cv.end());
  const double tie = best + rank_tie_tolerance * z.squaredNorm() / static_cast<double>(q);
  out.selected_rank = 1;
  while (cv[out.selected_rank - 1] > tie) ++out.selected_rank;
  out.full = greedy_fit(points, z, basis, cfg);
  if (!out.full.models.empty()) out.selected_rank = std::min(out.selected_rank, out.full.models.size());
  out.full.report.cv_errors = cv;
  out.full.report.selected_rank = out.selected_rank;
  out.model = model_at_rank(out.full, basis, out.selected_rank);
  return out;
}

} // namespace splr
