#pragma once

#include <cmath>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "splr/error.hpp"

namespace splr {

using matrix = Eigen::MatrixXd;
using vector = Eigen::VectorXd;
using index_t = Eigen::Index;

/// Relative threshold on the triangular-factor diagonal below which a matrix
/// is treated as rank deficient.
inline constexpr double rank_tolerance = 1e-12;

template <class Derived>
void require_finite(const Eigen::DenseBase<Derived>& x, const std::string& what) {
  if (!x.allFinite()) throw invalid_argument(what + ": non-finite entry");
}

/// Copies `values` into a vector, rejecting NaN and Inf.
inline vector make_vector(std::span<const double> values) {
  vector v(static_cast<index_t>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<index_t>(i)] = values[i];
  require_finite(v, "make_vector");
  return v;
}

/// Column-pivoted Householder QR of a tall matrix with an explicit rank
/// check. Serves both the least-squares solve and the projector diagonal.
class least_squares_factor {
public:
  explicit least_squares_factor(const matrix& a) : qr_((require_finite(a, "least squares matrix"), a)) {
    if (a.cols() < 1 || a.rows() < a.cols())
      throw invalid_argument("least squares: need rows >= cols >= 1, got " +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
    const auto diag = qr_.matrixR().diagonal().cwiseAbs();
    const double largest = diag.maxCoeff();
    const double smallest = diag.minCoeff();
    if (!(largest > 0.0) || smallest < rank_tolerance * largest)
      throw rank_deficient("least squares: smallest R diagonal " + std::to_string(smallest) +
                           " below tolerance relative to " + std::to_string(largest));
  }

  vector solve(const vector& b) const {
    if (b.size() != qr_.rows()) throw invalid_argument("least squares: right-hand side size mismatch");
    require_finite(b, "least squares right-hand side");
    return qr_.solve(b);
  }

  /// Diagonal of A (A^T A)^{-1} A^T, i.e. squared row norms of the thin Q factor.
  vector hat_diagonal() const {
    const index_t rows = qr_.rows();
    const index_t cols = qr_.cols();
    matrix thin = qr_.householderQ() * matrix::Identity(rows, cols);
    return thin.rowwise().squaredNorm();
  }

  index_t rows() const { return qr_.rows(); }
  index_t cols() const { return qr_.cols(); }

private:
  Eigen::ColPivHouseholderQR<matrix> qr_;
};

/// argmin_v ||b - A v||_2 for full-column-rank A (throws rank_deficient otherwise).
inline vector solve_least_squares(const matrix& a, const vector& b) {
  return least_squares_factor(a).solve(b);
}

inline vector hat_diagonal(const matrix& a) {
  return least_squares_factor(a).hat_diagonal();
}

/// Minimum-norm least-squares solution; accepts rank-deficient and wide systems.
inline vector solve_minimum_norm(const matrix& a, const vector& b) {
  Eigen::CompleteOrthogonalDecomposition<matrix> cod(a);
  cod.setThreshold(rank_tolerance);
  return cod.solve(b);
}

} // namespace splr
